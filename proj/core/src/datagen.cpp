#include "rgn/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "rgn/random.hpp"

namespace rgn {

namespace {

std::size_t draw_category(std::mt19937_64& rng, std::span<const double> weights, double total) {
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  // Round-off: fall back to the last category with positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return 0;
}

}  // namespace

double HawkesSpec::branching_ratio() const {
  const std::size_t n = mu.size();
  if (n == 0 || excitation.size() != n * n || !(decay > 0.0)) return INFINITY;
  // Gelfand's formula with repeated squaring: rho = lim ||M^(2^k)||^(1/2^k).
  // Invariant: M^(2^k) = exp(log_norm) * m with max|m| = 1.
  std::vector<double> m(excitation);
  for (double& x : m) x /= decay;
  double log_norm = 0.0;
  double power = 1.0;
  double rho = 0.0;
  for (int k = 0; k < 48; ++k) {
    double norm = 0.0;
    for (double x : m) norm = std::max(norm, std::abs(x));
    if (norm == 0.0) return 0.0;
    for (double& x : m) x /= norm;
    log_norm += std::log(norm);
    rho = std::exp(log_norm / power);
    std::vector<double> sq(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t j = 0; j < n; ++j) sq[i * n + j] += m[i * n + p] * m[p * n + j];
    m = std::move(sq);
    log_norm *= 2.0;
    power *= 2.0;
  }
  return rho;
}

void HawkesSpec::validate() const {
  const std::size_t n = mu.size();
  if (n == 0) throw std::invalid_argument("hawkes: need at least one base rate");
  if (excitation.size() != n * n) {
    throw std::invalid_argument("hawkes: excitation matrix must have " + std::to_string(n * n) +
                                " entries, got " + std::to_string(excitation.size()));
  }
  if (!(decay > 0.0)) throw std::invalid_argument("hawkes: decay must be > 0");
  for (double m : mu) {
    if (!(m >= 0.0)) throw std::invalid_argument("hawkes: base rates must be >= 0");
  }
  for (double a : excitation) {
    if (!(a >= 0.0)) throw std::invalid_argument("hawkes: excitation entries must be >= 0");
  }
  const double rho = branching_ratio();
  if (!(rho < 1.0)) {
    throw std::invalid_argument("hawkes: non-stationary spec, spectral radius of A/decay is " +
                                std::to_string(rho));
  }
}

double SineRate::operator()(double t) const { return base + amplitude * std::sin(t); }

double SineRate::integral(double t0, double t1) const {
  return base * (t1 - t0) + amplitude * (std::cos(t0) - std::cos(t1));
}

EventSequence sample_poisson(std::span<const double> rates, double horizon, std::uint64_t seed) {
  if (rates.empty()) throw std::invalid_argument("poisson: need at least one rate");
  double total = 0.0;
  for (double r : rates) {
    if (!(r >= 0.0)) throw std::invalid_argument("poisson: rates must be >= 0");
    total += r;
  }
  if (!(total > 0.0)) throw std::invalid_argument("poisson: total rate must be > 0");
  EventSequence seq;
  seq.horizon = horizon;
  std::mt19937_64 rng(seed);
  double t = 0.0;
  while (true) {
    t += exponential(rng, total);
    if (t > horizon) break;
    seq.events.push_back({t, draw_category(rng, rates, total)});
  }
  return seq;
}

EventSequence sample_poisson(const RateFunction& rate, double bound, double horizon,
                             std::uint64_t seed) {
  if (!(bound > 0.0)) throw std::invalid_argument("poisson: rate bound must be > 0");
  EventSequence seq;
  seq.horizon = horizon;
  std::mt19937_64 rng(seed);
  double t = 0.0;
  while (true) {
    t += exponential(rng, bound);
    if (t > horizon) break;
    const double r = rate(t);
    if (r > bound) {
      throw std::invalid_argument("poisson: rate " + std::to_string(r) + " at t=" +
                                  std::to_string(t) + " exceeds bound " + std::to_string(bound));
    }
    if (uniform01(rng) * bound < r) seq.events.push_back({t, 0});
  }
  return seq;
}

EventSequence sample_hawkes(const HawkesSpec& spec, double horizon, std::uint64_t seed) {
  spec.validate();
  const std::size_t n = spec.num_types();
  EventSequence seq;
  seq.horizon = horizon;
  std::mt19937_64 rng(seed);
  // excite[y] = sum_k A[y][y_k] exp(-decay (t - t_k)) at the current time t.
  std::vector<double> excite(n, 0.0);
  std::vector<double> lam(n, 0.0);
  double t = 0.0;
  while (true) {
    double bound = 0.0;
    for (std::size_t y = 0; y < n; ++y) bound += spec.mu[y] + excite[y];
    if (!(bound > 0.0)) break;
    const double w = exponential(rng, bound);
    t += w;
    if (t > horizon) break;
    const double decay = std::exp(-spec.decay * w);
    double total = 0.0;
    for (std::size_t y = 0; y < n; ++y) {
      excite[y] *= decay;
      lam[y] = spec.mu[y] + excite[y];
      total += lam[y];
    }
    if (uniform01(rng) * bound <= total) {
      const std::size_t y = draw_category(rng, lam, total);
      seq.events.push_back({t, y});
      for (std::size_t r = 0; r < n; ++r) excite[r] += spec.a(r, y);
    }
  }
  return seq;
}

std::vector<double> hawkes_intensity(const HawkesSpec& spec, const EventSequence& sequence,
                                     double t) {
  std::vector<double> lam(spec.mu);
  for (const Event& e : sequence.events) {
    if (!(e.time < t)) break;
    const double k = std::exp(-spec.decay * (t - e.time));
    for (std::size_t y = 0; y < lam.size(); ++y) lam[y] += spec.a(y, e.type) * k;
  }
  return lam;
}

double hawkes_compensator(const HawkesSpec& spec, const EventSequence& sequence, double t0,
                          double t1) {
  double mu_total = 0.0;
  for (double m : spec.mu) mu_total += m;
  double value = mu_total * (t1 - t0);
  for (const Event& e : sequence.events) {
    if (!(e.time <= t0)) break;
    double column = 0.0;
    for (std::size_t y = 0; y < spec.num_types(); ++y) column += spec.a(y, e.type);
    value += column / spec.decay *
             (std::exp(-spec.decay * (t0 - e.time)) - std::exp(-spec.decay * (t1 - e.time)));
  }
  return value;
}

double oracle_loglik(std::span<const double> rates, const EventSequence& sequence) {
  double total = 0.0;
  for (double r : rates) total += r;
  double ll = -total * sequence.horizon;
  for (const Event& e : sequence.events) ll += std::log(rates[e.type]);
  return ll;
}

double oracle_loglik(const SineRate& rate, const EventSequence& sequence) {
  double ll = -rate.integral(0.0, sequence.horizon);
  for (const Event& e : sequence.events) ll += std::log(rate(e.time));
  return ll;
}

double oracle_loglik(const HawkesSpec& spec, const EventSequence& sequence) {
  const std::size_t n = spec.num_types();
  std::vector<double> excite(n, 0.0);
  double ll = 0.0;
  double last = 0.0;
  for (const Event& e : sequence.events) {
    const double k = std::exp(-spec.decay * (e.time - last));
    for (double& x : excite) x *= k;
    ll += std::log(spec.mu[e.type] + excite[e.type]);
    for (std::size_t y = 0; y < n; ++y) excite[y] += spec.a(y, e.type);
    last = e.time;
  }
  double mu_total = 0.0;
  for (double m : spec.mu) mu_total += m;
  double compensator = mu_total * sequence.horizon;
  for (const Event& e : sequence.events) {
    double column = 0.0;
    for (std::size_t y = 0; y < n; ++y) column += spec.a(y, e.type);
    compensator += column / spec.decay * (1.0 - std::exp(-spec.decay * (sequence.horizon - e.time)));
  }
  return ll - compensator;
}

std::size_t GeneratorSpec::num_types() const {
  switch (kind) {
    case ProcessKind::kPoisson: return rates.size();
    case ProcessKind::kSine: return 1;
    case ProcessKind::kHawkes: return hawkes.num_types();
  }
  return 0;
}

std::vector<EventSequence> generate_dataset(const GeneratorSpec& spec) {
  if (!(spec.horizon >= 0.0)) throw std::invalid_argument("horizon must be >= 0");
  if (spec.kind == ProcessKind::kHawkes) spec.hawkes.validate();
  std::vector<EventSequence> out;
  out.reserve(spec.num_sequences);
  for (std::size_t i = 0; i < spec.num_sequences; ++i) {
    const std::uint64_t seed = derive_seed(spec.seed, i);
    EventSequence seq;
    switch (spec.kind) {
      case ProcessKind::kPoisson: seq = sample_poisson(spec.rates, spec.horizon, seed); break;
      case ProcessKind::kSine:
        seq = sample_poisson(spec.sine, spec.sine.bound(), spec.horizon, seed);
        break;
      case ProcessKind::kHawkes: seq = sample_hawkes(spec.hawkes, spec.horizon, seed); break;
    }
    seq.id = "seq-" + std::to_string(i);
    out.push_back(std::move(seq));
  }
  return out;
}

double oracle_loglik(const GeneratorSpec& spec, const EventSequence& sequence) {
  switch (spec.kind) {
    case ProcessKind::kPoisson: return oracle_loglik(spec.rates, sequence);
    case ProcessKind::kSine: return oracle_loglik(spec.sine, sequence);
    case ProcessKind::kHawkes: return oracle_loglik(spec.hawkes, sequence);
  }
  return 0.0;
}

ProcessKind parse_process_kind(const std::string& name) {
  if (name == "poisson") return ProcessKind::kPoisson;
  if (name == "sine") return ProcessKind::kSine;
  if (name == "hawkes") return ProcessKind::kHawkes;
  throw std::invalid_argument("unknown process '" + name + "' (expected poisson, sine or hawkes)");
}

std::string to_string(ProcessKind kind) {
  switch (kind) {
    case ProcessKind::kPoisson: return "poisson";
    case ProcessKind::kSine: return "sine";
    case ProcessKind::kHawkes: return "hawkes";
  }
  return "unknown";
}

}  // namespace rgn
