#include "rgn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "json.hpp"
#include "rgn/random.hpp"

namespace rgn {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t argmax(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] > t[best]) best = i;
  }
  return best;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<StepOutput> run_sequence(ad::Graph& g, const RecurrentGraphNetwork& model,
                                     const EventSequence& sequence, bool train,
                                     std::mt19937_64& rng) {
  std::vector<StepOutput> anchors;
  anchors.reserve(sequence.size() + 1);
  anchors.push_back(model.initial_output(g));
  LiveNodeState state = model.attach(g, model.init_state());
  for (const Event& e : sequence.events) {
    auto result = model.step(g, state, e, train, rng);
    state = std::move(result.state);
    anchors.push_back(std::move(result.output));
  }
  return anchors;
}

Metrics evaluate_metrics(const RecurrentGraphNetwork& model, std::span<const EventSequence> sequences,
                         const MCIntegralConfig& mc) {
  mc.validate();
  Metrics m;
  double sq_error = 0.0;
  std::size_t correct = 0;
  LogClampCounter clamps;
  for (const EventSequence& seq : sequences) {
    ad::Graph g(&model.params(), ad::GradMode::kDisabled);
    std::mt19937_64 rng(derive_seed(mc.seed, fnv1a(seq.id)));
    const auto anchors = run_sequence(g, model, seq, /*train=*/false, rng);
    double ll = 0.0;
    for (const StepOutput& anchor : anchors) {
      AnchorTerms terms = score_anchor(anchor, seq, model.config(), mc.samples, rng, &clamps);
      if (terms.log_intensity.valid()) ll += terms.log_intensity.item();
      if (terms.compensator.valid()) ll -= terms.compensator.item();
    }
    for (std::size_t j = 1; j < seq.size(); ++j) {
      if (argmax(anchors[j].type_logits.value()) == seq.events[j].type) ++correct;
      const double err = anchors[j].time_pred.item() - seq.events[j].time;
      sq_error += err * err;
      ++m.predictions;
    }
    m.log_likelihood += ll;
    m.events += seq.size();
    ++m.sequences;
  }
  m.clamped_log_intensities = clamps.clamped;
  m.nll_per_event = m.events ? -m.log_likelihood / static_cast<double>(m.events) : 0.0;
  m.ll_per_sequence = m.sequences ? m.log_likelihood / static_cast<double>(m.sequences) : 0.0;
  m.type_accuracy = m.predictions ? static_cast<double>(correct) / static_cast<double>(m.predictions) : 0.0;
  m.time_rmse = m.predictions ? std::sqrt(sq_error / static_cast<double>(m.predictions)) : 0.0;
  return m;
}

RescaledInterarrivals rescale(const IntervalIntensity& intensity, const EventSequence& sequence,
                              std::size_t steps) {
  if (steps < 1) throw std::invalid_argument("rescale needs at least one quadrature step");
  auto integrate = [&](std::size_t j, double start, double end) {
    const double h = (end - start) / static_cast<double>(steps);
    // Trapezoid mean accumulated as offsets from the left value.
    const double left = intensity(j, start);
    double offsets = 0.5 * (intensity(j, end) - left);
    for (std::size_t k = 1; k < steps; ++k) {
      offsets += intensity(j, start + h * static_cast<double>(k)) - left;
    }
    return (left + offsets / static_cast<double>(steps)) * (end - start);
  };
  RescaledInterarrivals out;
  out.quadrature_steps = steps;
  out.z.reserve(sequence.size());
  double start = 0.0;
  for (std::size_t j = 0; j < sequence.size(); ++j) {
    const double end = sequence.events[j].time;
    out.z.push_back(integrate(j, start, end));
    start = end;
  }
  if (sequence.horizon > start) out.tail = integrate(sequence.size(), start, sequence.horizon);
  return out;
}

RescaledInterarrivals rescale(const RecurrentGraphNetwork& model, const EventSequence& sequence,
                              std::size_t steps) {
  ad::Graph g(&model.params(), ad::GradMode::kDisabled);
  std::mt19937_64 rng(0);
  const auto anchors = run_sequence(g, model, sequence, /*train=*/false, rng);
  const ModelConfig& config = model.config();
  return rescale(
      [&](std::size_t j, double t) { return total_intensity_value(anchors[j], t, config); },
      sequence, steps);
}

RescaledInterarrivals rescale(const GeneratorSpec& truth, const EventSequence& sequence,
                              std::size_t steps) {
  switch (truth.kind) {
    case ProcessKind::kPoisson: {
      double total = 0.0;
      for (double r : truth.rates) total += r;
      return rescale([total](std::size_t, double) { return total; }, sequence, steps);
    }
    case ProcessKind::kSine:
      return rescale([&](std::size_t, double t) { return truth.sine(t); }, sequence, steps);
    case ProcessKind::kHawkes:
      return rescale(
          [&](std::size_t, double t) {
            double total = 0.0;
            for (double v : hawkes_intensity(truth.hawkes, sequence, t)) total += v;
            return total;
          },
          sequence, steps);
  }
  return {};
}

GofReport ks_exp1(std::span<const double> z) {
  if (z.empty()) throw std::invalid_argument("ks_exp1 needs at least one value");
  std::vector<double> sorted(z.begin(), z.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  GofReport r;
  r.sample_size = sorted.size();
  r.critical_5 = 1.358 / std::sqrt(n);
  r.critical_1 = 1.628 / std::sqrt(n);
  r.pp.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double model_cdf = -std::expm1(-std::max(sorted[i], 0.0));
    const double upper = static_cast<double>(i + 1) / n;
    const double lower = static_cast<double>(i) / n;
    r.ks_statistic = std::max({r.ks_statistic, upper - model_cdf, model_cdf - lower});
    r.pp.push_back({model_cdf, upper});
  }
  return r;
}

GofReport goodness_of_fit(std::span<const RescaledInterarrivals> per_sequence) {
  std::vector<double> pooled;
  std::vector<double> per_d;
  // Sequences are laid end to end on the rescaled axis: each censored tail
  // joins the first interval of the next sequence.
  double carry = 0.0;
  for (const auto& r : per_sequence) {
    if (r.z.empty()) {
      carry += r.tail;
      continue;
    }
    pooled.push_back(carry + r.z.front());
    pooled.insert(pooled.end(), r.z.begin() + 1, r.z.end());
    carry = r.tail;
    per_d.push_back(ks_exp1(r.z).ks_statistic);
  }
  GofReport report = ks_exp1(pooled);
  std::sort(per_d.begin(), per_d.end());
  if (!per_d.empty()) {
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) report.per_sequence_d_quantiles.push_back(quantile_sorted(per_d, q));
  }
  return report;
}

void write_pp_csv(std::ostream& out, const GofReport& report) {
  out << "model_cdf,empirical_cdf\n";
  out.precision(17);
  for (const PPPoint& p : report.pp) out << p.model_cdf << ',' << p.empirical_cdf << '\n';
}

std::string gof_report_json(const GofReport& report) {
  nlohmann::json j = {{"sample_size", report.sample_size},
                      {"ks_statistic", report.ks_statistic},
                      {"critical_5", report.critical_5},
                      {"critical_1", report.critical_1},
                      {"passes_5", report.passes_5()},
                      {"passes_1", report.passes_1()},
                      {"per_sequence_d_quantiles", report.per_sequence_d_quantiles}};
  return j.dump(2);
}

std::size_t attention_dump(const RecurrentGraphNetwork& model, const EventSequence& sequence,
                           std::ostream& out) {
  ad::Graph g(&model.params(), ad::GradMode::kDisabled);
  std::mt19937_64 rng(0);
  const auto anchors = run_sequence(g, model, sequence, /*train=*/false, rng);
  const ModelConfig& c = model.config();
  const std::size_t ny = c.num_types;
  out << "event_index,layer,head,receiver,sender,weight\n";
  out.precision(17);
  std::size_t rows = 0;
  for (std::size_t j = 1; j < anchors.size(); ++j) {
    const auto& att = anchors[j].attention;
    for (std::size_t idx = 0; idx < att.size(); ++idx) {
      const std::size_t layer = idx / c.num_heads;
      const std::size_t head = idx % c.num_heads;
      for (std::size_t r = 0; r < ny; ++r) {
        for (std::size_t s = 0; s < ny; ++s) {
          out << (j - 1) << ',' << layer << ',' << head << ',' << r << ',' << s << ','
              << att[idx].at(r, s) << '\n';
          ++rows;
        }
      }
    }
  }
  return rows;
}

ComplexityReport complexity_report(const ModelConfig& config, std::size_t sequence_length) {
  config.validate();
  const std::uint64_t d = config.hidden_dim;
  const std::uint64_t de = config.edge_dim;
  const std::uint64_t ny = config.num_types;
  const std::uint64_t heads = config.has_attention() ? config.num_heads : 0;
  const std::uint64_t layers = config.has_attention() ? config.num_gat_layers : 0;

  ComplexityReport r;
  r.sequence_length = sequence_length;
  r.attention_scores_per_event = layers * heads * ny * ny;
  r.attention_scores = r.attention_scores_per_event * sequence_length;

  // Matrix-vector products count 2*m*n; elementwise ops count one per entry.
  std::uint64_t f = 0;
  f += 2 * d;                       // embedding
  f += 2 * (4 * d) * d * 2 + 4 * d;  // LSTM W x + U v + b
  f += 4 * d + 3 * d;               // gate nonlinearities, cell, output
  f += 5 * d;                       // layer norm
  const std::uint64_t value_proj = config.tie_value_projection ? 0 : 2 * ny * d * de;
  const std::uint64_t per_head = 2 * ny * d * de + value_proj  // projections
                                 + 2 * ny * de * 2 + ny        // score halves + bias
                                 + 2 * ny * ny                 // outer sum + LeakyReLU
                                 + 3 * ny * ny                 // softmax
                                 + 2 * ny * ny * de;           // weighted aggregation
  const std::uint64_t per_layer = 5 * ny * d + heads * per_head + 2 * ny * (heads * de) * d + ny * d +
                                  ny * d;  // norm, heads, output projection, bias, residual
  f += layers * per_layer;
  f += 2 * d * (ny * d) + 2 * d;  // global update + ReLU
  f += 2 * d * ny + ny + 2 * d + 2 + 2 * d * ny + ny;  // type, time, intensity heads
  r.flops_per_event = f;
  r.flops = f * sequence_length;

  RecurrentGraphNetwork probe(config, 0);
  r.parameters = probe.params().total_elements();
  return r;
}

std::string complexity_report_json(const ComplexityReport& report) {
  nlohmann::json j = {{"sequence_length", report.sequence_length},
                      {"attention_scores", report.attention_scores},
                      {"attention_scores_per_event", report.attention_scores_per_event},
                      {"flops", report.flops},
                      {"flops_per_event", report.flops_per_event},
                      {"parameters", report.parameters}};
  return j.dump(2);
}

std::uint64_t measured_attention_scores(const RecurrentGraphNetwork& model,
                                        const EventSequence& sequence) {
  ad::Graph g(&model.params(), ad::GradMode::kDisabled);
  std::mt19937_64 rng(0);
  const auto anchors = run_sequence(g, model, sequence, /*train=*/false, rng);
  std::uint64_t total = 0;
  for (const auto& a : anchors) total += a.attention_scores;
  return total;
}

}  // namespace rgn
