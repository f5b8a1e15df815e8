#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rgn/sequence.hpp"

namespace rgn {

/// Multivariate Hawkes process with exponential kernel:
/// lambda_y(t) = mu_y + sum_{t_k < t} A[y][y_k] * exp(-decay * (t - t_k)).
/// A[y][y'] is the excitation of type y by an event of type y'.
struct HawkesSpec {
  std::vector<double> mu;
  /// Row-major num_types x num_types.
  std::vector<double> excitation;
  double decay = 1.0;

  [[nodiscard]] std::size_t num_types() const { return mu.size(); }
  [[nodiscard]] double a(std::size_t y, std::size_t source) const {
    return excitation[y * mu.size() + source];
  }
  /// Spectral radius of A / decay.
  [[nodiscard]] double branching_ratio() const;
  /// Throws unless shapes agree, entries are non-negative and the process is
  /// stationary (branching ratio < 1).
  void validate() const;
};

/// lambda(t) = base + amplitude * sin(t).
struct SineRate {
  double base = 1.0;
  double amplitude = 0.5;

  [[nodiscard]] double operator()(double t) const;
  [[nodiscard]] double integral(double t0, double t1) const;
  [[nodiscard]] double bound() const { return base + amplitude; }
};

using RateFunction = std::function<double(double)>;

/// Homogeneous Poisson process with one rate per type (exponential gaps on the
/// pooled rate, marks drawn proportionally to the rates).
EventSequence sample_poisson(std::span<const double> rates, double horizon, std::uint64_t seed);

/// Single-type inhomogeneous Poisson process by thinning against `bound`.
/// Throws if rate(t) > bound at any candidate point.
EventSequence sample_poisson(const RateFunction& rate, double bound, double horizon,
                             std::uint64_t seed);

/// Ogata thinning; the bound is recomputed after every acceptance or rejection.
EventSequence sample_hawkes(const HawkesSpec& spec, double horizon, std::uint64_t seed);

/// Per-type Hawkes intensity at t given events strictly before t.
std::vector<double> hawkes_intensity(const HawkesSpec& spec, const EventSequence& sequence, double t);

/// Exact integral of the total Hawkes intensity over [t0, t1] given the
/// events of `sequence` before t0 (no events may lie inside (t0, t1)).
double hawkes_compensator(const HawkesSpec& spec, const EventSequence& sequence, double t0,
                          double t1);

/// Exact log-likelihoods with closed-form compensators.
double oracle_loglik(std::span<const double> rates, const EventSequence& sequence);
double oracle_loglik(const SineRate& rate, const EventSequence& sequence);
double oracle_loglik(const HawkesSpec& spec, const EventSequence& sequence);

enum class ProcessKind { kPoisson, kSine, kHawkes };

struct GeneratorSpec {
  ProcessKind kind = ProcessKind::kPoisson;
  /// Per-type rates for kPoisson.
  std::vector<double> rates{1.0};
  SineRate sine;
  HawkesSpec hawkes;
  double horizon = 20.0;
  std::size_t num_sequences = 100;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t num_types() const;
};

/// Sequence i is drawn with seed derive_seed(spec.seed, i) and named "seq-<i>".
std::vector<EventSequence> generate_dataset(const GeneratorSpec& spec);

/// Exact log-likelihood of a sequence under the generating process.
double oracle_loglik(const GeneratorSpec& spec, const EventSequence& sequence);

ProcessKind parse_process_kind(const std::string& name);
std::string to_string(ProcessKind kind);

}  // namespace rgn
