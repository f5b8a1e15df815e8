#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "rgn/autodiff.hpp"
#include "rgn/datagen.hpp"
#include "rgn/model.hpp"
#include "rgn/objectives.hpp"
#include "rgn/sequence.hpp"

namespace rgn {

/// Runs the model over a whole sequence and returns the empty-history anchor
/// followed by one output per event, all recorded on `g`.
std::vector<StepOutput> run_sequence(ad::Graph& g, const RecurrentGraphNetwork& model,
                                     const EventSequence& sequence, bool train,
                                     std::mt19937_64& rng);

struct Metrics {
  double nll_per_event = 0.0;
  double type_accuracy = 0.0;
  double time_rmse = 0.0;
  /// Sum of sequence log-likelihoods.
  double log_likelihood = 0.0;
  double ll_per_sequence = 0.0;
  std::size_t sequences = 0;
  std::size_t events = 0;
  /// Number of next-event predictions scored (events j = 2..L).
  std::size_t predictions = 0;
  std::size_t clamped_log_intensities = 0;
};

/// Evaluation-mode metrics. The compensator uses the MC estimator with a
/// per-sequence stream derived from `mc.seed` and the sequence id, so results
/// do not depend on the order of `sequences`.
Metrics evaluate_metrics(const RecurrentGraphNetwork& model, std::span<const EventSequence> sequences,
                         const MCIntegralConfig& mc);

/// Total intensity on inter-event interval j (j = 0 is (0, t_1]).
using IntervalIntensity = std::function<double(std::size_t interval, double t)>;

struct RescaledInterarrivals {
  std::vector<double> z;
  /// Compensator of the censored interval (t_L, T].
  double tail = 0.0;
  std::size_t quadrature_steps = 0;
};

/// z_j = integral of the total intensity over (t_{j-1}, t_j] by composite
/// trapezoid with `steps` subintervals.
RescaledInterarrivals rescale(const IntervalIntensity& intensity, const EventSequence& sequence,
                              std::size_t steps = 100);
/// Rescaling under the model's intensity, each interval anchored at the
/// preceding event.
RescaledInterarrivals rescale(const RecurrentGraphNetwork& model, const EventSequence& sequence,
                              std::size_t steps = 100);
/// Rescaling under the generating process.
RescaledInterarrivals rescale(const GeneratorSpec& truth, const EventSequence& sequence,
                              std::size_t steps = 100);

struct PPPoint {
  double model_cdf = 0.0;
  double empirical_cdf = 0.0;
};

struct GofReport {
  std::size_t sample_size = 0;
  double ks_statistic = 0.0;
  double critical_5 = 0.0;
  double critical_1 = 0.0;
  /// Sorted by model CDF.
  std::vector<PPPoint> pp;
  /// min, 25%, 50%, 75%, max of per-sequence KS statistics (empty if not computed).
  std::vector<double> per_sequence_d_quantiles;

  [[nodiscard]] bool passes_5() const { return ks_statistic < critical_5; }
  [[nodiscard]] bool passes_1() const { return ks_statistic < critical_1; }
};

/// Kolmogorov-Smirnov test of a sample against Exp(1). Needs n >= 1.
GofReport ks_exp1(std::span<const double> z);

/// One KS test on the pooled z values and per-sequence KS quantiles. The
/// rescaled sequences are concatenated, so the censored tail of each sequence
/// is added to the first z of the next one.
GofReport goodness_of_fit(std::span<const RescaledInterarrivals> per_sequence);

void write_pp_csv(std::ostream& out, const GofReport& report);
std::string gof_report_json(const GofReport& report);

/// CSV rows (event_index, layer, head, receiver, sender, weight) with header.
/// Returns the number of data rows written.
std::size_t attention_dump(const RecurrentGraphNetwork& model, const EventSequence& sequence,
                           std::ostream& out);

struct ComplexityReport {
  /// One stored score per directed edge per head per layer per event.
  std::uint64_t attention_scores = 0;
  std::uint64_t attention_scores_per_event = 0;
  /// Forward floating-point operations from per-op formulas.
  std::uint64_t flops = 0;
  std::uint64_t flops_per_event = 0;
  std::size_t sequence_length = 0;
  std::size_t parameters = 0;
};

ComplexityReport complexity_report(const ModelConfig& config, std::size_t sequence_length);
std::string complexity_report_json(const ComplexityReport& report);

/// Attention scores actually computed while running the model over `sequence`.
std::uint64_t measured_attention_scores(const RecurrentGraphNetwork& model,
                                        const EventSequence& sequence);

}  // namespace rgn
