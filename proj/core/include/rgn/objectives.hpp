#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

#include "rgn/autodiff.hpp"
#include "rgn/model.hpp"
#include "rgn/sequence.hpp"

namespace rgn {

struct MCIntegralConfig {
  /// Uniform draws per inter-event interval.
  std::size_t samples = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossWeights {
  double type = 1.0;
  double time = 100.0;
};

/// Loss components in value form. total = nll + w_type * type + w_time * time.
struct LossBreakdown {
  double nll = 0.0;
  double type = 0.0;
  double time = 0.0;
  double total = 0.0;
  std::size_t events = 0;
};

/// Counts log-intensity evaluations that underflowed and were clamped.
struct LogClampCounter {
  std::size_t clamped = 0;
};

inline constexpr double kLogIntensityFloor = -745.0;

/// (t1 - t0) * mean_k sum_y lambda_y(tau_k), tau_k ~ U(t0, t1) i.i.d.
/// Throws unless t0 < t1. Gradients flow through lambda(tau_k).
ad::Var mc_compensator_interval(const StepOutput& anchor, double t0, double t1,
                                const ModelConfig& config, std::size_t samples,
                                std::mt19937_64& rng);

/// Same estimator with caller-supplied draws; used to freeze the randomness.
ad::Var mc_compensator_interval(const StepOutput& anchor, double t0, double t1,
                                const ModelConfig& config, std::span<const double> draws);

/// log lambda_{type}(t) under the anchor, clamped at kLogIntensityFloor when
/// the intensity underflows to a subnormal.
ad::Var event_log_intensity(const StepOutput& anchor, const Event& event, const ModelConfig& config,
                            LogClampCounter* counter = nullptr);

/// Loss terms of the interval that starts at one anchor: the next event's
/// log-intensity, the compensator up to that event (or the horizon), and,
/// for anchors that follow an event, the type and time prediction errors.
/// Unused terms are invalid Vars.
struct AnchorTerms {
  ad::Var log_intensity;
  ad::Var compensator;
  ad::Var type_nll;
  ad::Var time_sq;
};

/// `anchor.anchor_index + 1` identifies the next event of `sequence`.
AnchorTerms score_anchor(const StepOutput& anchor, const EventSequence& sequence,
                         const ModelConfig& config, std::size_t mc_samples, std::mt19937_64& rng,
                         LogClampCounter* counter = nullptr);

/// Anchors are the empty-history output followed by one output per event.
ad::Var mc_compensator(std::span<const StepOutput> anchors, const EventSequence& sequence,
                       const ModelConfig& config, std::size_t samples, std::mt19937_64& rng);

/// sum_j log lambda_{y_j}(t_j) - compensator estimate.
ad::Var log_likelihood(std::span<const StepOutput> anchors, const EventSequence& sequence,
                       const ModelConfig& config, std::size_t samples, std::mt19937_64& rng,
                       LogClampCounter* counter = nullptr);

/// Cross-entropy of the type logits of event j-1 against y_j, j = 2..L.
ad::Var type_loss(std::span<const StepOutput> anchors, const EventSequence& sequence);

/// Squared error of the time prediction of event j-1 against t_j, j = 2..L.
ad::Var time_loss(std::span<const StepOutput> anchors, const EventSequence& sequence);

[[nodiscard]] double combined_loss(double nll, double type, double time, const LossWeights& weights);
ad::Var combined_loss(ad::Var nll, ad::Var type, ad::Var time, const LossWeights& weights);

/// Sum of the valid Vars in `terms`; a zero constant on `g` when none are valid.
ad::Var sum_valid(ad::Graph& g, std::span<const ad::Var> terms);

}  // namespace rgn
