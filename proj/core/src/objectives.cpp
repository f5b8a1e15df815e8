#include "rgn/objectives.hpp"

#include <cfloat>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgn/random.hpp"

namespace rgn {

void MCIntegralConfig::validate() const {
  if (samples < 1) throw std::invalid_argument("mc samples must be >= 1");
}

ad::Var mc_compensator_interval(const StepOutput& anchor, double t0, double t1,
                                const ModelConfig& config, std::span<const double> draws) {
  if (!(t1 > t0)) {
    throw std::invalid_argument("compensator interval must be increasing, got (" +
                                std::to_string(t0) + ", " + std::to_string(t1) + "]");
  }
  if (draws.empty()) throw std::invalid_argument("compensator needs at least one draw");
  ad::Var lam = intensity_at_times(anchor, draws, config);
  return ad::scale(ad::sum(lam), (t1 - t0) / static_cast<double>(draws.size()));
}

ad::Var mc_compensator_interval(const StepOutput& anchor, double t0, double t1,
                                const ModelConfig& config, std::size_t samples,
                                std::mt19937_64& rng) {
  if (!(t1 > t0)) {
    throw std::invalid_argument("compensator interval must be increasing, got (" +
                                std::to_string(t0) + ", " + std::to_string(t1) + "]");
  }
  std::vector<double> draws(samples);
  for (double& tau : draws) tau = uniform(rng, t0, t1);
  return mc_compensator_interval(anchor, t0, t1, config, draws);
}

ad::Var event_log_intensity(const StepOutput& anchor, const Event& event, const ModelConfig& config,
                            LogClampCounter* counter) {
  ad::Var lam = ad::pick(intensity(anchor, event.time, config), event.type);
  if (lam.item() < DBL_MIN) {
    if (counter) ++counter->clamped;
    const double v = lam.item() > 0.0 ? std::max(std::log(lam.item()), kLogIntensityFloor)
                                      : kLogIntensityFloor;
    return lam.graph().constant(Tensor::scalar(v));
  }
  return ad::log(lam);
}

AnchorTerms score_anchor(const StepOutput& anchor, const EventSequence& sequence,
                         const ModelConfig& config, std::size_t mc_samples, std::mt19937_64& rng,
                         LogClampCounter* counter) {
  AnchorTerms terms;
  const auto next_index = static_cast<std::size_t>(anchor.anchor_index + 1);
  const double start = anchor.anchor_time;
  if (next_index < sequence.size()) {
    const Event& next = sequence.events[next_index];
    terms.log_intensity = event_log_intensity(anchor, next, config, counter);
    terms.compensator = mc_compensator_interval(anchor, start, next.time, config, mc_samples, rng);
    if (anchor.has_anchor_event) {
      terms.type_nll = ad::scale(ad::pick(ad::log_softmax(anchor.type_logits), next.type), -1.0);
      ad::Graph& g = anchor.time_pred.graph();
      terms.time_sq = ad::l2_diff(anchor.time_pred, g.constant(Tensor::scalar(next.time)));
    }
  } else if (sequence.horizon > start) {
    terms.compensator =
        mc_compensator_interval(anchor, start, sequence.horizon, config, mc_samples, rng);
  }
  return terms;
}

ad::Var sum_valid(ad::Graph& g, std::span<const ad::Var> terms) {
  ad::Var total;
  for (const ad::Var& t : terms) {
    if (!t.valid()) continue;
    total = total.valid() ? ad::add(total, t) : t;
  }
  return total.valid() ? total : g.constant(Tensor::scalar(0.0));
}

namespace {

void require_anchors(std::span<const StepOutput> anchors, const EventSequence& sequence) {
  if (anchors.size() != sequence.size() + 1) {
    throw std::invalid_argument("expected " + std::to_string(sequence.size() + 1) +
                                " anchors (empty history + one per event), got " +
                                std::to_string(anchors.size()));
  }
}

ad::Graph& graph_of(std::span<const StepOutput> anchors) {
  return anchors.front().intensity_base.graph();
}

}  // namespace

ad::Var mc_compensator(std::span<const StepOutput> anchors, const EventSequence& sequence,
                       const ModelConfig& config, std::size_t samples, std::mt19937_64& rng) {
  require_anchors(anchors, sequence);
  std::vector<ad::Var> parts;
  double start = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const double end = i < sequence.size() ? sequence.events[i].time : sequence.horizon;
    if (i == sequence.size() && !(end > start)) break;
    parts.push_back(mc_compensator_interval(anchors[i], start, end, config, samples, rng));
    start = end;
  }
  return sum_valid(graph_of(anchors), parts);
}

ad::Var log_likelihood(std::span<const StepOutput> anchors, const EventSequence& sequence,
                       const ModelConfig& config, std::size_t samples, std::mt19937_64& rng,
                       LogClampCounter* counter) {
  require_anchors(anchors, sequence);
  std::vector<ad::Var> events;
  for (std::size_t j = 0; j < sequence.size(); ++j) {
    events.push_back(event_log_intensity(anchors[j], sequence.events[j], config, counter));
  }
  ad::Graph& g = graph_of(anchors);
  return ad::sub(sum_valid(g, events), mc_compensator(anchors, sequence, config, samples, rng));
}

ad::Var type_loss(std::span<const StepOutput> anchors, const EventSequence& sequence) {
  require_anchors(anchors, sequence);
  std::vector<ad::Var> terms;
  for (std::size_t j = 1; j < sequence.size(); ++j) {
    terms.push_back(ad::scale(
        ad::pick(ad::log_softmax(anchors[j].type_logits), sequence.events[j].type), -1.0));
  }
  return sum_valid(graph_of(anchors), terms);
}

ad::Var time_loss(std::span<const StepOutput> anchors, const EventSequence& sequence) {
  require_anchors(anchors, sequence);
  ad::Graph& g = graph_of(anchors);
  std::vector<ad::Var> terms;
  for (std::size_t j = 1; j < sequence.size(); ++j) {
    terms.push_back(
        ad::l2_diff(anchors[j].time_pred, g.constant(Tensor::scalar(sequence.events[j].time))));
  }
  return sum_valid(g, terms);
}

double combined_loss(double nll, double type, double time, const LossWeights& weights) {
  return nll + weights.type * type + weights.time * time;
}

ad::Var combined_loss(ad::Var nll, ad::Var type, ad::Var time, const LossWeights& weights) {
  return ad::add(ad::add(nll, ad::scale(type, weights.type)), ad::scale(time, weights.time));
}

}  // namespace rgn
