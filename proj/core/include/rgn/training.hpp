#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgn/evaluation.hpp"
#include "rgn/model.hpp"
#include "rgn/objectives.hpp"
#include "rgn/optimizer.hpp"
#include "rgn/sequence.hpp"

namespace rgn {

/// Thrown when a training loss becomes non-finite. what() carries the dump.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs = 50;
  double lr = 1e-4;
  std::size_t tbptt_steps = 20;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  /// Global gradient L2 clipping threshold; <= 0 disables clipping.
  double clip_norm = 5.0;
  std::size_t mc_samples = 10;
  std::size_t validate_every = 1;
  /// Epochs without validation NLL improvement before stopping; 0 disables.
  std::size_t patience = 10;
  LossWeights weights;
  bool shuffle = true;
  /// Fill the wall_seconds metrics column with measured time (non-reproducible).
  bool record_wall_time = false;

  void validate() const;
};

/// TBPTT cursor over one mini-batch of sequences.
///
/// Each window advances every unfinished sequence by up to tbptt_steps events,
/// scores the intervals anchored at those events, backpropagates the loss
/// averaged over the batch, and detaches the node states.
class TbpttBatch {
 public:
  TbpttBatch(const RecurrentGraphNetwork& model, std::vector<const EventSequence*> sequences);

  [[nodiscard]] bool done() const;

  struct WindowStats {
    /// Batch-averaged loss components of this window.
    LossBreakdown loss;
    /// Unaveraged sums for epoch-level reporting.
    double log_likelihood = 0.0;
    double sq_time_error = 0.0;
    std::size_t correct = 0;
    std::size_t predictions = 0;
    std::size_t events = 0;
  };

  /// Runs one window and accumulates gradients into model.params(). The
  /// caller owns zero_grad / clipping / the optimizer step.
  WindowStats run_window(RecurrentGraphNetwork& model, const TrainConfig& config,
                         std::mt19937_64& rng, bool train = true);

 private:
  std::vector<const EventSequence*> sequences_;
  std::vector<NodeState> states_;
  std::vector<std::size_t> positions_;
  std::vector<bool> finished_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;
  double nll_per_event = 0.0;
  double type_accuracy = 0.0;
  double time_rmse = 0.0;
  double wall_seconds = 0.0;
  /// Mean combined loss per optimizer window (training rows only).
  double loss = 0.0;
};

struct TrainResult {
  RecurrentGraphNetwork model;
  RecurrentGraphNetwork best_nll;
  RecurrentGraphNetwork best_accuracy;
  RecurrentGraphNetwork best_rmse;
  std::vector<EpochRecord> history;
  std::size_t optimizer_steps = 0;
  std::size_t epochs_run = 0;
  Metrics best_validation;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains with TBPTT and ADAM; validation runs every `validate_every` epochs.
TrainResult train(RecurrentGraphNetwork model, std::span<const EventSequence> train_set,
                  std::span<const EventSequence> validation_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// CSV header and rows: epoch,split,nll_per_event,type_acc,time_rmse,wall_seconds
void write_metrics_csv(std::ostream& out, std::span<const EpochRecord> history);

/// Evaluation metrics under a training config (MC samples and evaluation seed).
Metrics validation_metrics(const RecurrentGraphNetwork& model, std::span<const EventSequence> data,
                           const TrainConfig& config);

}  // namespace rgn
