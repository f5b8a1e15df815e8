#include "rgn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rgn/random.hpp"

namespace rgn {

namespace {

enum Stream : std::uint64_t { kTrainStream = 1, kShuffleStream = 2, kEvalStream = 3 };

std::size_t argmax(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] > t[best]) best = i;
  }
  return best;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (tbptt_steps < 1) throw std::invalid_argument("tbptt_steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (mc_samples < 1) throw std::invalid_argument("mc_samples must be >= 1");
  if (validate_every < 1) throw std::invalid_argument("validate_every must be >= 1");
}

TbpttBatch::TbpttBatch(const RecurrentGraphNetwork& model,
                       std::vector<const EventSequence*> sequences)
    : sequences_(std::move(sequences)),
      states_(sequences_.size(), model.init_state()),
      positions_(sequences_.size(), 0),
      finished_(sequences_.size(), false) {}

bool TbpttBatch::done() const {
  return std::all_of(finished_.begin(), finished_.end(), [](bool f) { return f; });
}

TbpttBatch::WindowStats TbpttBatch::run_window(RecurrentGraphNetwork& model,
                                               const TrainConfig& config, std::mt19937_64& rng,
                                               bool train) {
  const ModelConfig& mc = model.config();
  ad::Graph g(&model.params(), train ? ad::GradMode::kEnabled : ad::GradMode::kDisabled);
  WindowStats stats;
  std::vector<ad::Var> per_sequence;
  const double batch = static_cast<double>(sequences_.size());

  for (std::size_t b = 0; b < sequences_.size(); ++b) {
    if (finished_[b]) continue;
    const EventSequence& seq = *sequences_[b];
    std::vector<ad::Var> log_terms, comp_terms, type_terms, time_terms;

    auto score = [&](const StepOutput& anchor) {
      AnchorTerms t = score_anchor(anchor, seq, mc, config.mc_samples, rng);
      if (t.log_intensity.valid()) {
        log_terms.push_back(t.log_intensity);
        stats.log_likelihood += t.log_intensity.item();
      }
      if (t.compensator.valid()) {
        comp_terms.push_back(t.compensator);
        stats.log_likelihood -= t.compensator.item();
      }
      if (t.type_nll.valid()) {
        type_terms.push_back(t.type_nll);
        time_terms.push_back(t.time_sq);
        const auto next = static_cast<std::size_t>(anchor.anchor_index + 1);
        if (argmax(anchor.type_logits.value()) == seq.events[next].type) ++stats.correct;
        stats.sq_time_error += t.time_sq.item();
        ++stats.predictions;
      }
    };

    LiveNodeState live = model.attach(g, states_[b]);
    if (positions_[b] == 0) score(model.initial_output(g));
    const std::size_t end = std::min(positions_[b] + config.tbptt_steps, seq.size());
    for (std::size_t k = positions_[b]; k < end; ++k) {
      auto result = model.step(g, live, seq.events[k], train, rng);
      live = std::move(result.state);
      score(result.output);
    }
    stats.events += end - positions_[b];
    positions_[b] = end;
    if (end >= seq.size()) finished_[b] = true;
    states_[b] = detach_state(live);

    ad::Var nll = ad::sub(sum_valid(g, comp_terms), sum_valid(g, log_terms));
    ad::Var type = sum_valid(g, type_terms);
    ad::Var time = sum_valid(g, time_terms);
    stats.loss.nll += nll.item() / batch;
    stats.loss.type += type.item() / batch;
    stats.loss.time += time.item() / batch;
    per_sequence.push_back(combined_loss(nll, type, time, config.weights));
  }
  stats.loss.events = stats.events;
  ad::Var total = ad::scale(sum_valid(g, per_sequence), 1.0 / batch);
  stats.loss.total = total.item();
  if (!std::isfinite(stats.loss.total)) {
    std::ostringstream os;
    os << "non-finite training loss: total=" << stats.loss.total << " nll=" << stats.loss.nll
       << " type=" << stats.loss.type << " time=" << stats.loss.time;
    for (std::size_t b = 0; b < sequences_.size(); ++b) {
      os << "\n  sequence '" << sequences_[b]->id << "' position " << positions_[b] << "/"
         << sequences_[b]->size();
    }
    throw NumericalError(os.str());
  }
  if (train) {
    g.backward(total);
    g.flush_param_grads(model.params());
  }
  return stats;
}

Metrics validation_metrics(const RecurrentGraphNetwork& model, std::span<const EventSequence> data,
                           const TrainConfig& config) {
  return evaluate_metrics(model, data,
                          MCIntegralConfig{config.mc_samples, derive_seed(config.seed, kEvalStream)});
}

TrainResult train(RecurrentGraphNetwork model, std::span<const EventSequence> train_set,
                  std::span<const EventSequence> validation_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  if (validation_set.empty()) throw std::invalid_argument("validation set is empty");
  for (const auto& s : train_set) s.validate(model.config().num_types);
  for (const auto& s : validation_set) s.validate(model.config().num_types);

  std::mt19937_64 rng(derive_seed(config.seed, kTrainStream));
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, kShuffleStream));
  const AdamConfig adam{config.lr};

  TrainResult result{model, model, model, model, {}, 0, 0, {}};
  double best_nll = INFINITY;
  double best_acc = -INFINITY;
  double best_rmse = INFINITY;
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    if (!config.record_wall_time) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    double ll = 0.0, sq = 0.0, loss_sum = 0.0;
    std::size_t events = 0, correct = 0, predictions = 0, windows = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<const EventSequence*> batch;
      for (std::size_t i = start; i < std::min(start + config.batch_size, order.size()); ++i) {
        batch.push_back(&train_set[order[i]]);
      }
      TbpttBatch cursor(model, std::move(batch));
      while (!cursor.done()) {
        model.params().zero_grad();
        TbpttBatch::WindowStats w;
        try {
          w = cursor.run_window(model, config, rng);
        } catch (const NumericalError& e) {
          throw NumericalError("epoch " + std::to_string(epoch) + ", optimizer step " +
                               std::to_string(result.optimizer_steps) + ": " + e.what());
        }
        clip_grad_norm(model.params(), config.clip_norm);
        adam_step(model.params(), adam);
        ++result.optimizer_steps;
        ++windows;
        ll += w.log_likelihood;
        sq += w.sq_time_error;
        loss_sum += w.loss.total;
        events += w.events;
        correct += w.correct;
        predictions += w.predictions;
      }
    }
    EpochRecord train_row;
    train_row.epoch = epoch;
    train_row.split = "train";
    train_row.nll_per_event = events ? -ll / static_cast<double>(events) : 0.0;
    train_row.type_accuracy = predictions ? static_cast<double>(correct) / static_cast<double>(predictions) : 0.0;
    train_row.time_rmse = predictions ? std::sqrt(sq / static_cast<double>(predictions)) : 0.0;
    train_row.loss = windows ? loss_sum / static_cast<double>(windows) : 0.0;
    train_row.wall_seconds = elapsed();
    result.history.push_back(train_row);
    if (on_epoch) on_epoch(train_row);
    result.epochs_run = epoch;

    if (epoch % config.validate_every == 0 || epoch == config.epochs) {
      const Metrics m = validation_metrics(model, validation_set, config);
      EpochRecord val_row;
      val_row.epoch = epoch;
      val_row.split = "validation";
      val_row.nll_per_event = m.nll_per_event;
      val_row.type_accuracy = m.type_accuracy;
      val_row.time_rmse = m.time_rmse;
      val_row.wall_seconds = elapsed();
      result.history.push_back(val_row);
      if (on_epoch) on_epoch(val_row);

      if (m.nll_per_event < best_nll) {
        best_nll = m.nll_per_event;
        result.best_nll = model;
        result.best_validation = m;
        since_best = 0;
      } else {
        since_best += config.validate_every;
      }
      if (m.type_accuracy > best_acc) {
        best_acc = m.type_accuracy;
        result.best_accuracy = model;
      }
      if (m.time_rmse < best_rmse) {
        best_rmse = m.time_rmse;
        result.best_rmse = model;
      }
      if (config.patience > 0 && since_best >= config.patience) break;
    }
  }
  result.model = std::move(model);
  return result;
}

void write_metrics_csv(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,split,nll_per_event,type_acc,time_rmse,wall_seconds\n";
  const auto old = out.precision(17);
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << r.split << ',' << r.nll_per_event << ',' << r.type_accuracy << ','
        << r.time_rmse << ',' << r.wall_seconds << '\n';
  }
  out.precision(old);
}

}  // namespace rgn
