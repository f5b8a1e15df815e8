#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rgn/autodiff.hpp"
#include "rgn/embedding.hpp"
#include "rgn/param_store.hpp"
#include "rgn/sequence.hpp"
#include "rgn/tensor.hpp"

namespace rgn {

struct ModelConfig {
  std::size_t num_types = 1;
  /// Shared width of the time embedding, node states and global state.
  std::size_t hidden_dim = 32;
  std::size_t edge_dim = 16;
  /// 0 removes the graph-attention block entirely.
  std::size_t num_heads = 2;
  std::size_t num_gat_layers = 2;
  double dropout = 0.1;
  double leaky_slope = 0.2;
  /// Per-type slope of the elapsed-time term; empty means -0.1 for every type.
  std::vector<double> alpha;
  bool shared_lstm = false;
  /// Value projection of each head reuses the score projection.
  bool tie_value_projection = true;
  double epsilon_t = 1e-6;
  double embedding_base = 10000.0;
  double time_scale = 1.0;

  void validate() const;
  [[nodiscard]] EmbeddingConfig embedding() const;
  [[nodiscard]] double alpha_for(std::size_t type) const;
  [[nodiscard]] bool has_attention() const { return num_heads > 0 && num_gat_layers > 0; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Per-type LSTM hidden/cell values plus the anchor of the last event seen.
/// Holds plain values: no graph lineage.
struct NodeState {
  std::vector<Tensor> hidden;
  std::vector<Tensor> cell;
  double last_time = 0.0;
  std::int64_t last_index = -1;

  friend bool operator==(const NodeState&, const NodeState&) = default;
};

/// NodeState whose tensors live on a graph.
struct LiveNodeState {
  std::vector<ad::Var> hidden;
  std::vector<ad::Var> cell;
  double last_time = 0.0;
  std::int64_t last_index = -1;
};

/// Model outputs anchored at one event (or at the empty history).
struct StepOutput {
  ad::Var global;
  /// NN_lambda(u), one entry per type.
  ad::Var intensity_pre;
  /// intensity_pre + beta.
  ad::Var intensity_base;
  ad::Var type_logits;
  /// Absolute predicted time of the next event, shape [1].
  ad::Var time_pred;
  double anchor_time = 0.0;
  std::int64_t anchor_index = -1;
  /// False for the empty-history anchor; the elapsed-time term is dropped there.
  bool has_anchor_event = false;
  /// Row-stochastic [types, types] matrices (rows are receivers), ordered
  /// layer-major: index = layer * num_heads + head.
  std::vector<Tensor> attention;
  /// Attention scores computed and stored while producing this output.
  std::size_t attention_scores = 0;
};

/// Recurrent graph network over event types: one LSTM node per type, stacked
/// multi-head graph attention with residual connections, a global update and
/// three prediction heads.
class RecurrentGraphNetwork {
 public:
  RecurrentGraphNetwork(ModelConfig config, std::uint64_t seed);
  /// Adopts existing parameters; throws if names or shapes disagree with config.
  RecurrentGraphNetwork(ModelConfig config, ParamStore params);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  [[nodiscard]] const ParamStore& params() const { return params_; }
  [[nodiscard]] ParamStore& params() { return params_; }

  [[nodiscard]] NodeState init_state() const;
  [[nodiscard]] LiveNodeState attach(ad::Graph& g, const NodeState& state) const;

  /// Output of the empty history: zero hidden term, intensity softplus(beta).
  [[nodiscard]] StepOutput initial_output(ad::Graph& g) const;

  struct LstmOutput {
    ad::Var hidden;
    ad::Var cell;
    /// o * tanh(c) before the layer norm.
    ad::Var gated;
  };
  [[nodiscard]] LstmOutput node_lstm_step(ad::Graph& g, ad::Var x, ad::Var hidden_prev,
                                          ad::Var cell_prev, std::size_t type) const;

  /// One attention layer over the [types, hidden_dim] node matrix. Appends the
  /// per-head attention matrices to `attention` when it is non-null.
  [[nodiscard]] ad::Var gat_layer(ad::Graph& g, ad::Var nodes, std::size_t layer, bool train,
                                  std::mt19937_64& rng, std::vector<Tensor>* attention) const;

  [[nodiscard]] ad::Var global_update(ad::Graph& g, ad::Var nodes) const;

  struct HeadOutput {
    ad::Var type_logits;
    ad::Var time_pred;
    ad::Var intensity_pre;
    ad::Var intensity_base;
  };
  [[nodiscard]] HeadOutput heads(ad::Graph& g, ad::Var global, double anchor_time) const;

  struct StepResult {
    LiveNodeState state;
    StepOutput output;
  };
  /// Consumes one event: embedding, LSTM update of the event's node, graph
  /// attention, global update and heads. Only the event type's node changes.
  [[nodiscard]] StepResult step(ad::Graph& g, const LiveNodeState& state, const Event& event,
                                bool train, std::mt19937_64& rng) const;

 private:
  struct LstmParams {
    std::size_t w, u, b, ln_gain, ln_bias;
  };
  struct HeadParams {
    std::size_t proj, value_proj, score_w, score_b;
  };
  struct GatParams {
    std::size_t ln_gain, ln_bias, out_w, out_b;
    std::vector<HeadParams> heads;
  };

  void register_params(std::mt19937_64* rng);
  [[nodiscard]] const LstmParams& lstm_for(std::size_t type) const;

  ModelConfig config_;
  ParamStore params_;
  std::vector<LstmParams> lstm_;
  std::vector<GatParams> gat_;
  std::size_t global_w_ = 0, global_b_ = 0;
  std::size_t type_w_ = 0, type_b_ = 0;
  std::size_t time_w_ = 0, time_b_ = 0;
  std::size_t intensity_w_ = 0, beta_ = 0;
};

/// Captures values of a live state; the result has no graph lineage.
[[nodiscard]] NodeState detach_state(const LiveNodeState& state);

/// alpha_y * (t - t_i) / max(t_i, eps) for an anchored output, 0 for the
/// empty-history anchor.
[[nodiscard]] std::vector<double> elapsed_time_term(const StepOutput& anchor, double t,
                                                    const ModelConfig& config);

/// Per-type intensity lambda_y(t) on the graph. Throws if t precedes the anchor.
[[nodiscard]] ad::Var intensity(const StepOutput& anchor, double t, const ModelConfig& config);

/// Per-type intensities at several query times as a [times, types] matrix.
[[nodiscard]] ad::Var intensity_at_times(const StepOutput& anchor, std::span<const double> times,
                                         const ModelConfig& config);

/// Per-type intensity values without recording on a graph.
[[nodiscard]] std::vector<double> intensity_values(const StepOutput& anchor, double t,
                                                   const ModelConfig& config);

/// Total intensity sum_y lambda_y(t) without recording on a graph.
[[nodiscard]] double total_intensity_value(const StepOutput& anchor, double t,
                                           const ModelConfig& config);

}  // namespace rgn
