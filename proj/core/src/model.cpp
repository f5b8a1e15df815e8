#include "rgn/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rgn/random.hpp"

namespace rgn {

namespace {

constexpr double kDefaultAlpha = -0.1;

Tensor uniform_weight(Shape shape, std::size_t fan_in, std::mt19937_64* rng) {
  Tensor t(std::move(shape));
  if (!rng) return t;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : t.data()) x = uniform(*rng, -bound, bound);
  return t;
}

std::string key(const std::string& prefix, std::size_t i, const char* leaf) {
  return prefix + "." + std::to_string(i) + "." + leaf;
}

}  // namespace

void ModelConfig::validate() const {
  if (num_types < 1) throw std::invalid_argument("num_types must be >= 1");
  if (hidden_dim < 2 || hidden_dim % 2 != 0) {
    throw std::invalid_argument("hidden_dim must be even and >= 2 (it is also the embedding width)");
  }
  if (edge_dim < 1) throw std::invalid_argument("edge_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (!alpha.empty() && alpha.size() != num_types) {
    throw std::invalid_argument("alpha must have one entry per type (" + std::to_string(num_types) +
                                "), got " + std::to_string(alpha.size()));
  }
  if (!(epsilon_t > 0.0)) throw std::invalid_argument("epsilon_t must be > 0");
  embedding().validate();
}

EmbeddingConfig ModelConfig::embedding() const {
  return EmbeddingConfig{hidden_dim, embedding_base, time_scale};
}

double ModelConfig::alpha_for(std::size_t type) const {
  return alpha.empty() ? kDefaultAlpha : alpha.at(type);
}

RecurrentGraphNetwork::RecurrentGraphNetwork(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(derive_seed(seed, 0x1a17));
  register_params(&rng);
}

RecurrentGraphNetwork::RecurrentGraphNetwork(ModelConfig config, ParamStore params)
    : config_(std::move(config)) {
  config_.validate();
  register_params(nullptr);
  if (params.size() != params_.size()) {
    throw std::invalid_argument("parameter count " + std::to_string(params.size()) +
                                " does not match model config (" + std::to_string(params_.size()) +
                                ")");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::string& name = params_.name(i);
    if (!params.contains(name)) throw std::invalid_argument("missing parameter '" + name + "'");
    const std::size_t j = params.index(name);
    if (params.value(j).shape() != params_.value(i).shape()) {
      throw std::invalid_argument("parameter '" + name + "' has shape " +
                                  shape_string(params.value(j).shape()) + ", config expects " +
                                  shape_string(params_.value(i).shape()));
    }
    params_.value(i) = params.value(j);
    params_.first_moment(i) = params.first_moment(j);
    params_.second_moment(i) = params.second_moment(j);
  }
  params_.set_step_count(params.step_count());
}

void RecurrentGraphNetwork::register_params(std::mt19937_64* rng) {
  const std::size_t d = config_.hidden_dim;
  const std::size_t de = config_.edge_dim;
  const std::size_t ny = config_.num_types;

  const std::size_t lstm_sets = config_.shared_lstm ? 1 : ny;
  for (std::size_t s = 0; s < lstm_sets; ++s) {
    const std::string prefix = config_.shared_lstm ? std::string("lstm.shared") : "lstm." + std::to_string(s);
    LstmParams p{};
    p.w = params_.add(prefix + ".W", uniform_weight({4 * d, d}, d, rng));
    p.u = params_.add(prefix + ".U", uniform_weight({4 * d, d}, d, rng));
    Tensor bias({4 * d});
    if (rng) {
      // Forget-gate block first.
      for (std::size_t j = 0; j < d; ++j) bias[j] = 1.0;
    }
    p.b = params_.add(prefix + ".b", std::move(bias));
    p.ln_gain = params_.add(prefix + ".ln_gain", rng ? Tensor::filled({d}, 1.0) : Tensor({d}));
    p.ln_bias = params_.add(prefix + ".ln_bias", Tensor({d}));
    lstm_.push_back(p);
  }

  if (config_.has_attention()) {
    for (std::size_t l = 0; l < config_.num_gat_layers; ++l) {
      GatParams gp{};
      gp.ln_gain = params_.add(key("gat", l, "ln_gain"), rng ? Tensor::filled({d}, 1.0) : Tensor({d}));
      gp.ln_bias = params_.add(key("gat", l, "ln_bias"), Tensor({d}));
      for (std::size_t h = 0; h < config_.num_heads; ++h) {
        const std::string prefix = "gat." + std::to_string(l) + ".head." + std::to_string(h);
        HeadParams hp{};
        hp.proj = params_.add(prefix + ".proj", uniform_weight({d, de}, d, rng));
        hp.value_proj = config_.tie_value_projection
                            ? hp.proj
                            : params_.add(prefix + ".value_proj", uniform_weight({d, de}, d, rng));
        hp.score_w = params_.add(prefix + ".score_w", uniform_weight({de, 2}, 2 * de, rng));
        hp.score_b = params_.add(prefix + ".score_b", Tensor({1}));
        gp.heads.push_back(hp);
      }
      const std::size_t cat = config_.num_heads * de;
      gp.out_w = params_.add(key("gat", l, "out_w"), uniform_weight({cat, d}, cat, rng));
      gp.out_b = params_.add(key("gat", l, "out_b"), Tensor({d}));
      gat_.push_back(std::move(gp));
    }
  }

  global_w_ = params_.add("global.W", uniform_weight({d, ny * d}, ny * d, rng));
  global_b_ = params_.add("global.b", Tensor({d}));
  type_w_ = params_.add("head.type.W", uniform_weight({ny, d}, d, rng));
  type_b_ = params_.add("head.type.b", Tensor({ny}));
  time_w_ = params_.add("head.time.W", uniform_weight({1, d}, d, rng));
  time_b_ = params_.add("head.time.b", Tensor({1}));
  intensity_w_ = params_.add("head.intensity.W", uniform_weight({ny, d}, d, rng));
  beta_ = params_.add("intensity.beta", Tensor({ny}));
}

const RecurrentGraphNetwork::LstmParams& RecurrentGraphNetwork::lstm_for(std::size_t type) const {
  if (type >= config_.num_types) {
    throw std::out_of_range("event type " + std::to_string(type) + " outside [0, " +
                            std::to_string(config_.num_types) + ")");
  }
  return config_.shared_lstm ? lstm_[0] : lstm_[type];
}

NodeState RecurrentGraphNetwork::init_state() const {
  NodeState s;
  s.hidden.assign(config_.num_types, Tensor({config_.hidden_dim}));
  s.cell.assign(config_.num_types, Tensor({config_.hidden_dim}));
  return s;
}

LiveNodeState RecurrentGraphNetwork::attach(ad::Graph& g, const NodeState& state) const {
  if (state.hidden.size() != config_.num_types || state.cell.size() != config_.num_types) {
    throw std::invalid_argument("node state has " + std::to_string(state.hidden.size()) +
                                " types, model expects " + std::to_string(config_.num_types));
  }
  LiveNodeState live;
  live.last_time = state.last_time;
  live.last_index = state.last_index;
  for (std::size_t y = 0; y < config_.num_types; ++y) {
    live.hidden.push_back(g.constant(state.hidden[y]));
    live.cell.push_back(g.constant(state.cell[y]));
  }
  return live;
}

NodeState detach_state(const LiveNodeState& state) {
  NodeState s;
  s.last_time = state.last_time;
  s.last_index = state.last_index;
  for (const auto& v : state.hidden) s.hidden.push_back(v.value());
  for (const auto& c : state.cell) s.cell.push_back(c.value());
  return s;
}

StepOutput RecurrentGraphNetwork::initial_output(ad::Graph& g) const {
  const std::size_t ny = config_.num_types;
  StepOutput out;
  out.global = g.constant(Tensor({config_.hidden_dim}));
  out.intensity_pre = g.constant(Tensor({ny}));
  out.intensity_base = ad::add(out.intensity_pre, g.param(beta_));
  out.type_logits = g.constant(Tensor({ny}));
  out.time_pred = g.constant(Tensor::scalar(0.0));
  out.anchor_time = 0.0;
  out.anchor_index = -1;
  out.has_anchor_event = false;
  return out;
}

RecurrentGraphNetwork::LstmOutput RecurrentGraphNetwork::node_lstm_step(ad::Graph& g, ad::Var x,
                                                                        ad::Var hidden_prev,
                                                                        ad::Var cell_prev,
                                                                        std::size_t type) const {
  const LstmParams& p = lstm_for(type);
  const std::size_t d = config_.hidden_dim;
  ad::Var z = ad::add(ad::add(ad::matmul(g.param(p.w), x), ad::matmul(g.param(p.u), hidden_prev)),
                      g.param(p.b));
  ad::Var forget = ad::sigmoid(ad::slice(z, 0, 0, d));
  ad::Var input = ad::sigmoid(ad::slice(z, 0, d, d));
  ad::Var output = ad::sigmoid(ad::slice(z, 0, 2 * d, d));
  ad::Var candidate = ad::tanh(ad::slice(z, 0, 3 * d, d));
  ad::Var cell = ad::add(ad::mul(forget, cell_prev), ad::mul(input, candidate));
  ad::Var gated = ad::mul(output, ad::tanh(cell));
  ad::Var hidden = ad::layer_norm(gated, g.param(p.ln_gain), g.param(p.ln_bias));
  return {hidden, cell, gated};
}

ad::Var RecurrentGraphNetwork::gat_layer(ad::Graph& g, ad::Var nodes, std::size_t layer, bool train,
                                         std::mt19937_64& rng,
                                         std::vector<Tensor>* attention) const {
  const GatParams& gp = gat_.at(layer);
  const std::size_t ny = config_.num_types;
  ad::Var normed = ad::layer_norm(nodes, g.param(gp.ln_gain), g.param(gp.ln_bias));
  std::vector<ad::Var> aggregated;
  aggregated.reserve(gp.heads.size());
  for (const HeadParams& hp : gp.heads) {
    ad::Var keys = ad::matmul(normed, g.param(hp.proj));  // [ny, de]
    ad::Var halves = ad::matmul(keys, g.param(hp.score_w));  // [ny, 2]
    ad::Var receiver = ad::reshape(ad::add_rowwise(ad::slice(halves, 1, 0, 1), g.param(hp.score_b)), {ny});
    ad::Var sender = ad::reshape(ad::slice(halves, 1, 1, 1), {ny});
    ad::Var logits = ad::leaky_relu(ad::outer_sum(receiver, sender), config_.leaky_slope);
    // Row r holds exp(score) of every sender normalized over senders.
    ad::Var weights = ad::softmax(logits, 1);
    if (attention) attention->push_back(weights.value());
    ad::Var values =
        hp.value_proj == hp.proj ? keys : ad::matmul(normed, g.param(hp.value_proj));
    weights = ad::dropout(weights, config_.dropout, train, rng);
    aggregated.push_back(ad::matmul(weights, values));  // [ny, de]
  }
  ad::Var joined = ad::concat(aggregated, 1);
  ad::Var update = ad::add_rowwise(ad::matmul(joined, g.param(gp.out_w)), g.param(gp.out_b));
  update = ad::dropout(update, config_.dropout, train, rng);
  return ad::add(nodes, update);
}

ad::Var RecurrentGraphNetwork::global_update(ad::Graph& g, ad::Var nodes) const {
  ad::Var flat = ad::reshape(nodes, {nodes.size()});
  return ad::relu(ad::linear(flat, g.param(global_w_), g.param(global_b_)));
}

RecurrentGraphNetwork::HeadOutput RecurrentGraphNetwork::heads(ad::Graph& g, ad::Var global,
                                                               double anchor_time) const {
  HeadOutput h;
  h.type_logits = ad::linear(global, g.param(type_w_), g.param(type_b_));
  ad::Var raw_time = ad::linear(global, g.param(time_w_), g.param(time_b_));
  h.time_pred = ad::add_constant(ad::softplus(raw_time), Tensor::scalar(anchor_time));
  h.intensity_pre = ad::linear(global, g.param(intensity_w_));
  h.intensity_base = ad::add(h.intensity_pre, g.param(beta_));
  return h;
}

RecurrentGraphNetwork::StepResult RecurrentGraphNetwork::step(ad::Graph& g,
                                                              const LiveNodeState& state,
                                                              const Event& event, bool train,
                                                              std::mt19937_64& rng) const {
  if (event.type >= config_.num_types) {
    throw std::out_of_range("event type " + std::to_string(event.type) + " outside [0, " +
                            std::to_string(config_.num_types) + ")");
  }
  if (!(event.time >= state.last_time)) {
    throw std::invalid_argument("out-of-order timestamp " + std::to_string(event.time) +
                                " after " + std::to_string(state.last_time));
  }
  StepResult result;
  result.state = state;
  ad::Var x = g.constant(embed_time(event.time, config_.embedding()));
  LstmOutput lstm = node_lstm_step(g, x, state.hidden[event.type], state.cell[event.type], event.type);
  result.state.hidden[event.type] = lstm.hidden;
  result.state.cell[event.type] = lstm.cell;
  result.state.last_time = event.time;
  result.state.last_index = state.last_index + 1;

  StepOutput& out = result.output;
  ad::Var nodes = ad::stack_rows(result.state.hidden);
  if (config_.has_attention()) {
    out.attention.reserve(config_.num_gat_layers * config_.num_heads);
    for (std::size_t l = 0; l < config_.num_gat_layers; ++l) {
      nodes = gat_layer(g, nodes, l, train, rng, &out.attention);
    }
    for (const Tensor& a : out.attention) out.attention_scores += a.size();
  }
  out.global = global_update(g, nodes);
  HeadOutput h = heads(g, out.global, event.time);
  out.type_logits = h.type_logits;
  out.time_pred = h.time_pred;
  out.intensity_pre = h.intensity_pre;
  out.intensity_base = h.intensity_base;
  out.anchor_time = event.time;
  out.anchor_index = result.state.last_index;
  out.has_anchor_event = true;
  return result;
}

std::vector<double> elapsed_time_term(const StepOutput& anchor, double t, const ModelConfig& config) {
  if (t < anchor.anchor_time) {
    throw std::invalid_argument("intensity query time " + std::to_string(t) +
                                " precedes anchor time " + std::to_string(anchor.anchor_time));
  }
  std::vector<double> term(config.num_types, 0.0);
  if (!anchor.has_anchor_event) return term;
  const double scaled = (t - anchor.anchor_time) / std::max(anchor.anchor_time, config.epsilon_t);
  for (std::size_t y = 0; y < config.num_types; ++y) term[y] = config.alpha_for(y) * scaled;
  return term;
}

ad::Var intensity(const StepOutput& anchor, double t, const ModelConfig& config) {
  std::vector<double> term = elapsed_time_term(anchor, t, config);
  return ad::softplus(ad::add_constant(anchor.intensity_base, Tensor::vector(std::move(term))));
}

ad::Var intensity_at_times(const StepOutput& anchor, std::span<const double> times,
                           const ModelConfig& config) {
  const std::size_t ny = config.num_types;
  Tensor shifts({times.size(), ny});
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> term = elapsed_time_term(anchor, times[k], config);
    for (std::size_t y = 0; y < ny; ++y) shifts.at(k, y) = term[y];
  }
  ad::Graph& g = anchor.intensity_base.graph();
  return ad::softplus(ad::add_rowwise(g.constant(std::move(shifts)), anchor.intensity_base));
}

std::vector<double> intensity_values(const StepOutput& anchor, double t, const ModelConfig& config) {
  std::vector<double> lam = elapsed_time_term(anchor, t, config);
  const Tensor& base = anchor.intensity_base.value();
  for (std::size_t y = 0; y < lam.size(); ++y) lam[y] = ad::softplus_value(lam[y] + base[y]);
  return lam;
}

double total_intensity_value(const StepOutput& anchor, double t, const ModelConfig& config) {
  double total = 0.0;
  for (double v : intensity_values(anchor, t, config)) total += v;
  return total;
}

}  // namespace rgn
