#include "rgn/checkpoint.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rgn {

using nlohmann::json;

namespace {

json config_json(const ModelConfig& c) {
  return {{"num_types", c.num_types},
          {"hidden_dim", c.hidden_dim},
          {"edge_dim", c.edge_dim},
          {"num_heads", c.num_heads},
          {"num_gat_layers", c.num_gat_layers},
          {"dropout", c.dropout},
          {"leaky_slope", c.leaky_slope},
          {"alpha", c.alpha},
          {"shared_lstm", c.shared_lstm},
          {"tie_value_projection", c.tie_value_projection},
          {"epsilon_t", c.epsilon_t},
          {"embedding_base", c.embedding_base},
          {"time_scale", c.time_scale}};
}

ModelConfig config_from(const json& j, bool validate = true) {
  static const std::set<std::string> known = {
      "num_types", "hidden_dim",  "edge_dim",    "num_heads",   "num_gat_layers",
      "dropout",   "leaky_slope", "alpha",       "shared_lstm", "tie_value_projection",
      "epsilon_t", "embedding_base", "time_scale"};
  if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw std::invalid_argument("unknown model config key '" + k + "'");
  }
  ModelConfig c;
  c.num_types = j.value("num_types", c.num_types);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.edge_dim = j.value("edge_dim", c.edge_dim);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.num_gat_layers = j.value("num_gat_layers", c.num_gat_layers);
  c.dropout = j.value("dropout", c.dropout);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.alpha = j.value("alpha", c.alpha);
  c.shared_lstm = j.value("shared_lstm", c.shared_lstm);
  c.tie_value_projection = j.value("tie_value_projection", c.tie_value_projection);
  c.epsilon_t = j.value("epsilon_t", c.epsilon_t);
  c.embedding_base = j.value("embedding_base", c.embedding_base);
  c.time_scale = j.value("time_scale", c.time_scale);
  if (validate) c.validate();
  return c;
}

Tensor tensor_from(const json& j, const std::string& name) {
  try {
    return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
  } catch (const std::exception& e) {
    throw std::invalid_argument("parameter '" + name + "': " + e.what());
  }
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

ModelConfig model_config_from_json(std::string_view text, bool validate) {
  return config_from(json::parse(text), validate);
}

std::string checkpoint_to_json(const RecurrentGraphNetwork& model) {
  const ParamStore& store = model.params();
  json params = json::object();
  json first = json::object();
  json second = json::object();
  for (std::size_t i = 0; i < store.size(); ++i) {
    params[store.name(i)] = {{"shape", store.value(i).shape()}, {"data", store.value(i).values()}};
    first[store.name(i)] = store.first_moment(i).values();
    second[store.name(i)] = store.second_moment(i).values();
  }
  json doc = {{"format_version", kCheckpointFormatVersion},
              {"config", config_json(model.config())},
              {"params", std::move(params)},
              {"adam",
               {{"step", store.step_count()},
                {"first_moment", std::move(first)},
                {"second_moment", std::move(second)}}}};
  return doc.dump();
}

RecurrentGraphNetwork checkpoint_from_json(std::string_view text) {
  const json doc = json::parse(text);
  const int version = doc.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion) {
    throw std::invalid_argument("unsupported checkpoint format_version " + std::to_string(version));
  }
  ModelConfig config = config_from(doc.at("config"));
  ParamStore store;
  for (const auto& [name, entry] : doc.at("params").items()) store.add(name, tensor_from(entry, name));
  if (doc.contains("adam")) {
    const json& adam = doc.at("adam");
    store.set_step_count(adam.value("step", std::uint64_t{0}));
    for (const auto& [name, data] : adam.at("first_moment").items()) {
      const std::size_t i = store.index(name);
      store.first_moment(i) = Tensor(store.value(i).shape(), data.get<std::vector<double>>());
    }
    for (const auto& [name, data] : adam.at("second_moment").items()) {
      const std::size_t i = store.index(name);
      store.second_moment(i) = Tensor(store.value(i).shape(), data.get<std::vector<double>>());
    }
  }
  return RecurrentGraphNetwork(std::move(config), std::move(store));
}

void save_checkpoint(const std::filesystem::path& path, const RecurrentGraphNetwork& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  out << checkpoint_to_json(model) << '\n';
}

RecurrentGraphNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace rgn
