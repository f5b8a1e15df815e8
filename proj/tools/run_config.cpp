#include "run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "rgn/checkpoint.hpp"

namespace rgn::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw std::invalid_argument("unknown " + where + " key '" + k + "'");
  }
}

TrainConfig train_from(const json& j) {
  reject_unknown(j,
                 {"epochs", "lr", "tbptt_steps", "batch_size", "seed", "clip_norm", "mc_samples",
                  "validate_every", "patience", "loss_weight_type", "loss_weight_time", "shuffle",
                  "record_wall_time"},
                 "train config");
  TrainConfig t;
  t.epochs = j.value("epochs", t.epochs);
  t.lr = j.value("lr", t.lr);
  t.tbptt_steps = j.value("tbptt_steps", t.tbptt_steps);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.seed = j.value("seed", t.seed);
  t.clip_norm = j.value("clip_norm", t.clip_norm);
  t.mc_samples = j.value("mc_samples", t.mc_samples);
  t.validate_every = j.value("validate_every", t.validate_every);
  t.patience = j.value("patience", t.patience);
  t.weights.type = j.value("loss_weight_type", t.weights.type);
  t.weights.time = j.value("loss_weight_time", t.weights.time);
  t.shuffle = j.value("shuffle", t.shuffle);
  t.record_wall_time = j.value("record_wall_time", t.record_wall_time);
  return t;
}

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"lr", t.lr},
          {"tbptt_steps", t.tbptt_steps},
          {"batch_size", t.batch_size},
          {"seed", t.seed},
          {"clip_norm", t.clip_norm},
          {"mc_samples", t.mc_samples},
          {"validate_every", t.validate_every},
          {"patience", t.patience},
          {"loss_weight_type", t.weights.type},
          {"loss_weight_time", t.weights.time},
          {"shuffle", t.shuffle},
          {"record_wall_time", t.record_wall_time}};
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"model", "train", "data", "output_dir", "checkpoint"}, "config");
  RunConfig c;
  try {
    if (j.contains("model")) {
      c.model = model_config_from_json(j.at("model").dump(), /*validate=*/false);
      if (!j.at("model").contains("num_types")) c.model.num_types = 0;
    } else {
      c.model.num_types = 0;
    }
    if (j.contains("train")) c.train = train_from(j.at("train"));
    if (j.contains("data")) {
      const json& d = j.at("data");
      reject_unknown(d, {"train", "validation", "test"}, "data");
      c.train_path = d.value("train", c.train_path);
      c.validation_path = d.value("validation", c.validation_path);
      c.test_path = d.value("test", c.test_path);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.checkpoint = j.value("checkpoint", c.checkpoint);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config schema error: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return run_config_from_json(buf.str());
}

std::string run_config_to_json(const RunConfig& config) {
  json j = {{"model", json::parse(model_config_to_json(config.model))},
            {"train", train_json(config.train)},
            {"data",
             {{"train", config.train_path},
              {"validation", config.validation_path},
              {"test", config.test_path}}},
            {"output_dir", config.output_dir},
            {"checkpoint", config.checkpoint}};
  return j.dump(2);
}

}  // namespace rgn::cli
