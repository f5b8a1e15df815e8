#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rgn/checkpoint.hpp"
#include "rgn/datagen.hpp"
#include "rgn/dataset.hpp"
#include "rgn/evaluation.hpp"
#include "rgn/training.hpp"
#include "run_config.hpp"

namespace rgn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Errors caused by the user's configuration or inputs; exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (text.empty() || text.back() != '\n') out << '\n';
}

std::string read_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + what + " '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<EventSequence> load_required(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " dataset path is not set");
  if (!fs::exists(path)) throw ConfigError(what + " dataset not found: '" + path + "'");
  return load_dataset(path);
}

// ---- GeneratorSpec <-> JSON ----

json generator_json(const GeneratorSpec& g, const SplitFractions& split) {
  json j = {{"process", to_string(g.kind)},
            {"horizon", g.horizon},
            {"num_sequences", g.num_sequences},
            {"seed", g.seed},
            {"split", {split.train, split.validation, split.test}}};
  switch (g.kind) {
    case ProcessKind::kPoisson: j["rate"] = g.rates; break;
    case ProcessKind::kSine:
      j["sine_base"] = g.sine.base;
      j["sine_amplitude"] = g.sine.amplitude;
      break;
    case ProcessKind::kHawkes:
      j["mu"] = g.hawkes.mu;
      j["alpha"] = g.hawkes.excitation;
      j["beta_decay"] = g.hawkes.decay;
      break;
  }
  return j;
}

GeneratorSpec generator_from_json(const json& j) {
  GeneratorSpec g;
  g.kind = parse_process_kind(j.at("process").get<std::string>());
  g.horizon = j.at("horizon").get<double>();
  g.num_sequences = j.value("num_sequences", g.num_sequences);
  g.seed = j.value("seed", g.seed);
  g.rates = j.value("rate", g.rates);
  g.sine.base = j.value("sine_base", g.sine.base);
  g.sine.amplitude = j.value("sine_amplitude", g.sine.amplitude);
  g.hawkes.mu = j.value("mu", g.hawkes.mu);
  g.hawkes.excitation = j.value("alpha", g.hawkes.excitation);
  g.hawkes.decay = j.value("beta_decay", g.hawkes.decay);
  return g;
}

GeneratorSpec load_generator(const std::string& path) {
  const json j = json::parse(read_file(path, "generator description"));
  return generator_from_json(j.contains("generator") ? j.at("generator") : j);
}

json metrics_json(const Metrics& m) {
  return {{"nll_per_event", m.nll_per_event},
          {"type_accuracy", m.type_accuracy},
          {"time_rmse", m.time_rmse},
          {"log_likelihood", m.log_likelihood},
          {"ll_per_sequence", m.ll_per_sequence},
          {"sequences", m.sequences},
          {"events", m.events},
          {"predictions", m.predictions},
          {"clamped_log_intensities", m.clamped_log_intensities}};
}

double oracle_nll_per_event(const GeneratorSpec& g, const std::vector<EventSequence>& data) {
  double ll = 0.0;
  for (const auto& s : data) ll += oracle_loglik(g, s);
  const std::size_t n = total_events(data);
  return n ? -ll / static_cast<double>(n) : 0.0;
}

// ---- subcommand option holders ----

struct GenerateArgs {
  std::string process = "poisson";
  std::vector<double> rate{1.0};
  std::vector<double> mu;
  std::vector<double> alpha;
  double beta_decay = 1.0;
  double sine_base = 1.0;
  double sine_amplitude = 0.5;
  double horizon = 20.0;
  std::size_t num_seq = 100;
  std::uint64_t seed = 0;
  std::vector<double> split{0.8, 0.1, 0.1};
  std::string out = "data";
};

struct TrainArgs {
  std::string config;
  std::optional<std::string> train, validation, test, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size, tbptt_steps, mc_samples, patience;
  std::optional<std::size_t> num_types, hidden_dim, edge_dim, heads, gat_layers;
  std::optional<double> lr, dropout, loss_weight_time, loss_weight_type;
  bool record_wall_time = false;
};

struct EvalArgs {
  std::string config;
  std::optional<std::string> checkpoint, data, out;
  std::size_t mc_samples = 10;
  std::uint64_t seed = 0;
  std::string generator;
  std::size_t steps = 100;
  std::size_t sequence = 0;
};

struct ComplexityArgs {
  std::string config, checkpoint;
  std::optional<std::size_t> num_types, hidden_dim, edge_dim, heads, gat_layers;
  std::size_t length = 0;
  std::string out = "out";
};

// ---- subcommands ----

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  GeneratorSpec g;
  g.kind = parse_process_kind(a.process);
  g.horizon = a.horizon;
  g.num_sequences = a.num_seq;
  g.seed = a.seed;
  g.rates = a.rate;
  g.sine = {a.sine_base, a.sine_amplitude};
  if (g.kind == ProcessKind::kHawkes) {
    if (a.mu.empty()) throw ConfigError("hawkes needs --mu");
    g.hawkes.mu = a.mu;
    g.hawkes.excitation = a.alpha.empty() ? std::vector<double>(a.mu.size() * a.mu.size(), 0.0) : a.alpha;
    g.hawkes.decay = a.beta_decay;
    g.hawkes.validate();
  }
  if (a.split.size() != 3) throw ConfigError("--split takes three fractions (train validation test)");
  const SplitFractions fractions{a.split[0], a.split[1], a.split[2]};

  auto data = generate_dataset(g);
  const DatasetSplits splits = split_dataset(std::move(data), fractions, g.seed);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  save_dataset(dir / "train.jsonl", splits.train);
  save_dataset(dir / "validation.jsonl", splits.validation);
  save_dataset(dir / "test.jsonl", splits.test);

  json echo = {{"command", "generate"},
               {"seed", g.seed},
               {"generator", generator_json(g, fractions)},
               {"sizes",
                {{"train", splits.train.size()},
                 {"validation", splits.validation.size()},
                 {"test", splits.test.size()}}},
               {"oracle_nll_per_event",
                {{"train", oracle_nll_per_event(g, splits.train)},
                 {"validation", oracle_nll_per_event(g, splits.validation)},
                 {"test", oracle_nll_per_event(g, splits.test)}}}};
  write_file(dir / "generate_config.json", echo.dump(2));
  out << "wrote " << splits.train.size() << "/" << splits.validation.size() << "/"
      << splits.test.size() << " sequences to " << dir.string() << '\n';
  return kExitOk;
}

RunConfig resolve_train_config(const TrainArgs& a) {
  RunConfig c;
  c.model.num_types = 0;
  if (!a.config.empty()) c = load_run_config(a.config);
  if (a.train) c.train_path = *a.train;
  if (a.validation) c.validation_path = *a.validation;
  if (a.test) c.test_path = *a.test;
  if (a.out) c.output_dir = *a.out;
  if (a.seed) c.train.seed = *a.seed;
  if (a.epochs) c.train.epochs = *a.epochs;
  if (a.batch_size) c.train.batch_size = *a.batch_size;
  if (a.tbptt_steps) c.train.tbptt_steps = *a.tbptt_steps;
  if (a.mc_samples) c.train.mc_samples = *a.mc_samples;
  if (a.patience) c.train.patience = *a.patience;
  if (a.lr) c.train.lr = *a.lr;
  if (a.loss_weight_time) c.train.weights.time = *a.loss_weight_time;
  if (a.loss_weight_type) c.train.weights.type = *a.loss_weight_type;
  if (a.record_wall_time) c.train.record_wall_time = true;
  if (a.num_types) c.model.num_types = *a.num_types;
  if (a.hidden_dim) c.model.hidden_dim = *a.hidden_dim;
  if (a.edge_dim) c.model.edge_dim = *a.edge_dim;
  if (a.heads) c.model.num_heads = *a.heads;
  if (a.gat_layers) c.model.num_gat_layers = *a.gat_layers;
  if (a.dropout) c.model.dropout = *a.dropout;
  return c;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig c = resolve_train_config(a);
  const auto train_set = load_required(c.train_path, "training");
  const auto val_set = load_required(c.validation_path, "validation");
  std::vector<EventSequence> test_set;
  if (!c.test_path.empty()) test_set = load_required(c.test_path, "test");
  if (c.model.num_types == 0) {
    c.model.num_types = std::max({infer_num_types(train_set), infer_num_types(val_set),
                                  test_set.empty() ? std::size_t{1} : infer_num_types(test_set)});
  }
  c.model.validate();
  c.train.validate();

  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  write_file(dir / "train_config.json", run_config_to_json(c));

  RecurrentGraphNetwork model(c.model, c.train.seed);
  out << "training " << model.params().total_elements() << " parameters on " << train_set.size()
      << " sequences (" << total_events(train_set) << " events)\n";
  TrainResult result = train(std::move(model), train_set, val_set, c.train, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << ' ' << r.split << " nll/event " << r.nll_per_event << " acc "
        << r.type_accuracy << " rmse " << r.time_rmse << '\n';
  });

  std::ostringstream csv;
  write_metrics_csv(csv, result.history);
  write_file(dir / "metrics.csv", csv.str());
  save_checkpoint(dir / "checkpoint.json", result.model);
  save_checkpoint(dir / "best_nll.json", result.best_nll);
  save_checkpoint(dir / "best_accuracy.json", result.best_accuracy);
  save_checkpoint(dir / "best_rmse.json", result.best_rmse);

  json summary = {{"epochs_run", result.epochs_run},
                  {"optimizer_steps", result.optimizer_steps},
                  {"best_validation", metrics_json(result.best_validation)}};
  if (!test_set.empty()) {
    summary["test"] = metrics_json(validation_metrics(result.best_nll, test_set, c.train));
  }
  write_file(dir / "train_summary.json", summary.dump(2));
  out << "wrote checkpoints and metrics to " << dir.string() << '\n';
  return kExitOk;
}

struct EvalInputs {
  RecurrentGraphNetwork model;
  std::vector<EventSequence> data;
  fs::path dir;
};

EvalInputs resolve_eval(const EvalArgs& a, bool need_model = true) {
  RunConfig c;
  if (!a.config.empty()) c = load_run_config(a.config);
  if (a.checkpoint) c.checkpoint = *a.checkpoint;
  if (a.out) c.output_dir = *a.out;
  std::string data_path = a.data ? *a.data : c.test_path;
  std::vector<EventSequence> data = load_required(data_path, "evaluation");
  if (!need_model && c.checkpoint.empty()) {
    ModelConfig placeholder;
    return {RecurrentGraphNetwork(placeholder, 0), std::move(data), c.output_dir};
  }
  if (c.checkpoint.empty()) throw ConfigError("checkpoint path is not set");
  if (!fs::exists(c.checkpoint)) throw ConfigError("checkpoint not found: '" + c.checkpoint + "'");
  RecurrentGraphNetwork model = load_checkpoint(c.checkpoint);
  for (const auto& s : data) s.validate(model.config().num_types);
  return {std::move(model), std::move(data), c.output_dir};
}

int cmd_evaluate(const EvalArgs& a, std::ostream& out) {
  EvalInputs in = resolve_eval(a);
  const Metrics m = evaluate_metrics(in.model, in.data, MCIntegralConfig{a.mc_samples, a.seed});
  json report = metrics_json(m);
  if (!a.generator.empty()) {
    report["oracle_nll_per_event"] = oracle_nll_per_event(load_generator(a.generator), in.data);
  }
  fs::create_directories(in.dir);
  json echo = {{"command", "evaluate"},
               {"seed", a.seed},
               {"mc_samples", a.mc_samples},
               {"checkpoint", a.checkpoint.value_or("")},
               {"data", a.data.value_or("")},
               {"generator", a.generator},
               {"model", json::parse(model_config_to_json(in.model.config()))}};
  write_file(in.dir / "evaluate_config.json", echo.dump(2));
  write_file(in.dir / "eval_metrics.json", report.dump(2));
  EpochRecord row;
  row.split = "eval";
  row.nll_per_event = m.nll_per_event;
  row.type_accuracy = m.type_accuracy;
  row.time_rmse = m.time_rmse;
  std::ostringstream csv;
  write_metrics_csv(csv, std::span<const EpochRecord>(&row, 1));
  write_file(in.dir / "eval_metrics.csv", csv.str());
  out << "nll/event " << m.nll_per_event << " acc " << m.type_accuracy << " rmse " << m.time_rmse
      << '\n';
  return kExitOk;
}

int cmd_gof(const EvalArgs& a, std::ostream& out) {
  const bool use_truth = !a.generator.empty() && !a.checkpoint;
  EvalInputs in = resolve_eval(a, /*need_model=*/!use_truth);
  std::vector<RescaledInterarrivals> z;
  z.reserve(in.data.size());
  if (use_truth) {
    const GeneratorSpec g = load_generator(a.generator);
    for (const auto& s : in.data) z.push_back(rescale(g, s, a.steps));
  } else {
    for (const auto& s : in.data) z.push_back(rescale(in.model, s, a.steps));
  }
  const GofReport report = goodness_of_fit(z);
  fs::create_directories(in.dir);
  json echo = {{"command", "gof"},
               {"steps", a.steps},
               {"intensity", use_truth ? "generator" : "model"},
               {"checkpoint", a.checkpoint.value_or("")},
               {"generator", a.generator},
               {"data", a.data.value_or("")}};
  write_file(in.dir / "gof_config.json", echo.dump(2));
  std::ostringstream pp;
  write_pp_csv(pp, report);
  write_file(in.dir / "pp.csv", pp.str());
  write_file(in.dir / "ks.json", gof_report_json(report));
  out << "KS D=" << report.ks_statistic << " (5% critical " << report.critical_5 << ", n="
      << report.sample_size << ") " << (report.passes_5() ? "pass" : "fail") << '\n';
  return kExitOk;
}

int cmd_attention(const EvalArgs& a, std::ostream& out) {
  EvalInputs in = resolve_eval(a);
  if (a.sequence >= in.data.size()) {
    throw ConfigError("--sequence " + std::to_string(a.sequence) + " out of range (dataset has " +
                      std::to_string(in.data.size()) + " sequences)");
  }
  fs::create_directories(in.dir);
  json echo = {{"command", "inspect-attention"},
               {"checkpoint", a.checkpoint.value_or("")},
               {"data", a.data.value_or("")},
               {"sequence", a.sequence},
               {"sequence_id", in.data[a.sequence].id}};
  write_file(in.dir / "inspect_attention_config.json", echo.dump(2));
  std::ofstream csv(in.dir / "attention.csv");
  if (!csv) throw ConfigError("cannot write '" + (in.dir / "attention.csv").string() + "'");
  const std::size_t rows = attention_dump(in.model, in.data[a.sequence], csv);
  out << "wrote " << rows << " attention rows\n";
  return kExitOk;
}

int cmd_complexity(const ComplexityArgs& a, std::ostream& out) {
  ModelConfig mc;
  if (!a.checkpoint.empty()) {
    if (!fs::exists(a.checkpoint)) throw ConfigError("checkpoint not found: '" + a.checkpoint + "'");
    mc = load_checkpoint(a.checkpoint).config();
  } else if (!a.config.empty()) {
    mc = load_run_config(a.config).model;
  }
  if (a.num_types) mc.num_types = *a.num_types;
  if (a.hidden_dim) mc.hidden_dim = *a.hidden_dim;
  if (a.edge_dim) mc.edge_dim = *a.edge_dim;
  if (a.heads) mc.num_heads = *a.heads;
  if (a.gat_layers) mc.num_gat_layers = *a.gat_layers;
  mc.validate();
  const ComplexityReport r = complexity_report(mc, a.length);
  fs::create_directories(a.out);
  json echo = {{"command", "complexity"},
               {"length", a.length},
               {"model", json::parse(model_config_to_json(mc))}};
  write_file(fs::path(a.out) / "complexity_config.json", echo.dump(2));
  write_file(fs::path(a.out) / "complexity.json", complexity_report_json(r));
  out << "attention scores " << r.attention_scores << " (" << r.attention_scores_per_event
      << " per event), flops " << r.flops << '\n';
  return kExitOk;
}

void add_eval_options(CLI::App* cmd, EvalArgs& a) {
  cmd->add_option("--config", a.config, "run config JSON");
  cmd->add_option("--checkpoint", a.checkpoint, "model checkpoint JSON");
  cmd->add_option("--data", a.data, "dataset JSONL (defaults to the config's test path)");
  cmd->add_option("--out", a.out, "output directory");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Recurrent graph network temporal point process toolkit", "rgntpp"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "sample a synthetic dataset and split it");
  generate->add_option("--process", gen.process, "poisson | sine | hawkes")->capture_default_str();
  generate->add_option("--rate", gen.rate, "per-type Poisson rates")->delimiter(',');
  generate->add_option("--mu", gen.mu, "Hawkes base rates")->delimiter(',');
  generate->add_option("--alpha", gen.alpha, "Hawkes excitation matrix, row-major")->delimiter(',');
  generate->add_option("--beta-decay", gen.beta_decay, "Hawkes kernel decay")->capture_default_str();
  generate->add_option("--sine-base", gen.sine_base, "sine process base rate")->capture_default_str();
  generate->add_option("--sine-amplitude", gen.sine_amplitude, "sine process amplitude")->capture_default_str();
  generate->add_option("--horizon", gen.horizon, "observation window T")->capture_default_str();
  generate->add_option("--num-seq", gen.num_seq, "number of sequences")->capture_default_str();
  generate->add_option("--seed", gen.seed, "run seed")->capture_default_str();
  generate->add_option("--split", gen.split, "train,validation,test fractions")->delimiter(',');
  generate->add_option("--out", gen.out, "output directory")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model (flags override config keys)");
  train_cmd->add_option("--config", tr.config, "run config JSON");
  train_cmd->add_option("--train", tr.train, "training JSONL");
  train_cmd->add_option("--validation", tr.validation, "validation JSONL");
  train_cmd->add_option("--test", tr.test, "test JSONL (optional)");
  train_cmd->add_option("--out", tr.out, "output directory");
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--tbptt-steps", tr.tbptt_steps);
  train_cmd->add_option("--mc-samples", tr.mc_samples);
  train_cmd->add_option("--patience", tr.patience);
  train_cmd->add_option("--loss-weight-time", tr.loss_weight_time);
  train_cmd->add_option("--loss-weight-type", tr.loss_weight_type);
  train_cmd->add_option("--num-types", tr.num_types);
  train_cmd->add_option("--hidden-dim", tr.hidden_dim);
  train_cmd->add_option("--edge-dim", tr.edge_dim);
  train_cmd->add_option("--heads", tr.heads);
  train_cmd->add_option("--gat-layers", tr.gat_layers);
  train_cmd->add_option("--dropout", tr.dropout);
  train_cmd->add_flag("--record-wall-time", tr.record_wall_time,
                      "fill wall_seconds in metrics.csv (makes it non-reproducible)");

  EvalArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "per-event NLL, type accuracy and time RMSE");
  add_eval_options(evaluate, ev);
  evaluate->add_option("--mc-samples", ev.mc_samples)->capture_default_str();
  evaluate->add_option("--seed", ev.seed, "evaluation seed")->capture_default_str();
  evaluate->add_option("--generator", ev.generator, "generate_config.json for oracle NLL");

  EvalArgs gf;
  auto* gof = app.add_subcommand("gof", "time-rescaling goodness of fit (P-P data and KS test)");
  add_eval_options(gof, gf);
  gof->add_option("--steps", gf.steps, "trapezoid subintervals per interval")->capture_default_str();
  gof->add_option("--generator", gf.generator,
                  "generate_config.json; without --checkpoint the true intensity is used");

  EvalArgs at;
  auto* attention = app.add_subcommand("inspect-attention", "dump attention weights as CSV");
  add_eval_options(attention, at);
  attention->add_option("--sequence", at.sequence, "index of the sequence in the dataset")
      ->capture_default_str();

  ComplexityArgs cx;
  auto* complexity = app.add_subcommand("complexity", "attention-score and FLOP counts");
  complexity->add_option("--config", cx.config, "run config JSON");
  complexity->add_option("--checkpoint", cx.checkpoint, "model checkpoint JSON");
  complexity->add_option("--length", cx.length, "sequence length N")->required();
  complexity->add_option("--num-types", cx.num_types);
  complexity->add_option("--hidden-dim", cx.hidden_dim);
  complexity->add_option("--edge-dim", cx.edge_dim);
  complexity->add_option("--heads", cx.heads);
  complexity->add_option("--gat-layers", cx.gat_layers);
  complexity->add_option("--out", cx.out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (*generate) return cmd_generate(gen, out);
    if (*train_cmd) return cmd_train(tr, out);
    if (*evaluate) return cmd_evaluate(ev, out);
    if (*gof) return cmd_gof(gf, out);
    if (*attention) return cmd_attention(at, out);
    if (*complexity) return cmd_complexity(cx, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumericalError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  return kExitConfigError;
}

}  // namespace rgn::cli
