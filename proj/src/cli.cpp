#include "opfc/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

#include "opfc/bench.hpp"
#include "opfc/datagen.hpp"
#include "opfc/grid.hpp"
#include "opfc/io.hpp"
#include "opfc/restore.hpp"
#include "opfc/spectra.hpp"
#include "opfc/train.hpp"

namespace opfc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"gen", "pca", "train", "eval", "restore", "warmstart"};
  return names;
}

namespace {

json ipm_defaults() {
  const IpmConfig c;
  return {{"tol", c.tol}, {"max_iter", c.max_iter}, {"mu_init_flat", c.mu_init_flat}, {"mu_init_warm", c.mu_init_warm}};
}

IpmConfig ipm_from(const json& j) {
  IpmConfig c;
  c.tol = j.at("tol").get<double>();
  c.max_iter = j.at("max_iter").get<int>();
  c.mu_init_flat = j.at("mu_init_flat").get<double>();
  c.mu_init_warm = j.at("mu_init_warm").get<double>();
  c.validate();
  return c;
}

std::string sibling(const std::string& out, const std::string& suffix) {
  fs::path p(out);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

int workers_from(const json& cfg) {
  const int w = cfg.at("workers").get<int>();
  return w > 0 ? w : default_workers();
}

std::string require_path(const json& cfg, const std::string& key) {
  const std::string p = cfg.at(key).get<std::string>();
  if (p.empty()) throw Error("missing required setting '" + key + "'");
  if (!fs::exists(p)) throw Error(key + " file not found: " + p);
  return p;
}

std::string require_out(const json& cfg) {
  const std::string p = cfg.at("out").get<std::string>();
  if (p.empty()) throw Error("missing required setting 'out'");
  return p;
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct Context {
  json inputs = json::object();
  json seeds = json::object();
  json warnings = json::array();
  std::vector<std::string> outputs;

  std::string input(const std::string& path) {
    inputs[path] = file_hash(path);
    return path;
  }
  void output(const std::string& path, const std::string& text) {
    write_text_file(path, text);
    outputs.push_back(path);
  }
};

Network load_network(Context& ctx, const json& cfg) {
  std::vector<std::string> warnings;
  Network net = load_matpower_file(ctx.input(require_path(cfg, "network")), &warnings);
  for (const auto& w : warnings) spdlog::warn("{}", w);
  return net;
}

Dataset load_dataset(Context& ctx, const json& cfg, const std::string& key = "dataset") {
  return read_dataset(ctx.input(require_path(cfg, key)));
}

TrainedModel load_model(Context& ctx, const std::string& path) {
  if (path.empty()) throw Error("missing model path");
  if (!fs::exists(path)) throw Error("model file not found: " + path);
  return read_model(ctx.input(path));
}

void cmd_gen(Context& ctx, const json& cfg) {
  const Network net = load_network(ctx, cfg);
  const PerturbConfig pc = perturb_config_from_json(cfg.at("perturb"));
  const auto n = cfg.at("n").get<std::size_t>();
  ctx.seeds["perturb"] = pc.seed;
  const Dataset ds = generate(net, pc, n, ipm_from(cfg.at("ipm")), workers_from(cfg));
  const std::string out = require_out(cfg);
  ctx.output(out, dataset_to_jsonl(ds));
  const double frac = cfg.at("split").at("train_frac").get<double>();
  if (frac > 0.0) {
    const auto seed = cfg.at("split").at("seed").get<std::uint64_t>();
    ctx.seeds["split"] = seed;
    const auto [train, test] = split(ds, frac, seed);
    ctx.output(sibling(out, ".train.jsonl"), dataset_to_jsonl(train));
    ctx.output(sibling(out, ".test.jsonl"), dataset_to_jsonl(test));
  }
  if (ds.skip_warning()) {
    const std::string w = "skip rate above 10%: " + std::to_string(ds.skipped) + " of " + std::to_string(ds.requested);
    spdlog::warn("{}", w);
    ctx.warnings.push_back(w);
  }
  spdlog::info("generated {} records ({} skipped)", ds.size(), ds.skipped);
}

void cmd_pca(Context& ctx, const json& cfg) {
  const Dataset ds = load_dataset(ctx, cfg);
  const std::string target = cfg.at("target").get<std::string>();
  if (target != "primal" && target != "dual") throw Error("pca target must be primal or dual");
  PcaOptions opt;
  opt.standardize = cfg.at("standardize").get<bool>();
  const PcaDecomposition pca = fit_exact_pca(target == "primal" ? ds.targets() : ds.duals(), opt);
  ctx.output(require_out(cfg), evr_csv(evr_curve(pca, cfg.at("ratios").get<std::vector<double>>())));
}

void cmd_train(Context& ctx, const json& cfg) {
  const Dataset ds = load_dataset(ctx, cfg);
  const TrainConfig tc = train_config_from_json(cfg.at("train"));
  ctx.seeds["train"] = tc.seed;
  std::optional<Network> net;
  if (!cfg.at("network").get<std::string>().empty()) {
    net = load_network(ctx, cfg);
    check_fingerprint(ds, *net);
  }
  TrainLog log;
  json model;
  if (tc.target == TrainTarget::dual) {
    if (!net) throw Error("dual training needs the network (set 'network')");
    model = to_json(train_dual(ds, *net, tc, &log));
  } else if (tc.mode == TrainMode::compact) {
    model = to_json(train_compact(ds, tc, &log));
  } else {
    model = to_json(train_conventional(ds, tc, &log));
  }
  const std::string out = require_out(cfg);
  ctx.output(out, model.dump() + "\n");
  std::ostringstream loss;
  loss << "epoch,l1_loss\n";
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) loss << e + 1 << ',' << format_double(log.epoch_loss[e]) << '\n';
  ctx.output(sibling(out, ".loss.csv"), loss.str());
}

void cmd_eval(Context& ctx, const json& cfg) {
  const Network net = load_network(ctx, cfg);
  const Dataset ds = load_dataset(ctx, cfg);
  const TrainedModel model = load_model(ctx, cfg.at("model").get<std::string>());
  const MetricsReport r = evaluate(model, ds, net);
  const std::string out = require_out(cfg);
  ctx.output(out, metrics_csv_header() + metrics_csv_row(model.method_name(), r));
  ctx.output(sibling(out, ".instances.csv"), instance_metrics_csv(r));
  spdlog::info("{}: gap {:.4f}% violation {:.4g} p.u. ({} parameters)", model.method_name(), r.mean_gap,
               r.mean_max_violation, model.parameters());
}

void cmd_restore(Context& ctx, const json& cfg) {
  const Network net = load_network(ctx, cfg);
  const Dataset ds = load_dataset(ctx, cfg);
  const TrainedModel model = load_model(ctx, cfg.at("model").get<std::string>());
  if (model.fingerprint() != ds.fingerprint) throw Error("model fingerprint does not match the dataset");
  if (model.target() != TrainTarget::primal) throw Error("restore needs a primal model");
  const auto rows = restore_all(net, ds, model.predict(ds.inputs()), workers_from(cfg), cfg.at("tol").get<double>(),
                                cfg.at("max_iter").get<int>());
  const std::string out = require_out(cfg);
  ctx.output(out, restore_csv(rows));
  ctx.output(sibling(out, ".summary.csv"), restore_summary_csv(model.method_name(), summarize(rows)));
}

void cmd_warmstart(Context& ctx, const json& cfg) {
  const Network net = load_network(ctx, cfg);
  const Dataset ds = load_dataset(ctx, cfg);
  std::vector<ModelPair> models;
  for (const auto& m : cfg.at("models")) {
    ModelPair pair;
    pair.primal = load_model(ctx, m.at("primal").get<std::string>());
    pair.family = m.value("family", pair.primal.method_name());
    const std::string dual = m.value("dual", std::string());
    if (!dual.empty()) pair.dual = load_model(ctx, dual);
    models.push_back(std::move(pair));
  }
  BenchConfig bc;
  bc.ipm = ipm_from(cfg.at("ipm"));
  bc.workers = workers_from(cfg);
  bc.flat_control = cfg.at("flat_control").get<bool>();
  bc.self_warm_start = cfg.at("self_warm_start").get<bool>();
  const WarmStartReport r = run_suite(net, ds, models, bc);
  const fs::path dir(require_out(cfg));
  ctx.output((dir / "report.csv").string(), report_csv(r));
  ctx.output((dir / "trace.csv").string(), trace_csv(r.trace));
  ctx.output((dir / "ratios.csv").string(), ratio_csv(r.ratios));
  ctx.output((dir / "curve.csv").string(),
             solved_within_curve(r, default_time_grid(r, cfg.at("curve_points").get<int>())));
}

// Re-reads every output so that a zero exit status implies readable files.
void validate_outputs(const std::vector<std::string>& outputs) {
  for (const auto& p : outputs) {
    const std::string text = read_text_file(p);
    if (text.empty()) throw Error("output is empty: " + p);
    if (p.size() > 6 && p.compare(p.size() - 6, 6, ".jsonl") == 0) dataset_from_jsonl(text);
    else if (p.size() > 5 && p.compare(p.size() - 5, 5, ".json") == 0) {
      const json parsed = json::parse(text);
      if (parsed.is_discarded()) throw Error("output is not valid JSON: " + p);
    }
  }
}

}  // namespace

json default_config(const std::string& command) {
  json c = {{"network", ""}, {"workers", 0}, {"out", ""}, {"ipm", ipm_defaults()}};
  if (command == "gen") {
    c["n"] = 100;
    c["perturb"] = to_json(PerturbConfig{});
    c["split"] = {{"train_frac", 0.0}, {"seed", 0}};
  } else if (command == "pca") {
    c["dataset"] = "";
    c["ratios"] = {0.01, 0.05, 0.10, 0.20};
    c["standardize"] = true;
    c["target"] = "primal";
  } else if (command == "train") {
    c["dataset"] = "";
    c["train"] = to_json(TrainConfig{});
  } else if (command == "eval") {
    c["dataset"] = "";
    c["model"] = "";
  } else if (command == "restore") {
    c["dataset"] = "";
    c["model"] = "";
    c["tol"] = 1e-8;
    c["max_iter"] = 30;
  } else if (command == "warmstart") {
    c["dataset"] = "";
    c["models"] = json::array();
    c["flat_control"] = false;
    c["self_warm_start"] = true;
    c["curve_points"] = 50;
  } else {
    throw Error("unknown subcommand '" + command + "'");
  }
  return c;
}

void merge_checked(json& config, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw Error("configuration must be a JSON object");
  for (const auto& [key, value] : patch.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!config.contains(key)) throw Error("unknown config key '" + name + "'");
    json& slot = config[key];
    if (slot.is_object() && value.is_object()) merge_checked(slot, value, name);
    else slot = value;
  }
}

void apply_override(json& config, const std::string& dotted_key, const std::string& value) {
  json* node = &config;
  std::istringstream parts(dotted_key);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!node->is_object() || !node->contains(part)) throw Error("unknown config key '" + dotted_key + "'");
    node = &(*node)[part];
  }
  if (node->is_string()) {
    *node = value;
    return;
  }
  try {
    *node = json::parse(value);
  } catch (const json::exception&) {
    throw Error("invalid value for '" + dotted_key + "': " + value);
  }
}

json load_config(const std::string& command, const std::string& path) {
  json file;
  try {
    file = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
  if (file.contains("format") && file.at("format") == "opfc-manifest") {
    if (file.at("command") != command)
      throw Error("manifest " + path + " records command '" + file.at("command").get<std::string>() + "'");
    file = file.at("config");
  }
  json cfg = default_config(command);
  merge_checked(cfg, file);
  return cfg;
}

std::string manifest_path(const std::string& command, const std::string& out) {
  if (command == "warmstart") return (fs::path(out) / "manifest.json").string();
  return sibling(out, ".manifest.json");
}

RunResult run(const std::string& command, const json& config) {
  json cfg = default_config(command);
  merge_checked(cfg, config);
  Context ctx;
  if (command == "gen") cmd_gen(ctx, cfg);
  else if (command == "pca") cmd_pca(ctx, cfg);
  else if (command == "train") cmd_train(ctx, cfg);
  else if (command == "eval") cmd_eval(ctx, cfg);
  else if (command == "restore") cmd_restore(ctx, cfg);
  else cmd_warmstart(ctx, cfg);
  validate_outputs(ctx.outputs);

  json outputs = json::object();
  for (const auto& p : ctx.outputs) outputs[p] = file_hash(p);
  const json manifest = {{"format", "opfc-manifest"}, {"format_version", 1},        {"tool", "opfc"},
                         {"version", OPFC_VERSION},   {"command", command},         {"config", cfg},
                         {"seeds", ctx.seeds},        {"inputs", ctx.inputs},       {"outputs", outputs},
                         {"warnings", ctx.warnings},  {"created", utc_timestamp()}};
  RunResult r;
  r.outputs = ctx.outputs;
  r.manifest = manifest_path(command, require_out(cfg));
  write_text_file(r.manifest, manifest.dump(2) + "\n");
  return r;
}

}  // namespace opfc::cli
