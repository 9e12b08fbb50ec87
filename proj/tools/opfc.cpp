#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "opfc/cli.hpp"
#include "opfc/grid.hpp"

namespace {

using nlohmann::json;

struct Flags {
  std::string config;
  std::optional<std::string> network, out, dataset, model, mode, target, ratios;
  std::optional<long long> n, seed, epochs, workers;
  std::optional<double> train_frac;
  std::vector<std::string> model_pairs;
  bool flat_control = false;
  bool quiet = false;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file or run manifest");
  sub->add_option("--case", f.network, "MATPOWER case file");
  sub->add_option("--out", f.out, "Output path");
  sub->add_option("--workers", f.workers, "Parallel worker cap");
  sub->add_flag("--quiet", f.quiet, "Only print warnings and errors");
  sub->allow_extras();
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw opfc::Error("invalid number in list: '" + item + "'");
    }
  }
  return out;
}

// family:primal[:dual]
json parse_pair(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() < 2 || parts.size() > 3) throw opfc::Error("--pair expects family:primal[:dual], got '" + text + "'");
  json j = {{"family", parts[0]}, {"primal", parts[1]}};
  if (parts.size() == 3) j["dual"] = parts[2];
  return j;
}

void apply_extras(json& cfg, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw opfc::Error("unexpected argument '" + arg + "'");
    std::string key = arg.substr(2), value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw opfc::Error("missing value for '--" + key + "'");
      value = extras[++i];
    }
    if (key.find('.') == std::string::npos && !cfg.contains(key)) throw opfc::Error("unknown option '--" + key + "'");
    opfc::cli::apply_override(cfg, key, value);
  }
}

json build_config(const std::string& cmd, const Flags& f, const std::vector<std::string>& extras) {
  json cfg = f.config.empty() ? opfc::cli::default_config(cmd) : opfc::cli::load_config(cmd, f.config);
  if (f.network) cfg["network"] = *f.network;
  if (f.out) cfg["out"] = *f.out;
  if (f.workers) cfg["workers"] = *f.workers;
  if (f.dataset) cfg["dataset"] = *f.dataset;
  if (f.model) cfg["model"] = *f.model;
  if (cmd == "gen") {
    if (f.n) cfg["n"] = *f.n;
    if (f.seed) cfg["perturb"]["seed"] = *f.seed;
    if (f.train_frac) cfg["split"]["train_frac"] = *f.train_frac;
  } else if (cmd == "pca") {
    if (f.ratios) cfg["ratios"] = parse_list(*f.ratios);
    if (f.target) cfg["target"] = *f.target;
  } else if (cmd == "train") {
    if (f.seed) cfg["train"]["seed"] = *f.seed;
    if (f.epochs) cfg["train"]["max_epochs"] = *f.epochs;
    if (f.mode) cfg["train"]["mode"] = *f.mode;
    if (f.target) cfg["train"]["target"] = *f.target;
  } else if (cmd == "warmstart") {
    if (!f.model_pairs.empty()) {
      cfg["models"] = json::array();
      for (const auto& p : f.model_pairs) cfg["models"].push_back(parse_pair(p));
    }
    if (f.flat_control) cfg["flat_control"] = true;
  }
  apply_extras(cfg, extras);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compact learning for AC optimal power flow"};
  app.set_version_flag("--version", std::string(OPFC_VERSION));
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen", "Generate a dataset of solved perturbed instances");
  add_common(gen, f);
  gen->add_option("--n", f.n, "Number of instances");
  gen->add_option("--seed", f.seed, "Perturbation seed");
  gen->add_option("--train-frac", f.train_frac, "Also write a train/test split");

  auto* pca = app.add_subcommand("pca", "Explained-variance curve of a dataset");
  add_common(pca, f);
  pca->add_option("--dataset", f.dataset, "Dataset file");
  pca->add_option("--ratios", f.ratios, "Comma-separated component ratios");
  pca->add_option("--target", f.target, "primal or dual");

  auto* train = app.add_subcommand("train", "Train a model");
  add_common(train, f);
  train->add_option("--dataset", f.dataset, "Training dataset");
  train->add_option("--seed", f.seed, "Training seed");
  train->add_option("--epochs", f.epochs, "Epochs");
  train->add_option("--mode", f.mode, "compact, convl_small or convl_large");
  train->add_option("--target", f.target, "primal or dual");

  auto* eval = app.add_subcommand("eval", "Optimality gap and violation metrics");
  add_common(eval, f);
  eval->add_option("--dataset", f.dataset, "Test dataset");
  eval->add_option("--model", f.model, "Model file");

  auto* restore = app.add_subcommand("restore", "Power-flow restoration from predictions");
  add_common(restore, f);
  restore->add_option("--dataset", f.dataset, "Test dataset");
  restore->add_option("--model", f.model, "Primal model file");

  auto* ws = app.add_subcommand("warmstart", "Warm-start benchmark");
  add_common(ws, f);
  ws->add_option("--dataset", f.dataset, "Test dataset");
  ws->add_option("--pair", f.model_pairs, "family:primal_model[:dual_model], repeatable");
  ws->add_flag("--flat-control", f.flat_control, "Repeat the flat-start solve as a control");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "opfc: error: " << e.what() << '\n';
    return 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    spdlog::set_level(f.quiet ? spdlog::level::warn : spdlog::level::info);
    const std::string cmd = sub->get_name();
    const json cfg = build_config(cmd, f, sub->remaining());
    const auto result = opfc::cli::run(cmd, cfg);
    for (const auto& p : result.outputs) std::cout << p << '\n';
    std::cout << result.manifest << '\n';
  } catch (const std::exception& e) {
    std::cerr << "opfc: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
