#include "opfc/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "opfc/io.hpp"
#include "opfc/parallel.hpp"

namespace opfc {

using Eigen::Index;
using Eigen::VectorXd;

void PerturbConfig::validate() const {
  if (!(active_spread > 0.0 && active_spread < 1.0)) throw Error("active_spread must lie in (0, 1)");
  if (!(corr >= 0.0 && corr < 1.0)) throw Error("corr must lie in [0, 1)");
  if (!(gauss_sigma >= 0.0) || !std::isfinite(gauss_sigma)) throw Error("gauss_sigma must be nonnegative");
  if (!(reactive_low <= reactive_high)) throw Error("reactive_low must not exceed reactive_high");
}

nlohmann::json to_json(const PerturbConfig& c) {
  return {{"active_spread", c.active_spread}, {"corr", c.corr},       {"gauss_sigma", c.gauss_sigma},
          {"reactive_low", c.reactive_low},   {"reactive_high", c.reactive_high}, {"seed", c.seed}};
}

PerturbConfig perturb_config_from_json(const nlohmann::json& j) {
  PerturbConfig c;
  c.active_spread = j.value("active_spread", c.active_spread);
  c.corr = j.value("corr", c.corr);
  c.gauss_sigma = j.value("gauss_sigma", c.gauss_sigma);
  c.reactive_low = j.value("reactive_low", c.reactive_low);
  c.reactive_high = j.value("reactive_high", c.reactive_high);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

namespace {

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t k) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(k),
                    static_cast<std::uint32_t>(k >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

Instance perturb(const Network& net, const PerturbConfig& cfg, std::uint64_t k) {
  cfg.validate();
  const auto nl = static_cast<Index>(net.num_loads());
  auto rng = stream_rng(cfg.seed, k);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double a = std::sqrt(cfg.corr), b = std::sqrt(1.0 - cfg.corr);

  VectorXd m(nl);
  bool ok = false;
  for (int attempt = 0; attempt < kMaxRedraws && !ok; ++attempt) {
    const double z0 = normal(rng);
    ok = true;
    for (Index i = 0; i < nl; ++i) {
      m[i] = 1.0 + cfg.gauss_sigma * (a * z0 + b * normal(rng));
      if (std::abs(m[i] - 1.0) > cfg.active_spread) ok = false;
    }
  }
  if (!ok) throw Error("load perturbation rejected " + std::to_string(kMaxRedraws) + " times; gauss_sigma is too large");

  std::uniform_real_distribution<double> uniform(cfg.reactive_low, cfg.reactive_high);
  Instance inst{VectorXd(nl), VectorXd(nl)};
  for (Index i = 0; i < nl; ++i) {
    const auto& load = net.loads[static_cast<std::size_t>(i)];
    inst.pd[i] = m[i] * load.pd_base;
    const double u = cfg.reactive_low == cfg.reactive_high ? cfg.reactive_low : uniform(rng);
    inst.qd[i] = u * load.qd_base;
  }
  return inst;
}

bool Dataset::skip_warning() const { return requested > 0 && 10 * skipped > requested; }

namespace {

Eigen::MatrixXd stack(const std::vector<Record>& recs, std::size_t dim, VectorXd Record::*field) {
  Eigen::MatrixXd m(static_cast<Index>(recs.size()), static_cast<Index>(dim));
  for (std::size_t r = 0; r < recs.size(); ++r) {
    const VectorXd& v = recs[r].*field;
    if (v.size() != static_cast<Index>(dim)) throw Error("record has the wrong dimension");
    m.row(static_cast<Index>(r)) = v.transpose();
  }
  return m;
}

}  // namespace

Eigen::MatrixXd Dataset::inputs() const { return stack(records, dim_x, &Record::x); }
Eigen::MatrixXd Dataset::targets() const { return stack(records, dim_y, &Record::y); }
Eigen::MatrixXd Dataset::duals() const { return stack(records, dim_dual, &Record::dual); }

int default_workers() {
  if (const char* env = std::getenv("OPF_COMPACT_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1) return w;
    spdlog::warn("ignoring invalid OPF_COMPACT_WORKERS='{}'", env);
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

Dataset generate(const Network& net, const PerturbConfig& cfg, std::size_t n, const IpmConfig& ipm, int workers) {
  cfg.validate();
  ipm.validate();
  Dataset ds;
  ds.fingerprint = net.fingerprint();
  ds.dim_x = dim_x(net);
  ds.dim_y = dim_y(net);
  ds.dim_dual = dim_dual(net);
  ds.requested = n;
  ds.perturb = to_json(cfg);

  std::vector<std::optional<Record>> slots(n);
  parallel_for(n, workers, [&](std::size_t k) {
    const Instance inst = perturb(net, cfg, k);
    const SolveResult r = solve(net, inst, flat_start(net, ipm.mu_init_flat), ipm);
    if (r.status == SolveStatus::optimal)
      slots[k] = Record{k, encode_x(inst), encode_y(r.solution), encode_duals(r.duals), r.objective, r.iterations};
  });

  for (auto& s : slots) {
    if (s) ds.records.push_back(std::move(*s));
    else ++ds.skipped;
  }
  if (ds.skipped > 0) spdlog::info("skipped {} of {} instances (solver not optimal)", ds.skipped, n);
  if (ds.skip_warning()) spdlog::warn("skip rate above 10% ({} of {})", ds.skipped, n);
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw Error("train_frac must lie in (0, 1)");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(ds.size())));
  std::vector<std::size_t> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  Dataset train = ds, test = ds;
  train.records.clear();
  test.records.clear();
  for (auto i : a) train.records.push_back(ds.records[i]);
  for (auto i : b) test.records.push_back(ds.records[i]);
  return {std::move(train), std::move(test)};
}

std::string dataset_to_jsonl(const Dataset& ds) {
  nlohmann::json header = {{"format", "opfc-dataset"},
                           {"format_version", 1},
                           {"fingerprint", ds.fingerprint},
                           {"dims", {{"x", ds.dim_x}, {"y", ds.dim_y}, {"dual", ds.dim_dual}}},
                           {"perturb", ds.perturb},
                           {"requested", ds.requested},
                           {"skipped", ds.skipped},
                           {"records", ds.size()}};
  std::string out = header.dump() + "\n";
  for (const auto& r : ds.records) {
    out += "{\"id\":" + std::to_string(r.id) + ",\"x\":" + json_array(r.x) + ",\"y\":" + json_array(r.y) +
           ",\"dual\":" + json_array(r.dual) + ",\"objective\":" + format_double(r.objective) +
           ",\"iterations\":" + std::to_string(r.iterations) + "}\n";
  }
  return out;
}

Dataset dataset_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("dataset is empty (missing header)");
  Dataset ds;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.value("format", "") != "opfc-dataset") throw Error("not a dataset file");
    if (h.value("format_version", 0) != 1) throw Error("unsupported dataset format version");
    ds.fingerprint = h.at("fingerprint").get<std::string>();
    ds.dim_x = h.at("dims").at("x").get<std::size_t>();
    ds.dim_y = h.at("dims").at("y").get<std::size_t>();
    ds.dim_dual = h.at("dims").at("dual").get<std::size_t>();
    ds.perturb = h.at("perturb");
    ds.requested = h.at("requested").get<std::size_t>();
    ds.skipped = h.at("skipped").get<std::size_t>();
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      Record r{j.at("id").get<std::uint64_t>(), vector_from_json(j.at("x")), vector_from_json(j.at("y")),
               vector_from_json(j.at("dual")), j.at("objective").get<double>(), j.at("iterations").get<int>()};
      if (r.x.size() != static_cast<Index>(ds.dim_x) || r.y.size() != static_cast<Index>(ds.dim_y) ||
          r.dual.size() != static_cast<Index>(ds.dim_dual))
        throw Error("record on line " + std::to_string(line_no) + " does not match the header dimensions");
      ds.records.push_back(std::move(r));
    }
    if (ds.records.size() != h.at("records").get<std::size_t>()) throw Error("record count does not match the header");
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed dataset: ") + e.what());
  }
  return ds;
}

void write_dataset(const std::string& path, const Dataset& ds) { write_text_file(path, dataset_to_jsonl(ds)); }

Dataset read_dataset(const std::string& path) { return dataset_from_jsonl(read_text_file(path)); }

void check_fingerprint(const Dataset& ds, const Network& net) {
  if (ds.fingerprint != net.fingerprint())
    throw Error("dataset fingerprint " + ds.fingerprint + " does not match network " + net.fingerprint());
}

}  // namespace opfc
