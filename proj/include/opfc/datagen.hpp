#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "opfc/acopf.hpp"
#include "opfc/grid.hpp"
#include "opfc/ipm.hpp"

namespace opfc {

/// Load perturbation. Active multipliers m = 1 + sigma (sqrt(rho) z0 +
/// sqrt(1 - rho) z_i) share pairwise correlation rho; whole vectors are
/// redrawn until every entry lies within 1 +- active_spread. Reactive
/// multipliers are i.i.d. uniform on [reactive_low, reactive_high].
struct PerturbConfig {
  double active_spread = 0.15;
  double corr = 0.5;
  double gauss_sigma = 0.05;
  double reactive_low = 0.8;
  double reactive_high = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const PerturbConfig& c);
PerturbConfig perturb_config_from_json(const nlohmann::json& j);

constexpr int kMaxRedraws = 10000;

/// Instance k of the perturbation stream; a pure function of (cfg.seed, k).
Instance perturb(const Network& net, const PerturbConfig& cfg, std::uint64_t k);

struct Record {
  std::uint64_t id = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd dual;
  double objective = 0.0;
  int iterations = 0;
};

struct Dataset {
  std::string fingerprint;
  std::size_t dim_x = 0;
  std::size_t dim_y = 0;
  std::size_t dim_dual = 0;
  std::size_t requested = 0;
  std::size_t skipped = 0;
  nlohmann::json perturb;  // generating configuration echo
  std::vector<Record> records;

  std::size_t size() const { return records.size(); }
  bool skip_warning() const;
  /// Row-stacked x, y and dual vectors.
  Eigen::MatrixXd inputs() const;
  Eigen::MatrixXd targets() const;
  Eigen::MatrixXd duals() const;
};

/// Worker count from OPF_COMPACT_WORKERS, else the hardware concurrency.
int default_workers();

/// Solves n perturbed instances from flat start on `workers` threads. Records
/// are ordered by instance index; non-optimal solves are skipped and counted.
Dataset generate(const Network& net, const PerturbConfig& cfg, std::size_t n, const IpmConfig& ipm = {},
                 int workers = 1);

/// Deterministic shuffled split into (train, test) with round(frac * n)
/// training records.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, std::uint64_t seed);

/// JSONL: a header line followed by one record per line.
std::string dataset_to_jsonl(const Dataset& ds);
Dataset dataset_from_jsonl(const std::string& text);
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

/// Throws when the dataset was not generated on `net`.
void check_fingerprint(const Dataset& ds, const Network& net);

}  // namespace opfc
