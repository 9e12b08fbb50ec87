#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "opfc/datagen.hpp"
#include "opfc/gha.hpp"
#include "opfc/grid.hpp"
#include "opfc/mlp.hpp"

namespace opfc {

enum class TrainMode { compact, convl_small, convl_large };
enum class TrainTarget { primal, dual };

std::string mode_name(TrainMode m);
TrainMode parse_mode(const std::string& s);
std::string target_name(TrainTarget t);
TrainTarget parse_target(const std::string& s);

struct TrainConfig {
  double pc_ratio = 0.05;
  int batch_size = 32;
  int max_epochs = 1000;
  double adam_lr = 1e-4;
  GhaLrSchedule gha;
  double beta = 0.9999;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::compact;
  TrainTarget target = TrainTarget::primal;
  int layers = kDefaultLayers;
  /// Hidden width; 0 selects p for compact and CONVL-Small, d for CONVL-Large.
  int hidden = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// p = max(1, round(ratio * d)).
int num_components(int d, double ratio);
int hidden_width(const TrainConfig& cfg, int d);

struct CompactModel {
  MlpModel regressor;  // x -> z
  GhaState pca;        // W, mu, var
  std::string fingerprint;
  int dim_x = 0;
  int p = 0;
  int d = 0;
};

/// Direct regression onto standardized targets.
struct ConventionalModel {
  MlpModel net;
  Eigen::VectorXd y_mean;
  Eigen::VectorXd y_scale;
  std::vector<bool> nonnegative;  // outputs clamped at zero after decoding
  std::string fingerprint;
  TrainMode mode = TrainMode::convl_small;
  TrainTarget target = TrainTarget::primal;
};

/// Epoch-mean training loss and an optional event hook ("gha", "regressor")
/// called once per iteration in execution order.
struct TrainLog {
  std::vector<double> epoch_loss;
};
using TrainHook = std::function<void(std::string_view event, std::int64_t iteration)>;

CompactModel train_compact(const Dataset& train, const TrainConfig& cfg, TrainLog* log = nullptr,
                           const TrainHook& hook = {});
ConventionalModel train_conventional(const Dataset& train, const TrainConfig& cfg, TrainLog* log = nullptr);
/// Regression onto the flattened dual vector; inequality multipliers are
/// clamped at zero when predicting.
ConventionalModel train_dual(const Dataset& train, const Network& net, const TrainConfig& cfg, TrainLog* log = nullptr);

/// sqrt(var + eps) .* (W z) + mu with z = regressor(x); one row per sample.
Eigen::MatrixXd predict(const CompactModel& m, const Eigen::MatrixXd& X);
Eigen::VectorXd predict_one(const CompactModel& m, const Eigen::VectorXd& x);
Eigen::MatrixXd predict(const ConventionalModel& m, const Eigen::MatrixXd& X);
Eigen::VectorXd predict_one(const ConventionalModel& m, const Eigen::VectorXd& x);

/// Trainable parameters (W is learned by GHA and not counted).
std::size_t num_parameters(const CompactModel& m);
std::size_t num_parameters(const ConventionalModel& m);
/// n_in h + h + (layers - 2)(h^2 + h) + h n_out + n_out.
std::size_t parameter_count(int n_in, int hidden, int n_out, int layers = kDefaultLayers);

/// Either model kind behind one interface.
struct TrainedModel {
  std::string kind;  // "compact" or "conventional"
  CompactModel compact;
  ConventionalModel conventional;

  const std::string& fingerprint() const;
  TrainTarget target() const;
  std::string method_name() const;
  std::size_t parameters() const;
  Eigen::MatrixXd predict(const Eigen::MatrixXd& X) const;
};

constexpr int kModelFormatVersion = 1;

nlohmann::json to_json(const CompactModel& m);
nlohmann::json to_json(const ConventionalModel& m);
TrainedModel model_from_json(const nlohmann::json& j);
void write_model(const std::string& path, const nlohmann::json& model);
TrainedModel read_model(const std::string& path);

struct InstanceMetrics {
  std::uint64_t id = 0;
  double gap_pct = 0.0;
  double max_violation = 0.0;
};

struct MetricsReport {
  std::vector<InstanceMetrics> instances;
  double mean_gap = 0.0;
  double std_gap = 0.0;
  double mean_max_violation = 0.0;
};

/// Gap and violation of predicted primal rows against the stored optima.
MetricsReport evaluate_predictions(const Network& net, const Dataset& test, const Eigen::MatrixXd& predictions);
/// Throws when the model, dataset and network fingerprints disagree.
MetricsReport evaluate(const TrainedModel& model, const Dataset& test, const Network& net);

std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& method, const MetricsReport& r);
std::string instance_metrics_csv(const MetricsReport& r);

}  // namespace opfc
