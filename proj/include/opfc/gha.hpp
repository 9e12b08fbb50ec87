#pragma once

#include <cstdint>

#include <Eigen/Core>
#include <json.hpp>

namespace opfc {

/// Streaming principal-component estimate with running normalization.
struct GhaState {
  Eigen::MatrixXd W;    // d x p
  Eigen::VectorXd mu;   // running mean
  Eigen::VectorXd var;  // running variance
  std::int64_t step_count = 0;
  double beta = 0.9999;
  double eps = 1e-8;

  Eigen::Index dim() const { return W.rows(); }
  Eigen::Index components() const { return W.cols(); }
  /// sqrt(var + eps) element-wise.
  Eigen::VectorXd scale() const;
  void validate() const;
};

struct GhaLrSchedule {
  double gamma_init = 1e-4;
  double gamma_min = 1e-8;

  void validate() const;
};

/// gamma = max(gamma_min, gamma_init / (0.01 e)) for epoch e >= 1.
double lr(int epoch, const GhaLrSchedule& sched);

/// Orthonormalized seeded Gaussian d x p matrix.
Eigen::MatrixXd init_W(Eigen::Index d, Eigen::Index p, std::uint64_t seed);

/// Fresh state with W from init_W and zero statistics.
GhaState make_gha_state(Eigen::Index d, Eigen::Index p, std::uint64_t seed, double beta = 0.9999, double eps = 1e-8);

/// One Sanger-rule update on a batch of target rows (B x d). The running
/// statistics are replaced by the batch statistics on the first call.
void gha_step(const Eigen::MatrixXd& batch, GhaState& state, double gamma);

/// Batch-mean Sanger increment for already normalized rows.
Eigen::MatrixXd sanger_increment(const Eigen::MatrixXd& normalized, const Eigen::MatrixXd& W);

nlohmann::json to_json(const GhaState& s);
GhaState gha_state_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GhaLrSchedule& s);
GhaLrSchedule gha_schedule_from_json(const nlohmann::json& j);

}  // namespace opfc
