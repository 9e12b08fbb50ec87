#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "opfc/acopf.hpp"
#include "opfc/grid.hpp"

namespace opfc {

/// Multipliers of the AC-OPF constraints, in the units of the original
/// (unscaled) objective.
///   lam_p, lam_q   : active/reactive balance, one per bus
///   mu_thermal     : squared apparent-power limit, one per directed branch end
///                    (same layout as BranchFlow; zero where no limit applies)
///   z_lower/upper  : bound multipliers over [pg; qg; vm]
struct DualSolution {
  Eigen::VectorXd lam_p;
  Eigen::VectorXd lam_q;
  Eigen::VectorXd mu_thermal;
  Eigen::VectorXd z_lower;
  Eigen::VectorXd z_upper;
};

std::size_t dim_dual(const Network& net);
/// [lam_p; lam_q; mu_thermal; z_lower; z_upper]
Eigen::VectorXd encode_duals(const DualSolution& d);
DualSolution decode_duals(const Network& net, const Eigen::VectorXd& v);
/// Mask over the flattened dual layout; true for inequality multipliers.
std::vector<bool> dual_inequality_mask(const Network& net);

enum class StartKind { flat, primal, primal_dual };

struct StartPoint {
  StartKind kind = StartKind::flat;
  std::optional<Solution> primal;
  std::optional<DualSolution> duals;
  double mu0 = 0.1;
};

struct IpmConfig {
  double tol = 1e-4;
  int max_iter = 300;
  double mu_init_flat = 0.1;
  double mu_init_warm = 1e-3;
  double fraction_to_boundary = 0.995;
  bool record_trace = false;

  void validate() const;
};

enum class SolveStatus { optimal, max_iter, numerical_failure };
std::string status_name(SolveStatus s);

struct IterationTrace {
  int iter = 0;
  double mu = 0.0;
  double primal_inf = 0.0;
  double dual_inf = 0.0;
  double step_len = 0.0;
};

struct SolveResult {
  SolveStatus status = SolveStatus::numerical_failure;
  Solution solution;
  DualSolution duals;
  double objective = 0.0;
  int iterations = 0;
  double elapsed = 0.0;
  /// Scaled KKT error of the returned iterate.
  double kkt_error = 0.0;
  std::vector<IterationTrace> trace;
};

/// pg = pg_min, qg = qg_min, vm = v_min, va = 0.
StartPoint flat_start(const Network& net, double mu0 = IpmConfig{}.mu_init_flat);
StartPoint primal_start(Solution primal, double mu0);
StartPoint primal_dual_start(Solution primal, DualSolution duals, double mu0);

/// Factor applied to the cost inside the solver so that objective gradients are
/// at most 100 in magnitude over the generator box. Multipliers reported in
/// SolveResult are already divided by it.
double objective_scale(const Network& net);

/// Primal-dual interior-point solve of the AC-OPF with the slack angle fixed
/// to zero. Thermal limits are squared-form inequalities with explicit slacks.
SolveResult solve(const Network& net, const Instance& inst, const StartPoint& start, const IpmConfig& cfg = {});

nlohmann::json to_json(const SolveResult& r);
std::string trace_csv(const std::vector<IterationTrace>& trace);

}  // namespace opfc
