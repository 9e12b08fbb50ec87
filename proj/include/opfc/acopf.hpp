#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "opfc/grid.hpp"

namespace opfc {

/// Load realisation x = {pd, qd}, indexed by load.
struct Instance {
  Eigen::VectorXd pd;
  Eigen::VectorXd qd;
};

/// Primal point y = {pg, qg, vm, va}.
struct Solution {
  Eigen::VectorXd pg;
  Eigen::VectorXd qg;
  Eigen::VectorXd vm;
  Eigen::VectorXd va;
};

/// Flows of every directed branch end. Entry e is the from-end (from -> to) of
/// branch e, entry E + e the to-end (to -> from).
struct BranchFlow {
  Eigen::VectorXd pf;
  Eigen::VectorXd qf;
};

struct ViolationReport {
  double max_bound = 0.0;
  double max_thermal_pu = 0.0;
  double max_thermal_mva = 0.0;
  double max_balance = 0.0;
  double max_overall = 0.0;
};

Instance baseline_instance(const Network& net);
void check_dims(const Network& net, const Instance& inst);
void check_dims(const Network& net, const Solution& sol);

/// Bus-level demand aggregated from loads.
void bus_demand(const Network& net, const Instance& inst, Eigen::VectorXd& pd_bus, Eigen::VectorXd& qd_bus);

double objective(const Network& net, const Solution& sol);
BranchFlow branch_flows(const Network& net, const Solution& sol);

struct BalanceResiduals {
  Eigen::VectorXd dp;
  Eigen::VectorXd dq;
};
/// dp_i = sum of flows leaving bus i - generation at i + demand at i.
BalanceResiduals balance_residuals(const Network& net, const Instance& inst, const Solution& sol);

ViolationReport violations(const Network& net, const Instance& inst, const Solution& sol);

/// 100 * |f_pred - f_opt| / |f_opt|.
double optimality_gap(double f_pred, double f_opt);

// Flat vector codecs: x = [pd; qd], y = [pg; qg; vm; va].
std::size_t dim_x(const Network& net);
std::size_t dim_y(const Network& net);
Eigen::VectorXd encode_x(const Instance& inst);
Instance decode_x(const Network& net, const Eigen::VectorXd& x);
Eigen::VectorXd encode_y(const Solution& sol);
Solution decode_y(const Network& net, const Eigen::VectorXd& y);

std::string violation_csv_header();
std::string violation_csv_row(const std::string& instance_id, const ViolationReport& r);

}  // namespace opfc
