#include "opfc/acopf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "opfc/flow.hpp"

namespace opfc {

Instance baseline_instance(const Network& net) {
  Instance inst;
  inst.pd.resize(net.num_loads());
  inst.qd.resize(net.num_loads());
  for (std::size_t l = 0; l < net.num_loads(); ++l) {
    inst.pd[l] = net.loads[l].pd_base;
    inst.qd[l] = net.loads[l].qd_base;
  }
  return inst;
}

void check_dims(const Network& net, const Instance& inst) {
  const auto nl = static_cast<Eigen::Index>(net.num_loads());
  if (inst.pd.size() != nl || inst.qd.size() != nl) throw Error("instance dimensions do not match the network");
}

void check_dims(const Network& net, const Solution& sol) {
  const auto ng = static_cast<Eigen::Index>(net.num_generators());
  const auto nb = static_cast<Eigen::Index>(net.num_buses());
  if (sol.pg.size() != ng || sol.qg.size() != ng || sol.vm.size() != nb || sol.va.size() != nb)
    throw Error("solution dimensions do not match the network");
}

void bus_demand(const Network& net, const Instance& inst, Eigen::VectorXd& pd_bus, Eigen::VectorXd& qd_bus) {
  check_dims(net, inst);
  pd_bus = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_buses()));
  qd_bus = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_buses()));
  for (std::size_t l = 0; l < net.num_loads(); ++l) {
    const auto b = static_cast<Eigen::Index>(net.loads[l].bus);
    pd_bus[b] += inst.pd[static_cast<Eigen::Index>(l)];
    qd_bus[b] += inst.qd[static_cast<Eigen::Index>(l)];
  }
}

double objective(const Network& net, const Solution& sol) {
  check_dims(net, sol);
  double f = 0.0;
  for (std::size_t k = 0; k < net.num_generators(); ++k) f += net.generators[k].cost(sol.pg[static_cast<Eigen::Index>(k)]);
  return f;
}

BranchFlow branch_flows(const Network& net, const Solution& sol) {
  check_dims(net, sol);
  const auto ne = static_cast<Eigen::Index>(net.num_branches());
  BranchFlow out{Eigen::VectorXd(2 * ne), Eigen::VectorXd(2 * ne)};
  for (Eigen::Index e = 0; e < ne; ++e) {
    const auto& br = net.branches[static_cast<std::size_t>(e)];
    const auto i = static_cast<Eigen::Index>(br.from);
    const auto j = static_cast<Eigen::Index>(br.to);
    const auto fwd = directed_flow(br.g, br.b, sol.vm[i], sol.vm[j], sol.va[i], sol.va[j]);
    const auto rev = directed_flow(br.g, br.b, sol.vm[j], sol.vm[i], sol.va[j], sol.va[i]);
    out.pf[e] = fwd.p;
    out.qf[e] = fwd.q;
    out.pf[ne + e] = rev.p;
    out.qf[ne + e] = rev.q;
  }
  return out;
}

BalanceResiduals balance_residuals(const Network& net, const Instance& inst, const Solution& sol) {
  Eigen::VectorXd pd_bus, qd_bus;
  bus_demand(net, inst, pd_bus, qd_bus);
  const BranchFlow flows = branch_flows(net, sol);
  BalanceResiduals r{pd_bus, qd_bus};
  const auto ne = static_cast<Eigen::Index>(net.num_branches());
  for (Eigen::Index e = 0; e < ne; ++e) {
    const auto& br = net.branches[static_cast<std::size_t>(e)];
    const auto i = static_cast<Eigen::Index>(br.from);
    const auto j = static_cast<Eigen::Index>(br.to);
    r.dp[i] += flows.pf[e];
    r.dq[i] += flows.qf[e];
    r.dp[j] += flows.pf[ne + e];
    r.dq[j] += flows.qf[ne + e];
  }
  for (std::size_t k = 0; k < net.num_generators(); ++k) {
    const auto b = static_cast<Eigen::Index>(net.generators[k].bus);
    r.dp[b] -= sol.pg[static_cast<Eigen::Index>(k)];
    r.dq[b] -= sol.qg[static_cast<Eigen::Index>(k)];
  }
  return r;
}

namespace {
double excess(double v, double lo, double hi) { return std::max({0.0, lo - v, v - hi}); }
}  // namespace

ViolationReport violations(const Network& net, const Instance& inst, const Solution& sol) {
  ViolationReport rep;
  for (std::size_t k = 0; k < net.num_generators(); ++k) {
    const auto& g = net.generators[k];
    const auto kk = static_cast<Eigen::Index>(k);
    rep.max_bound = std::max({rep.max_bound, excess(sol.pg[kk], g.pg_min, g.pg_max), excess(sol.qg[kk], g.qg_min, g.qg_max)});
  }
  for (std::size_t i = 0; i < net.num_buses(); ++i)
    rep.max_bound = std::max(rep.max_bound, excess(sol.vm[static_cast<Eigen::Index>(i)], net.buses[i].v_min, net.buses[i].v_max));

  const BranchFlow flows = branch_flows(net, sol);
  const auto ne = static_cast<Eigen::Index>(net.num_branches());
  for (Eigen::Index e = 0; e < 2 * ne; ++e) {
    const auto& br = net.branches[static_cast<std::size_t>(e % std::max<Eigen::Index>(ne, 1))];
    if (!br.has_thermal_limit()) continue;
    const double s = std::hypot(flows.pf[e], flows.qf[e]);
    rep.max_thermal_pu = std::max(rep.max_thermal_pu, s - br.s_max);
  }
  rep.max_thermal_mva = rep.max_thermal_pu * net.base_mva;

  const auto bal = balance_residuals(net, inst, sol);
  rep.max_balance = std::max(bal.dp.size() ? bal.dp.cwiseAbs().maxCoeff() : 0.0, bal.dq.size() ? bal.dq.cwiseAbs().maxCoeff() : 0.0);
  rep.max_overall = std::max({rep.max_bound, rep.max_thermal_pu, rep.max_balance});
  return rep;
}

double optimality_gap(double f_pred, double f_opt) {
  if (f_opt == 0.0) throw Error("optimality gap is undefined for a zero reference objective");
  return 100.0 * std::abs(f_pred - f_opt) / std::abs(f_opt);
}

std::size_t dim_x(const Network& net) { return 2 * net.num_loads(); }
std::size_t dim_y(const Network& net) { return 2 * net.num_generators() + 2 * net.num_buses(); }

Eigen::VectorXd encode_x(const Instance& inst) {
  Eigen::VectorXd x(inst.pd.size() + inst.qd.size());
  x << inst.pd, inst.qd;
  return x;
}

Instance decode_x(const Network& net, const Eigen::VectorXd& x) {
  const auto nl = static_cast<Eigen::Index>(net.num_loads());
  if (x.size() != 2 * nl) throw Error("x vector length does not match 2|L|");
  return {x.head(nl), x.tail(nl)};
}

Eigen::VectorXd encode_y(const Solution& sol) {
  Eigen::VectorXd y(sol.pg.size() + sol.qg.size() + sol.vm.size() + sol.va.size());
  y << sol.pg, sol.qg, sol.vm, sol.va;
  return y;
}

Solution decode_y(const Network& net, const Eigen::VectorXd& y) {
  const auto ng = static_cast<Eigen::Index>(net.num_generators());
  const auto nb = static_cast<Eigen::Index>(net.num_buses());
  if (y.size() != 2 * ng + 2 * nb) throw Error("y vector length does not match 2|G| + 2|N|");
  return {y.segment(0, ng), y.segment(ng, ng), y.segment(2 * ng, nb), y.segment(2 * ng + nb, nb)};
}

std::string violation_csv_header() { return "instance_id,max_bound,max_thermal_pu,max_thermal_mva,max_balance,max_overall"; }

std::string violation_csv_row(const std::string& instance_id, const ViolationReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%.17g", r.max_bound, r.max_thermal_pu, r.max_thermal_mva,
                r.max_balance, r.max_overall);
  return instance_id + buf;
}

}  // namespace opfc
