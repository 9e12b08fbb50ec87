#include "opfc/restore.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/LU>

#include "opfc/flow.hpp"
#include "opfc/io.hpp"
#include "opfc/parallel.hpp"

namespace opfc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<bool> voltage_controlled(const Network& net) {
  std::vector<bool> ctrl(net.num_buses(), false);
  for (std::size_t b = 0; b < net.num_buses(); ++b)
    ctrl[b] = b == net.slack_bus || (net.buses[b].bus_type != BusType::pq && !net.gens_at_bus[b].empty());
  return ctrl;
}

namespace {

// Bus injections (flows leaving each bus) and, optionally, their Jacobian with
// respect to [va; vm].
void injections(const Network& net, const VectorXd& vm, const VectorXd& va, VectorXd& p, VectorXd& q, MatrixXd* jac) {
  const auto nb = static_cast<Index>(net.num_buses());
  p = VectorXd::Zero(nb);
  q = VectorXd::Zero(nb);
  if (jac) *jac = MatrixXd::Zero(2 * nb, 2 * nb);
  for (const auto& br : net.branches) {
    if (!br.status) continue;
    for (int side = 0; side < 2; ++side) {
      const auto i = static_cast<Index>(side == 0 ? br.from : br.to);
      const auto j = static_cast<Index>(side == 0 ? br.to : br.from);
      const FlowDerivatives d = directed_flow_derivatives(br.g, br.b, vm[i], vm[j], va[i], va[j], false);
      p[i] += d.p;
      q[i] += d.q;
      if (!jac) continue;
      // derivative order: v_i, v_j, t_i, t_j
      auto& J = *jac;
      J(i, i) += d.dp[2];
      J(i, j) += d.dp[3];
      J(i, nb + i) += d.dp[0];
      J(i, nb + j) += d.dp[1];
      J(nb + i, i) += d.dq[2];
      J(nb + i, j) += d.dq[3];
      J(nb + i, nb + i) += d.dq[0];
      J(nb + i, nb + j) += d.dq[1];
    }
  }
}

// Splits `total` over generators in proportion to their range widths, starting
// from the lower bounds; equal shares when every range is empty.
void split_by_range(const std::vector<std::size_t>& gens, double total, const VectorXd& lo, const VectorXd& hi,
                    VectorXd& out) {
  double width = 0.0, base = 0.0;
  for (auto g : gens) {
    width += hi[static_cast<Index>(g)] - lo[static_cast<Index>(g)];
    base += lo[static_cast<Index>(g)];
  }
  for (auto g : gens) {
    const auto k = static_cast<Index>(g);
    out[k] = width > 0.0 ? lo[k] + (total - base) * (hi[k] - lo[k]) / width
                         : total / static_cast<double>(gens.size());
  }
}

}  // namespace

PfResult newton_pf(const Network& net, const Instance& inst, const Solution& seed, double tol, int max_iter) {
  check_dims(net, inst);
  check_dims(net, seed);
  if (!(tol > 0.0) || max_iter < 0) throw Error("power flow: invalid tolerance or iteration limit");
  const auto t0 = std::chrono::steady_clock::now();
  const auto nb = static_cast<Index>(net.num_buses());
  const auto slack = static_cast<Index>(net.slack_bus);
  const std::vector<bool> ctrl = voltage_controlled(net);

  VectorXd pd, qd;
  bus_demand(net, inst, pd, qd);
  VectorXd pspec = -pd, qspec = -qd;
  for (std::size_t g = 0; g < net.num_generators(); ++g) {
    const auto b = static_cast<Index>(net.generators[g].bus);
    pspec[b] += seed.pg[static_cast<Index>(g)];
    qspec[b] += seed.qg[static_cast<Index>(g)];
  }

  // unknown layout: angles of non-slack buses, then magnitudes of PQ buses
  std::vector<Index> rows;  // rows of the full [P; Q] system kept
  for (Index b = 0; b < nb; ++b)
    if (b != slack) rows.push_back(b);
  for (Index b = 0; b < nb; ++b)
    if (!ctrl[static_cast<std::size_t>(b)]) rows.push_back(nb + b);
  const auto n = static_cast<Index>(rows.size());

  VectorXd vm = seed.vm;
  VectorXd va = seed.va.array() - seed.va[slack];
  VectorXd full_spec(2 * nb);
  full_spec << pspec, qspec;

  PfResult out;
  VectorXd best_vm = vm, best_va = va;
  double best = std::numeric_limits<double>::infinity();
  VectorXd p, q;
  MatrixXd jfull;
  for (int it = 0;; ++it) {
    injections(net, vm, va, p, q, &jfull);
    VectorXd calc(2 * nb);
    calc << p, q;
    VectorXd F(n);
    for (Index r = 0; r < n; ++r) F[r] = calc[rows[static_cast<std::size_t>(r)]] - full_spec[rows[static_cast<std::size_t>(r)]];
    const double res = n > 0 ? F.cwiseAbs().maxCoeff() : 0.0;
    if (!std::isfinite(res)) {
      out.diagnostic = "non-finite mismatch at iteration " + std::to_string(it);
      break;
    }
    if (res < best) {
      best = res;
      best_vm = vm;
      best_va = va;
    }
    if (res <= tol) {
      out.converged = true;
      break;
    }
    if (it >= max_iter) {
      out.diagnostic = "iteration limit reached, mismatch " + format_double(res);
      break;
    }
    MatrixXd J(n, n);
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < n; ++c) J(r, c) = jfull(rows[static_cast<std::size_t>(r)], rows[static_cast<std::size_t>(c)]);
    Eigen::FullPivLU<MatrixXd> lu(J);
    if (!lu.isInvertible()) {
      out.diagnostic = "singular Jacobian at iteration " + std::to_string(it);
      break;
    }
    const VectorXd dx = lu.solve(-F);
    for (Index c = 0; c < n; ++c) {
      const Index k = rows[static_cast<std::size_t>(c)];
      if (k < nb) va[k] += dx[c];
      else vm[k - nb] += dx[c];
    }
    out.iterations = it + 1;
  }

  // recover generation at the best iterate
  vm = best_vm;
  va = best_va;
  injections(net, vm, va, p, q, nullptr);
  Solution s = seed;
  s.vm = vm;
  s.va = va;
  VectorXd pmin(static_cast<Index>(net.num_generators())), pmax = pmin, qmin = pmin, qmax = pmin;
  for (std::size_t g = 0; g < net.num_generators(); ++g) {
    const auto k = static_cast<Index>(g);
    pmin[k] = net.generators[g].pg_min;
    pmax[k] = net.generators[g].pg_max;
    qmin[k] = net.generators[g].qg_min;
    qmax[k] = net.generators[g].qg_max;
  }
  const auto& slack_gens = net.gens_at_bus[net.slack_bus];
  if (!slack_gens.empty()) split_by_range(slack_gens, p[slack] + pd[slack], pmin, pmax, s.pg);
  for (std::size_t b = 0; b < net.num_buses(); ++b)
    if (ctrl[b] && !net.gens_at_bus[b].empty())
      split_by_range(net.gens_at_bus[b], q[static_cast<Index>(b)] + qd[static_cast<Index>(b)], qmin, qmax, s.qg);

  out.solution = std::move(s);
  out.residual_inf = best;
  out.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

ViolationReport restored_violations(const Network& net, const Instance& inst, const PfResult& pf) {
  if (!pf.converged) throw Error("restored_violations: power flow did not converge");
  return violations(net, inst, pf.solution);
}

std::vector<RestoreRow> restore_all(const Network& net, const Dataset& test, const MatrixXd& predictions, int workers,
                                    double tol, int max_iter) {
  check_fingerprint(test, net);
  if (predictions.rows() != static_cast<Index>(test.size()) || predictions.cols() != static_cast<Index>(dim_y(net)))
    throw Error("restore: prediction matrix shape mismatch");
  std::vector<RestoreRow> rows(test.size());
  parallel_for(test.size(), workers, [&](std::size_t i) {
    const Record& rec = test.records[i];
    const Instance inst = decode_x(net, rec.x);
    const PfResult pf = newton_pf(net, inst, decode_y(net, predictions.row(static_cast<Index>(i)).transpose()), tol, max_iter);
    const ViolationReport v = violations(net, inst, pf.solution);
    rows[i] = {rec.id, pf.converged, pf.iterations, v.max_bound, v.max_thermal_mva, v.max_balance, pf.elapsed};
  });
  return rows;
}

std::string restore_csv(const std::vector<RestoreRow>& rows) {
  std::ostringstream os;
  os << "instance_id,converged,iterations,bound_pu,thermal_mva,balance_pu,elapsed_s\n";
  for (const auto& r : rows)
    os << r.instance_id << ',' << (r.converged ? 1 : 0) << ',' << r.iterations << ',' << format_double(r.bound_pu) << ','
       << format_double(r.thermal_mva) << ',' << format_double(r.balance_pu) << ',' << format_double(r.elapsed_s) << '\n';
  return os.str();
}

RestoreSummary summarize(const std::vector<RestoreRow>& rows) {
  RestoreSummary s;
  s.instances = rows.size();
  for (const auto& r : rows) {
    if (!r.converged) continue;
    ++s.converged;
    s.mean_bound_pu += r.bound_pu;
    s.mean_thermal_mva += r.thermal_mva;
    s.mean_elapsed_s += r.elapsed_s;
  }
  if (s.converged > 0) {
    const double n = static_cast<double>(s.converged);
    s.mean_bound_pu /= n;
    s.mean_thermal_mva /= n;
    s.mean_elapsed_s /= n;
  }
  return s;
}

std::string restore_summary_csv(const std::string& method, const RestoreSummary& s) {
  std::ostringstream os;
  os << "method,instances,converged,bound_pu_mean,thermal_mva_mean,time_s_mean\n"
     << method << ',' << s.instances << ',' << s.converged << ',' << format_double(s.mean_bound_pu) << ','
     << format_double(s.mean_thermal_mva) << ',' << format_double(s.mean_elapsed_s) << '\n';
  return os.str();
}

}  // namespace opfc
