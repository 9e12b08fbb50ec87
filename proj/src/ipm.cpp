#include "opfc/ipm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "kkt_factor.hpp"
#include "opfc/flow.hpp"

namespace opfc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::size_t dim_dual(const Network& net) {
  return 2 * net.num_buses() + 2 * net.num_branches() + 2 * (2 * net.num_generators() + net.num_buses());
}

Eigen::VectorXd encode_duals(const DualSolution& d) {
  VectorXd v(d.lam_p.size() + d.lam_q.size() + d.mu_thermal.size() + d.z_lower.size() + d.z_upper.size());
  v << d.lam_p, d.lam_q, d.mu_thermal, d.z_lower, d.z_upper;
  return v;
}

DualSolution decode_duals(const Network& net, const Eigen::VectorXd& v) {
  const auto nb = static_cast<Index>(net.num_buses());
  const auto ne = static_cast<Index>(net.num_branches());
  const auto nz = static_cast<Index>(2 * net.num_generators() + net.num_buses());
  if (v.size() != static_cast<Index>(dim_dual(net))) throw Error("dual vector length does not match the network");
  DualSolution d;
  Index o = 0;
  d.lam_p = v.segment(o, nb), o += nb;
  d.lam_q = v.segment(o, nb), o += nb;
  d.mu_thermal = v.segment(o, 2 * ne), o += 2 * ne;
  d.z_lower = v.segment(o, nz), o += nz;
  d.z_upper = v.segment(o, nz);
  return d;
}

std::vector<bool> dual_inequality_mask(const Network& net) {
  std::vector<bool> mask(dim_dual(net), true);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(2 * net.num_buses()), false);
  return mask;
}

void IpmConfig::validate() const {
  if (!(tol > 0.0)) throw Error("ipm tol must be positive");
  if (!(fraction_to_boundary > 0.0 && fraction_to_boundary < 1.0))
    throw Error("fraction_to_boundary must lie in (0, 1)");
  if (max_iter < 1) throw Error("max_iter must be at least 1");
  if (!(mu_init_flat > 0.0) || !(mu_init_warm > 0.0)) throw Error("initial barrier parameters must be positive");
}

std::string status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "numerical_failure";
}

StartPoint flat_start(const Network& net, double mu0) {
  const auto ng = static_cast<Index>(net.num_generators());
  const auto nb = static_cast<Index>(net.num_buses());
  Solution s{VectorXd(ng), VectorXd(ng), VectorXd(nb), VectorXd::Zero(nb)};
  for (Index k = 0; k < ng; ++k) {
    s.pg[k] = net.generators[static_cast<std::size_t>(k)].pg_min;
    s.qg[k] = net.generators[static_cast<std::size_t>(k)].qg_min;
  }
  for (Index i = 0; i < nb; ++i) s.vm[i] = net.buses[static_cast<std::size_t>(i)].v_min;
  return {StartKind::flat, std::move(s), std::nullopt, mu0};
}

StartPoint primal_start(Solution primal, double mu0) { return {StartKind::primal, std::move(primal), std::nullopt, mu0}; }

StartPoint primal_dual_start(Solution primal, DualSolution duals, double mu0) {
  return {StartKind::primal_dual, std::move(primal), std::move(duals), mu0};
}

double objective_scale(const Network& net) {
  double gmax = 0.0;
  for (const auto& g : net.generators)
    gmax = std::max({gmax, std::abs(g.cost.derivative(g.pg_min)), std::abs(g.cost.derivative(g.pg_max))});
  return gmax > 100.0 ? 100.0 / gmax : 1.0;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kScaleMax = 100.0;   // s_max of the scaled optimality error
constexpr double kKappaEps = 10.0;    // barrier subproblem tolerance factor
constexpr double kKappaSigma = 1e10;  // bound-multiplier safeguard
constexpr double kArmijo = 1e-4;
constexpr double kMuShrink = 0.2;
constexpr double kMuFloorFactor = 0.1;  // final barrier parameter relative to tol
constexpr double kGammaTheta = 1e-5;  // line-search sufficient decrease factors
constexpr double kGammaPhi = 1e-8;
constexpr double kDelta = 1.0;        // switching condition
constexpr double kSTheta = 1.1;
constexpr double kSPhi = 2.3;
constexpr int kMaxBacktrack = 40;
constexpr double kDeltaC = 1e-8;
constexpr double kLambdaMax = 1e3;  // least-squares multiplier cutoff     // constant dual regularization of the KKT matrix

// Variable layout: [pg (G) | qg (G) | vm (N) | va (N) | thermal slacks (T)].
// Constraint layout: [P balance (N) | Q balance (N) | slack angle (1) | thermal (T)].
struct Problem {
  const Network& net;
  Index ng, nb, ne, nt, n, m;
  VectorXd pd_bus, qd_bus;
  VectorXd lo, hi;
  std::vector<Index> thermal_end;  // directed end per thermal row
  VectorXd smax2;
  std::vector<Index> row_of_end;   // thermal row per directed end, or -1
  double scale;

  Problem(const Network& nw, const Instance& inst) : net(nw) {
    ng = static_cast<Index>(net.num_generators());
    nb = static_cast<Index>(net.num_buses());
    ne = static_cast<Index>(net.num_branches());
    row_of_end.assign(static_cast<std::size_t>(2 * ne), -1);
    for (Index e = 0; e < 2 * ne; ++e)
      if (net.branches[static_cast<std::size_t>(e % ne)].has_thermal_limit()) {
        row_of_end[static_cast<std::size_t>(e)] = static_cast<Index>(thermal_end.size());
        thermal_end.push_back(e);
      }
    nt = static_cast<Index>(thermal_end.size());
    n = 2 * ng + 2 * nb + nt;
    m = 2 * nb + 1 + nt;
    bus_demand(net, inst, pd_bus, qd_bus);
    smax2.resize(nt);
    for (Index t = 0; t < nt; ++t) {
      const double s = net.branches[static_cast<std::size_t>(thermal_end[static_cast<std::size_t>(t)] % ne)].s_max;
      smax2[t] = s * s;
    }
    lo = VectorXd::Constant(n, -kInf);
    hi = VectorXd::Constant(n, kInf);
    for (Index k = 0; k < ng; ++k) {
      const auto& g = net.generators[static_cast<std::size_t>(k)];
      set_box(pg(k), g.pg_min, g.pg_max);
      set_box(qg(k), g.qg_min, g.qg_max);
    }
    for (Index i = 0; i < nb; ++i) set_box(vm(i), net.buses[static_cast<std::size_t>(i)].v_min, net.buses[static_cast<std::size_t>(i)].v_max);
    for (Index t = 0; t < nt; ++t) lo[sl(t)] = 0.0;
    scale = objective_scale(net);
  }

  // Degenerate boxes are opened by 1e-6 so that the barrier stays defined.
  void set_box(Index v, double l, double u) {
    if (u - l < 1e-6) {
      const double mid = 0.5 * (l + u);
      l = mid - 5e-7;
      u = mid + 5e-7;
    }
    lo[v] = l;
    hi[v] = u;
  }

  Index pg(Index k) const { return k; }
  Index qg(Index k) const { return ng + k; }
  Index vm(Index i) const { return 2 * ng + i; }
  Index va(Index i) const { return 2 * ng + nb + i; }
  Index sl(Index t) const { return 2 * ng + 2 * nb + t; }
  Index row_p(Index i) const { return i; }
  Index row_q(Index i) const { return nb + i; }
  Index row_ref() const { return 2 * nb; }
  Index row_th(Index t) const { return 2 * nb + 1 + t; }

  // Endpoints (a -> b) of directed end e.
  std::pair<Index, Index> ends(Index e) const {
    const auto& br = net.branches[static_cast<std::size_t>(e % ne)];
    const auto f = static_cast<Index>(br.from), t = static_cast<Index>(br.to);
    return e < ne ? std::pair{f, t} : std::pair{t, f};
  }

  double f(const VectorXd& x) const {
    double v = 0.0;
    for (Index k = 0; k < ng; ++k) v += net.generators[static_cast<std::size_t>(k)].cost(x[pg(k)]);
    return scale * v;
  }

  VectorXd grad_f(const VectorXd& x) const {
    VectorXd g = VectorXd::Zero(n);
    for (Index k = 0; k < ng; ++k) g[pg(k)] = scale * net.generators[static_cast<std::size_t>(k)].cost.derivative(x[pg(k)]);
    return g;
  }

  VectorXd c(const VectorXd& x) const {
    VectorXd r = VectorXd::Zero(m);
    for (Index i = 0; i < nb; ++i) {
      r[row_p(i)] = pd_bus[i];
      r[row_q(i)] = qd_bus[i];
    }
    for (Index k = 0; k < ng; ++k) {
      const auto b = static_cast<Index>(net.generators[static_cast<std::size_t>(k)].bus);
      r[row_p(b)] -= x[pg(k)];
      r[row_q(b)] -= x[qg(k)];
    }
    for (Index e = 0; e < 2 * ne; ++e) {
      const auto [a, b] = ends(e);
      const auto& br = net.branches[static_cast<std::size_t>(e % ne)];
      const auto fl = directed_flow(br.g, br.b, x[vm(a)], x[vm(b)], x[va(a)], x[va(b)]);
      r[row_p(a)] += fl.p;
      r[row_q(a)] += fl.q;
      if (const Index t = row_of_end[static_cast<std::size_t>(e)]; t >= 0)
        r[row_th(t)] = fl.p * fl.p + fl.q * fl.q - smax2[t] + x[sl(t)];
    }
    r[row_ref()] = x[va(static_cast<Index>(net.slack_bus))];
    return r;
  }

  // Constraint Jacobian (m x n) and, when lam is given, the Hessian of
  // lam' c(x) accumulated into `hess` (n x n, full symmetric).
  void derivatives(const VectorXd& x, MatrixXd& jac, const VectorXd* lam, MatrixXd* hess) const {
    jac.setZero(m, n);
    for (Index k = 0; k < ng; ++k) {
      const auto b = static_cast<Index>(net.generators[static_cast<std::size_t>(k)].bus);
      jac(row_p(b), pg(k)) = -1.0;
      jac(row_q(b), qg(k)) = -1.0;
    }
    jac(row_ref(), va(static_cast<Index>(net.slack_bus))) = 1.0;
    for (Index e = 0; e < 2 * ne; ++e) {
      const auto [a, b] = ends(e);
      const auto& br = net.branches[static_cast<std::size_t>(e % ne)];
      const auto d = directed_flow_derivatives(br.g, br.b, x[vm(a)], x[vm(b)], x[va(a)], x[va(b)], hess != nullptr);
      const Index idx[4] = {vm(a), vm(b), va(a), va(b)};
      const Index t = row_of_end[static_cast<std::size_t>(e)];
      for (int r = 0; r < 4; ++r) {
        jac(row_p(a), idx[r]) += d.dp[r];
        jac(row_q(a), idx[r]) += d.dq[r];
        if (t >= 0) jac(row_th(t), idx[r]) += 2.0 * (d.p * d.dp[r] + d.q * d.dq[r]);
      }
      if (t >= 0) jac(row_th(t), sl(t)) = 1.0;
      if (!hess) continue;
      Eigen::Matrix4d h = (*lam)[row_p(a)] * d.hp + (*lam)[row_q(a)] * d.hq;
      if (t >= 0)
        h += (*lam)[row_th(t)] * 2.0 *
             (d.dp * d.dp.transpose() + d.p * d.hp + d.dq * d.dq.transpose() + d.q * d.hq);
      for (int r = 0; r < 4; ++r)
        for (int k = 0; k < 4; ++k) (*hess)(idx[r], idx[k]) += h(r, k);
    }
  }

  void add_objective_hessian(MatrixXd& hess) const {
    for (Index k = 0; k < ng; ++k) hess(pg(k), pg(k)) += scale * 2.0 * net.generators[static_cast<std::size_t>(k)].cost.c2;
  }

  bool has_lo(Index v) const { return std::isfinite(lo[v]); }
  bool has_hi(Index v) const { return std::isfinite(hi[v]); }

  double barrier(const VectorXd& x, double mu) const {
    double v = f(x);
    for (Index i = 0; i < n; ++i) {
      if (has_lo(i)) v -= mu * std::log(x[i] - lo[i]);
      if (has_hi(i)) v -= mu * std::log(hi[i] - x[i]);
    }
    return v;
  }
};

// Largest step in (0, 1] keeping v + a*dv >= (1 - tau) v component-wise for
// the entries selected by `use`.
double max_step(const VectorXd& v, const VectorXd& dv, double tau, const std::vector<bool>& use) {
  double a = 1.0;
  for (Index i = 0; i < v.size(); ++i)
    if (use[static_cast<std::size_t>(i)] && dv[i] < 0.0) a = std::min(a, -tau * v[i] / dv[i]);
  return a;
}

// Lower triangle of a dense symmetric matrix, diagonal always stored.
detail::SymmetricIndefiniteFactor::Sparse lower_sparse(const MatrixXd& a) {
  std::vector<Eigen::Triplet<double>> t;
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = j; i < a.rows(); ++i)
      if (i == j || a(i, j) != 0.0) t.emplace_back(static_cast<int>(i), static_cast<int>(j), a(i, j));
  detail::SymmetricIndefiniteFactor::Sparse s(a.rows(), a.cols());
  s.setFromTriplets(t.begin(), t.end());
  return s;
}

struct Iterate {
  VectorXd x, lam, zl, zu;
};

}  // namespace

SolveResult solve(const Network& net, const Instance& inst, const StartPoint& start, const IpmConfig& cfg) {
  cfg.validate();
  check_dims(net, inst);
  if (start.kind != StartKind::flat && !start.primal) throw Error("warm start requires a primal point");
  if (start.kind == StartKind::primal_dual && !start.duals) throw Error("primal-dual warm start requires duals");
  if (!(start.mu0 > 0.0)) throw Error("initial barrier parameter must be positive");

  const Problem pb(net, inst);
  const Index n = pb.n, m = pb.m;
  std::vector<bool> lo_mask(static_cast<std::size_t>(n)), hi_mask(static_cast<std::size_t>(n));
  Index nz = 0;
  for (Index i = 0; i < n; ++i) {
    lo_mask[static_cast<std::size_t>(i)] = pb.has_lo(i);
    hi_mask[static_cast<std::size_t>(i)] = pb.has_hi(i);
    nz += (pb.has_lo(i) ? 1 : 0) + (pb.has_hi(i) ? 1 : 0);
  }

  const auto t0 = std::chrono::steady_clock::now();
  double mu = start.mu0;

  // Initial point. Boxed variables are pushed inside by
  // max(1e-4, 1e-2 * width); slacks take the current limit headroom.
  const Solution primal = start.primal ? *start.primal : *flat_start(net).primal;
  check_dims(net, primal);
  Iterate it;
  it.x = VectorXd::Zero(n);
  for (Index k = 0; k < pb.ng; ++k) {
    it.x[pb.pg(k)] = primal.pg[k];
    it.x[pb.qg(k)] = primal.qg[k];
  }
  it.x.segment(pb.vm(0), pb.nb) = primal.vm;
  it.x.segment(pb.va(0), pb.nb) = primal.va;
  for (Index i = 0; i < 2 * pb.ng + pb.nb; ++i) {
    const double l = pb.lo[i], u = pb.hi[i];
    const double margin = std::max(1e-4, 1e-2 * (u - l));
    it.x[i] = (u - l <= 2.0 * margin) ? 0.5 * (l + u) : std::clamp(it.x[i], l + margin, u - margin);
  }
  it.x.segment(pb.va(0), pb.nb).array() -= primal.va[static_cast<Index>(net.slack_bus)];
  {
    const VectorXd c0 = pb.c(it.x);
    for (Index t = 0; t < pb.nt; ++t) it.x[pb.sl(t)] = std::max(-(c0[pb.row_th(t)] - it.x[pb.sl(t)]), mu);
  }

  it.lam = VectorXd::Zero(m);
  it.zl = VectorXd::Zero(n);
  it.zu = VectorXd::Zero(n);
  if (start.kind == StartKind::primal_dual) {
    const DualSolution& d = *start.duals;
    const auto nbx = 2 * pb.ng + pb.nb;
    if (d.lam_p.size() != pb.nb || d.lam_q.size() != pb.nb || d.mu_thermal.size() != 2 * pb.ne ||
        d.z_lower.size() != nbx || d.z_upper.size() != nbx)
      throw Error("dual warm start dimensions do not match the network");
    for (Index i = 0; i < pb.nb; ++i) {
      it.lam[pb.row_p(i)] = pb.scale * d.lam_p[i];
      it.lam[pb.row_q(i)] = pb.scale * d.lam_q[i];
    }
    for (Index t = 0; t < pb.nt; ++t) {
      const double mt = std::max(1e-8, pb.scale * d.mu_thermal[pb.thermal_end[static_cast<std::size_t>(t)]]);
      it.lam[pb.row_th(t)] = mt;
      it.zl[pb.sl(t)] = mt;
    }
    for (Index i = 0; i < nbx; ++i) {
      it.zl[i] = std::max(1e-8, pb.scale * d.z_lower[i]);
      it.zu[i] = std::max(1e-8, pb.scale * d.z_upper[i]);
    }
  } else {
    for (Index i = 0; i < n; ++i) {
      if (pb.has_lo(i)) it.zl[i] = mu / (it.x[i] - pb.lo[i]);
      if (pb.has_hi(i)) it.zu[i] = mu / (pb.hi[i] - it.x[i]);
    }
  }
  MatrixXd jac;
  VectorXd grad = pb.grad_f(it.x);
  VectorXd cval = pb.c(it.x);
  pb.derivatives(it.x, jac, nullptr, nullptr);
  if (start.kind != StartKind::primal_dual) {
    // Least-squares equality multipliers; discarded when implausibly large.
    MatrixXd A = MatrixXd::Zero(n + m, n + m);
    A.topLeftCorner(n, n).diagonal().setOnes();
    A.bottomLeftCorner(m, n) = jac;
    A.bottomRightCorner(m, m).diagonal().array() = -kDeltaC;
    VectorXd r = VectorXd::Zero(n + m);
    r.head(n) = -(grad - it.zl + it.zu);
    detail::SymmetricIndefiniteFactor ls;
    if (ls.factor(lower_sparse(A), 0.1 * kDeltaC)) {
      ls.solve(r);
      if (r.tail(m).allFinite() && r.tail(m).cwiseAbs().maxCoeff() <= kLambdaMax) it.lam = r.tail(m);
    }
  } else {
    // Reference-angle multiplier consistent with the rest of the duals.
    const Index slack_va = pb.va(static_cast<Index>(net.slack_bus));
    it.lam[pb.row_ref()] = 0.0;
    it.lam[pb.row_ref()] = -(grad[slack_va] + jac.col(slack_va).dot(it.lam));
  }

  SolveResult res;
  res.status = SolveStatus::max_iter;
  detail::SymmetricIndefiniteFactor kkt;
  double delta_w_last = 0.0;
  const double theta0 = cval.lpNorm<1>();
  double last_step = 0.0;
  int iter = 0;
  Iterate best;  // lowest KKT error so far, returned when not optimal
  double best_err = kInf;

  const auto errors = [&](double mu_target, double& primal_inf, double& dual_inf, double& comp) {
    const VectorXd rd = grad + jac.transpose() * it.lam - it.zl + it.zu;
    primal_inf = cval.size() ? cval.cwiseAbs().maxCoeff() : 0.0;
    comp = 0.0;
    double zsum = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (pb.has_lo(i)) comp = std::max(comp, std::abs((it.x[i] - pb.lo[i]) * it.zl[i] - mu_target)), zsum += it.zl[i];
      if (pb.has_hi(i)) comp = std::max(comp, std::abs((pb.hi[i] - it.x[i]) * it.zu[i] - mu_target)), zsum += it.zu[i];
    }
    const double s_d = std::max(kScaleMax, (it.lam.lpNorm<1>() + zsum) / static_cast<double>(m + nz)) / kScaleMax;
    const double s_c = std::max(kScaleMax, zsum / static_cast<double>(std::max<Index>(nz, 1))) / kScaleMax;
    dual_inf = rd.cwiseAbs().maxCoeff() / s_d;
    comp /= s_c;
    return std::max({dual_inf, primal_inf, comp});
  };

  for (;; ++iter) {
    double pinf, dinf, comp;
    const double e0 = errors(0.0, pinf, dinf, comp);
    res.kkt_error = e0;
    if (cfg.record_trace) res.trace.push_back({iter, mu, pinf, dinf, last_step});
    if (e0 < best_err) {
      best_err = e0;
      best = it;
    }
    if (!std::isfinite(e0)) {
      res.status = SolveStatus::numerical_failure;
      break;
    }
    if (e0 <= cfg.tol && mu <= kMuFloorFactor * cfg.tol) {
      res.status = SolveStatus::optimal;
      break;
    }
    if (iter >= cfg.max_iter) {
      res.status = SolveStatus::max_iter;
      break;
    }
    // Monotone barrier update.
    while (mu > kMuFloorFactor * cfg.tol) {
      double p2, d2, c2;
      if (errors(mu, p2, d2, c2) > kKappaEps * mu) break;
      mu = std::max(kMuFloorFactor * cfg.tol, kMuShrink * mu);
    }

    MatrixXd hess = MatrixXd::Zero(n, n);
    pb.derivatives(it.x, jac, &it.lam, &hess);
    pb.add_objective_hessian(hess);

    VectorXd sigma = VectorXd::Zero(n);
    VectorXd grad_barrier = grad;
    for (Index i = 0; i < n; ++i) {
      if (pb.has_lo(i)) {
        const double s = it.x[i] - pb.lo[i];
        sigma[i] += it.zl[i] / s;
        grad_barrier[i] -= mu / s;
      }
      if (pb.has_hi(i)) {
        const double s = pb.hi[i] - it.x[i];
        sigma[i] += it.zu[i] / s;
        grad_barrier[i] += mu / s;
      }
    }

    MatrixXd K = MatrixXd::Zero(n + m, n + m);
    K.topLeftCorner(n, n) = hess;
    K.topLeftCorner(n, n).diagonal() += sigma;
    K.bottomLeftCorner(m, n) = jac;

    // Inertia correction: need exactly n positive and m negative eigenvalues.
    double delta_w = 0.0;
    const double delta_c = kDeltaC;
    bool factored = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      MatrixXd Kt = K;
      if (delta_w > 0.0) Kt.topLeftCorner(n, n).diagonal().array() += delta_w;
      Kt.bottomRightCorner(m, m).diagonal().array() -= delta_c;
      const bool ok = kkt.factor(lower_sparse(Kt), 0.1 * delta_c);
      const auto& in = kkt.inertia();
      if (ok && in.positive == n && in.negative == m && in.zero == 0) {
        factored = true;
        break;
      }
      if (delta_w == 0.0) delta_w = delta_w_last > 0.0 ? std::max(1e-8, delta_w_last / 10.0) : 1e-8;
      else delta_w *= 10.0;
      if (delta_w > 1e40) break;
    }
    if (!factored) {
      res.status = SolveStatus::numerical_failure;
      break;
    }
    if (delta_w > 0.0) delta_w_last = delta_w;

    VectorXd rhs(n + m);
    rhs.head(n) = -(grad_barrier + jac.transpose() * it.lam);
    rhs.tail(m) = -cval;
    VectorXd sol = rhs;
    kkt.solve(sol);
    VectorXd dx = sol.head(n);
    const VectorXd dlam = sol.tail(m);
    if (!dx.allFinite() || !dlam.allFinite()) {
      res.status = SolveStatus::numerical_failure;
      break;
    }

    const double tau = std::max(cfg.fraction_to_boundary, 1.0 - mu);
    VectorXd slack_lo = VectorXd::Zero(n), slack_hi = VectorXd::Zero(n);
    VectorXd dslack_lo = VectorXd::Zero(n), dslack_hi = VectorXd::Zero(n);
    const auto fill_slacks = [&](const VectorXd& d) {
      for (Index i = 0; i < n; ++i) {
        if (pb.has_lo(i)) slack_lo[i] = it.x[i] - pb.lo[i], dslack_lo[i] = d[i];
        if (pb.has_hi(i)) slack_hi[i] = pb.hi[i] - it.x[i], dslack_hi[i] = -d[i];
      }
    };
    fill_slacks(dx);
    const double alpha_max = std::min(max_step(slack_lo, dslack_lo, tau, lo_mask), max_step(slack_hi, dslack_hi, tau, hi_mask));

    VectorXd dzl = VectorXd::Zero(n), dzu = VectorXd::Zero(n);
    for (Index i = 0; i < n; ++i) {
      if (pb.has_lo(i)) dzl[i] = mu / slack_lo[i] - it.zl[i] - it.zl[i] / slack_lo[i] * dx[i];
      if (pb.has_hi(i)) dzu[i] = mu / slack_hi[i] - it.zu[i] + it.zu[i] / slack_hi[i] * dx[i];
    }
    const double alpha_z = std::min(max_step(it.zl, dzl, tau, lo_mask), max_step(it.zu, dzu, tau, hi_mask));

    // Backtracking with a two-criterion acceptance test against the current
    // iterate: sufficient reduction of the infeasibility theta = |c|_1 or of
    // the barrier objective phi. Close to feasibility, and when dx is a
    // descent direction for phi, Armijo decrease of phi is required instead.
    // One second-order correction is tried on the first rejected trial.
    const double theta = cval.lpNorm<1>();
    const double phi = pb.barrier(it.x, mu);
    const double dphi = grad_barrier.dot(dx);
    const double theta_max = 1e4 * std::max(1.0, theta0);
    const double theta_min = 1e-4 * std::max(1.0, theta0);
    const auto acceptable = [&](double a, const VectorXd& xt, const VectorXd& ct) {
      const double th = ct.lpNorm<1>();
      const double ph = pb.barrier(xt, mu);
      if (!std::isfinite(ph) || !std::isfinite(th) || th > theta_max) return false;
      const bool switching = dphi < 0.0 && a * std::pow(-dphi, kSPhi) > kDelta * std::pow(theta, kSTheta);
      if (theta <= theta_min && switching) return ph <= phi + kArmijo * a * dphi;
      return th <= (1.0 - kGammaTheta) * theta || ph <= phi - kGammaPhi * theta;
    };
    double alpha = alpha_max;
    bool accepted = false;
    VectorXd x_trial(n);
    for (int ls = 0; ls < kMaxBacktrack; ++ls) {
      x_trial = it.x + alpha * dx;
      const VectorXd c_trial = pb.c(x_trial);
      if (acceptable(alpha, x_trial, c_trial)) {
        accepted = true;
        break;
      }
      if (ls == 0 && c_trial.lpNorm<1>() >= theta) {
        VectorXd soc(n + m);
        soc.head(n) = rhs.head(n);
        soc.tail(m) = -(alpha * cval + c_trial);
        kkt.solve(soc);
        const VectorXd dx_soc = soc.head(n);
        if (dx_soc.allFinite()) {
          fill_slacks(dx_soc);
          const double a_soc = std::min(max_step(slack_lo, dslack_lo, tau, lo_mask), max_step(slack_hi, dslack_hi, tau, hi_mask));
          const VectorXd x_soc = it.x + a_soc * dx_soc;
          if (acceptable(alpha, x_soc, pb.c(x_soc))) {
            x_trial = x_soc;
            alpha = a_soc;
            accepted = true;
            break;
          }
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // Take the shortest trial anyway; stalling is caught by max_iter.
      x_trial = it.x + alpha * dx;
    }
    last_step = alpha;

    it.x = x_trial;
    it.lam += alpha * dlam;
    it.zl += alpha_z * dzl;
    it.zu += alpha_z * dzu;
    for (Index i = 0; i < n; ++i) {
      if (pb.has_lo(i)) {
        const double s = it.x[i] - pb.lo[i];
        it.zl[i] = std::clamp(it.zl[i], mu / (kKappaSigma * s), kKappaSigma * mu / s);
      }
      if (pb.has_hi(i)) {
        const double s = pb.hi[i] - it.x[i];
        it.zu[i] = std::clamp(it.zu[i], mu / (kKappaSigma * s), kKappaSigma * mu / s);
      }
    }
    grad = pb.grad_f(it.x);
    cval = pb.c(it.x);
    pb.derivatives(it.x, jac, nullptr, nullptr);
  }
  if (res.status != SolveStatus::optimal && std::isfinite(best_err)) {
    it = std::move(best);
    res.kkt_error = best_err;
  }
  res.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.iterations = iter;

  // Unpack.
  Solution& s = res.solution;
  s.pg = VectorXd(pb.ng);
  s.qg = VectorXd(pb.ng);
  for (Index k = 0; k < pb.ng; ++k) {
    s.pg[k] = it.x[pb.pg(k)];
    s.qg[k] = it.x[pb.qg(k)];
  }
  s.vm = it.x.segment(pb.vm(0), pb.nb);
  s.va = it.x.segment(pb.va(0), pb.nb);
  s.va.array() -= s.va[static_cast<Index>(net.slack_bus)];  // remove the regularization drift of the reference
  res.objective = objective(net, s);

  DualSolution& d = res.duals;
  const double inv = 1.0 / pb.scale;
  d.lam_p = VectorXd(pb.nb);
  d.lam_q = VectorXd(pb.nb);
  for (Index i = 0; i < pb.nb; ++i) {
    d.lam_p[i] = inv * it.lam[pb.row_p(i)];
    d.lam_q[i] = inv * it.lam[pb.row_q(i)];
  }
  d.mu_thermal = VectorXd::Zero(2 * pb.ne);
  for (Index t = 0; t < pb.nt; ++t) d.mu_thermal[pb.thermal_end[static_cast<std::size_t>(t)]] = inv * it.zl[pb.sl(t)];
  const Index nbx = 2 * pb.ng + pb.nb;
  d.z_lower = inv * it.zl.head(nbx);
  d.z_upper = inv * it.zu.head(nbx);
  return res;
}

nlohmann::json to_json(const SolveResult& r) {
  const auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"status", status_name(r.status)},
          {"solution", {{"pg", vec(r.solution.pg)}, {"qg", vec(r.solution.qg)}, {"vm", vec(r.solution.vm)}, {"va", vec(r.solution.va)}}},
          {"duals",
           {{"lam_p", vec(r.duals.lam_p)},
            {"lam_q", vec(r.duals.lam_q)},
            {"mu_thermal", vec(r.duals.mu_thermal)},
            {"z_lower", vec(r.duals.z_lower)},
            {"z_upper", vec(r.duals.z_upper)}}},
          {"objective", r.objective},
          {"iterations", r.iterations},
          {"elapsed", r.elapsed}};
}

std::string trace_csv(const std::vector<IterationTrace>& trace) {
  std::ostringstream os;
  os << "iter,mu,primal_inf,dual_inf,step_len\n";
  char buf[160];
  for (const auto& t : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.6e,%.6e,%.6e,%.6e\n", t.iter, t.mu, t.primal_inf, t.dual_inf, t.step_len);
    os << buf;
  }
  return os.str();
}

}  // namespace opfc
