#include <doctest.h>

#include "kkt_check.hpp"
#include "opfc/ipm.hpp"
#include "test_common.hpp"

using namespace opfc;
using Eigen::VectorXd;

namespace {

// Model-1 objectives from an independent interior-point OPF on the same
// simplified formulation (no shunts, charging, taps or shifts).
constexpr double kRefCase9 = 5310.0705993562;
constexpr double kRefCase14 = 8083.1544036146;
constexpr double kRefCase30 = 581.2316965130;
constexpr double kRefCase118 = 129725.7614855711;

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("flat start follows the minimum-value rule") {
  const Network net = test::load_case("case14");
  const StartPoint sp = flat_start(net);
  CHECK(sp.kind == StartKind::flat);
  REQUIRE(sp.primal);
  CHECK_FALSE(sp.duals);
  for (std::size_t k = 0; k < net.num_generators(); ++k) {
    CHECK(sp.primal->pg[static_cast<Eigen::Index>(k)] == net.generators[k].pg_min);
    CHECK(sp.primal->qg[static_cast<Eigen::Index>(k)] == net.generators[k].qg_min);
  }
  for (std::size_t i = 0; i < net.num_buses(); ++i) CHECK(sp.primal->vm[static_cast<Eigen::Index>(i)] == net.buses[i].v_min);
  CHECK(sp.primal->va.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("start point and config validation") {
  const Network net = parse_matpower(test::two_bus_case());
  const Instance inst = baseline_instance(net);
  StartPoint sp;
  sp.kind = StartKind::primal;
  CHECK_THROWS_AS(solve(net, inst, sp), Error);
  sp = flat_start(net);
  sp.kind = StartKind::primal_dual;
  CHECK_THROWS_AS(solve(net, inst, sp), Error);
  sp = flat_start(net, 0.0);
  CHECK_THROWS_AS(solve(net, inst, sp), Error);
  IpmConfig cfg;
  cfg.fraction_to_boundary = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("two-bus dispatch matches the hand solution") {
  // power-flow solution of the fixture with v1 = 1: v2, theta2 and the
  // generator output that serves 0.5 p.u. plus losses
  const Network net = parse_matpower(test::two_bus_case());
  const Instance inst = baseline_instance(net);
  IpmConfig cfg;
  cfg.tol = 1e-9;
  const SolveResult r = solve(net, inst, flat_start(net), cfg);
  REQUIRE(r.status == SolveStatus::optimal);
  CHECK(r.solution.pg[0] == doctest::Approx(0.50515685528154863).epsilon(1e-6));
  CHECK(r.solution.vm[1] == doctest::Approx(0.98467413509814095).epsilon(1e-6));
  CHECK(r.solution.va[1] == doctest::Approx(-0.10173182612657161).epsilon(1e-5));
  CHECK(r.objective == doctest::Approx(25770.92327143512).epsilon(1e-6));
  CHECK(r.solution.va[0] == 0.0);
}

TEST_CASE("reference networks from flat start") {
  struct Ref {
    const char* name;
    double objective;
  };
  for (const Ref ref : {Ref{"case9", kRefCase9}, Ref{"case14", kRefCase14}, Ref{"case30", kRefCase30}, Ref{"case118", kRefCase118}}) {
    CAPTURE(ref.name);
    const Network net = test::load_case(ref.name);
    const Instance inst = baseline_instance(net);
    const IpmConfig cfg;
    const SolveResult r = solve(net, inst, flat_start(net), cfg);
    REQUIRE(r.status == SolveStatus::optimal);
    CHECK(r.kkt_error <= cfg.tol);
    CHECK(r.iterations >= 1);
    CHECK(rel(r.objective, ref.objective) < 1e-4);
    CHECK(violations(net, inst, r.solution).max_overall <= 10 * cfg.tol);
    CHECK(r.solution.va[static_cast<Eigen::Index>(net.slack_bus)] == 0.0);
    const auto k = test::kkt_residual(net, inst, r.solution, r.duals);
    CAPTURE(k.stationarity);
    CAPTURE(k.complementarity);
    CHECK(k.overall() <= 10 * cfg.tol);
    CHECK(r.duals.z_lower.minCoeff() >= 0.0);
    CHECK(r.duals.z_upper.minCoeff() >= 0.0);
    CHECK(r.duals.mu_thermal.minCoeff() >= 0.0);
  }
}

TEST_CASE("self warm start") {
  for (const char* name : {"case14", "case30"}) {
    CAPTURE(name);
    const Network net = test::load_case(name);
    const Instance inst = baseline_instance(net);
    const SolveResult flat = solve(net, inst, flat_start(net));
    REQUIRE(flat.status == SolveStatus::optimal);
    const SolveResult warm = solve(net, inst, primal_dual_start(flat.solution, flat.duals, 1e-3));
    REQUIRE(warm.status == SolveStatus::optimal);
    CHECK(warm.iterations < flat.iterations);
    CHECK(rel(warm.objective, flat.objective) < 1e-6);
    const SolveResult primal = solve(net, inst, primal_start(flat.solution, IpmConfig{}.mu_init_flat));
    REQUIRE(primal.status == SolveStatus::optimal);
    CHECK(warm.iterations <= primal.iterations);
  }
}

TEST_CASE("warm start outside the bounds is clamped") {
  const Network net = test::load_case("case14");
  const Instance inst = baseline_instance(net);
  Solution s = *flat_start(net).primal;
  s.pg.array() -= 5.0;
  s.vm.array() += 1.0;
  s.va.array() += 0.3;
  DualSolution d{VectorXd::Zero(14), VectorXd::Zero(14), VectorXd::Constant(40, -1.0), VectorXd::Constant(24, -3.0),
                 VectorXd::Zero(24)};
  const SolveResult r = solve(net, inst, primal_dual_start(s, d, 1e-3));
  CHECK(r.status == SolveStatus::optimal);
  CHECK(rel(r.objective, kRefCase14) < 1e-4);
}

TEST_CASE("more demand does not cost less") {
  const Network net = test::load_case("case14");
  Instance inst = baseline_instance(net);
  const SolveResult base = solve(net, inst, flat_start(net));
  inst.pd *= 1.05;
  inst.qd *= 1.05;
  const SolveResult more = solve(net, inst, flat_start(net));
  REQUIRE(base.status == SolveStatus::optimal);
  REQUIRE(more.status == SolveStatus::optimal);
  CHECK(more.objective >= base.objective);
}

TEST_CASE("solves are deterministic") {
  const Network net = test::load_case("case30");
  const Instance inst = baseline_instance(net);
  IpmConfig cfg;
  cfg.record_trace = true;
  const SolveResult a = solve(net, inst, flat_start(net), cfg);
  const SolveResult b = solve(net, inst, flat_start(net), cfg);
  CHECK(encode_y(a.solution) == encode_y(b.solution));
  CHECK(encode_duals(a.duals) == encode_duals(b.duals));
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    CHECK(a.trace[k].mu == b.trace[k].mu);
    CHECK(a.trace[k].primal_inf == b.trace[k].primal_inf);
    CHECK(a.trace[k].dual_inf == b.trace[k].dual_inf);
    CHECK(a.trace[k].step_len == b.trace[k].step_len);
  }
  CHECK(a.trace.size() == static_cast<std::size_t>(a.iterations) + 1);
  CHECK(trace_csv(a.trace).rfind("iter,mu,primal_inf,dual_inf,step_len\n", 0) == 0);
}

TEST_CASE("iteration limit returns the best iterate") {
  const Network net = test::load_case("case14");
  const Instance inst = baseline_instance(net);
  IpmConfig cfg;
  cfg.max_iter = 3;
  cfg.record_trace = true;
  const SolveResult r = solve(net, inst, flat_start(net), cfg);
  CHECK(r.status == SolveStatus::max_iter);
  CHECK(r.iterations == 3);
  CHECK(std::isfinite(r.kkt_error));
  CHECK(r.solution.pg.allFinite());
  IpmConfig more = cfg;
  more.max_iter = 6;
  CHECK(solve(net, inst, flat_start(net), more).kkt_error <= r.kkt_error);
}

TEST_CASE("dual codec") {
  const Network net = test::load_case("case14");
  CHECK(dim_dual(net) == 2 * 14 + 2 * 20 + 2 * (2 * 5 + 14));
  const VectorXd v = VectorXd::LinSpaced(static_cast<Eigen::Index>(dim_dual(net)), 0, 1);
  CHECK(encode_duals(decode_duals(net, v)) == v);
  CHECK_THROWS_AS(decode_duals(net, VectorXd::Zero(3)), Error);
  const auto mask = dual_inequality_mask(net);
  CHECK(mask.size() == dim_dual(net));
  CHECK_FALSE(mask[0]);
  CHECK_FALSE(mask[27]);
  CHECK(mask[28]);
  CHECK(mask.back());
}

TEST_CASE("result json") {
  const Network net = parse_matpower(test::two_bus_case());
  const SolveResult r = solve(net, baseline_instance(net), flat_start(net));
  const auto j = to_json(r);
  CHECK(j.at("status") == "optimal");
  CHECK(j.at("solution").at("pg").size() == 1);
  CHECK(j.at("duals").at("z_lower").size() == 4);
  CHECK(j.at("iterations") == r.iterations);
}
