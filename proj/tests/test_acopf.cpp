#include <doctest.h>

#include "opfc/acopf.hpp"
#include "test_common.hpp"

using namespace opfc;
using Eigen::VectorXd;

namespace {

Solution flat_voltage(const Network& net) {
  const auto ng = static_cast<Eigen::Index>(net.num_generators());
  const auto nb = static_cast<Eigen::Index>(net.num_buses());
  return {VectorXd::Zero(ng), VectorXd::Zero(ng), VectorXd::Ones(nb), VectorXd::Zero(nb)};
}

}  // namespace

TEST_CASE("objective") {
  Network net = parse_matpower(test::two_bus_case());
  net.generators[0].cost = {3.0, 1.0, 5.0};
  Solution s = flat_voltage(net);
  s.pg[0] = 2.0;
  CHECK(objective(net, s) == doctest::Approx(19.0));
  net.generators[0].cost = {1.0, 0.0, 0.0};
  s.pg[0] = 0.0;
  CHECK(objective(net, s) == 0.0);
  s.pg = VectorXd::Zero(3);
  CHECK_THROWS_AS(objective(net, s), Error);
}

TEST_CASE("branch flows orient both ends") {
  const Network net = test::load_case("case9");
  const Solution flat = flat_voltage(net);
  const BranchFlow f0 = branch_flows(net, flat);
  CHECK(f0.pf.size() == 2 * static_cast<Eigen::Index>(net.num_branches()));
  CHECK(f0.pf.cwiseAbs().maxCoeff() < 1e-14);
  CHECK(f0.qf.cwiseAbs().maxCoeff() < 1e-14);

  Solution s = flat;
  s.vm[0] = 1.02;
  s.va[4] = -0.07;
  const BranchFlow f = branch_flows(net, s);
  const auto E = static_cast<Eigen::Index>(net.num_branches());
  for (Eigen::Index e = 0; e < E; ++e) {
    const auto& br = net.branches[static_cast<std::size_t>(e)];
    const auto a = static_cast<Eigen::Index>(br.from), b = static_cast<Eigen::Index>(br.to);
    const double t = s.va[a] - s.va[b];
    const double pij = br.g * s.vm[a] * s.vm[a] - s.vm[a] * s.vm[b] * (br.b * std::sin(t) + br.g * std::cos(t));
    const double pji = br.g * s.vm[b] * s.vm[b] - s.vm[a] * s.vm[b] * (-br.b * std::sin(t) + br.g * std::cos(t));
    CHECK(f.pf[e] == doctest::Approx(pij).epsilon(1e-12));
    CHECK(f.pf[E + e] == doctest::Approx(pji).epsilon(1e-12));
  }
}

TEST_CASE("balance residuals at flat voltage equal the demand") {
  const Network net = test::load_case("case14");
  const Instance inst = baseline_instance(net);
  const auto r = balance_residuals(net, inst, flat_voltage(net));
  VectorXd pd, qd;
  bus_demand(net, inst, pd, qd);
  CHECK((r.dp - pd).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((r.dq - qd).cwiseAbs().maxCoeff() < 1e-15);
  for (const auto& l : net.loads) CHECK(pd[static_cast<Eigen::Index>(l.bus)] != 0.0);
}

TEST_CASE("isolated bus has zero residual") {
  Network net = parse_matpower(test::two_bus_case());
  net.buses.push_back({3, 0.9, 1.1, BusType::pq});
  net.gens_at_bus.emplace_back();
  Solution s = flat_voltage(net);
  s.vm[1] = 0.97;
  s.va[1] = -0.1;
  const auto r = balance_residuals(net, baseline_instance(net), s);
  CHECK(r.dp[2] == 0.0);
  CHECK(r.dq[2] == 0.0);
}

TEST_CASE("violations of constructed points") {
  Network net = parse_matpower(test::two_bus_case());
  const Instance inst = baseline_instance(net);
  Solution s = flat_voltage(net);
  SUBCASE("bound excess") {
    s.pg[0] = net.generators[0].pg_max + 0.3;
    const auto v = violations(net, inst, s);
    CHECK(v.max_bound == doctest::Approx(0.3));
  }
  SUBCASE("thermal excess") {
    // build a point whose from-end apparent flow is 1.2 with s_max = 1.0
    net.branches[0].s_max = 1.0;
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < 200; ++k) {
      const double mid = 0.5 * (lo + hi);
      s.va[1] = -mid;
      const auto f = branch_flows(net, s);
      (std::hypot(f.pf[0], f.qf[0]) < 1.2 ? lo : hi) = mid;
    }
    const auto v = violations(net, inst, s);
    CHECK(v.max_thermal_pu == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(v.max_thermal_mva == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(v.max_overall >= v.max_thermal_pu);
  }
}

TEST_CASE("optimality gap") {
  CHECK(optimality_gap(101, 100) == doctest::Approx(1.0));
  CHECK(optimality_gap(100, 100) == 0.0);
  CHECK(optimality_gap(95, 100) == doctest::Approx(5.0));
  CHECK_THROWS_AS(optimality_gap(1, 0), Error);
}

TEST_CASE("vector codecs") {
  const Network net = test::load_case("case14");
  CHECK(dim_x(net) == 22);
  CHECK(dim_y(net) == 38);

  Network two = parse_matpower(test::two_bus_case());
  two.loads.push_back({0, 0.0, 0.0});
  const Instance inst{(VectorXd(2) << 1, 2).finished(), (VectorXd(2) << 3, 4).finished()};
  const VectorXd x = encode_x(inst);
  CHECK(x == (VectorXd(4) << 1, 2, 3, 4).finished());
  const Instance back = decode_x(two, x);
  CHECK(back.pd == inst.pd);
  CHECK(back.qd == inst.qd);
  CHECK_THROWS_AS(decode_x(two, VectorXd::Zero(3)), Error);

  Solution s{VectorXd::Random(5), VectorXd::Random(5), VectorXd::Random(14), VectorXd::Random(14)};
  const Solution r = decode_y(net, encode_y(s));
  CHECK(r.pg == s.pg);
  CHECK(r.qg == s.qg);
  CHECK(r.vm == s.vm);
  CHECK(r.va == s.va);
  CHECK_THROWS_AS(decode_y(net, VectorXd::Zero(37)), Error);
}

TEST_CASE("objective invariant under generator reordering") {
  Network net = test::load_case("case14");
  Solution s = flat_voltage(net);
  for (Eigen::Index k = 0; k < s.pg.size(); ++k) s.pg[k] = 0.1 * static_cast<double>(k + 1);
  const double f = objective(net, s);
  std::swap(net.generators[0], net.generators[3]);
  std::swap(s.pg[0], s.pg[3]);
  CHECK(objective(net, s) == doctest::Approx(f).epsilon(1e-14));
}

TEST_CASE("violation csv") {
  ViolationReport r{0.1, 0.2, 20.0, 0.0, 0.2};
  CHECK(violation_csv_header() == "instance_id,max_bound,max_thermal_pu,max_thermal_mva,max_balance,max_overall");
  CHECK(violation_csv_row("7", r) == "7,0.10000000000000001,0.20000000000000001,20,0,0.20000000000000001");
}
