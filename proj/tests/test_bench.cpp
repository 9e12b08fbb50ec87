#include <doctest.h>

#include <sstream>

#include "opfc/bench.hpp"
#include "opfc/datagen.hpp"
#include "test_common.hpp"

using namespace opfc;

namespace {

struct Fixture {
  Network net = test::load_case("case14");
  Dataset train, test;
  std::vector<ModelPair> models;
  WarmStartReport report;
  Fixture() {
    PerturbConfig pc;
    pc.seed = 21;
    auto [a, b] = split(generate(net, pc, 60), 0.9, 22);
    train = std::move(a);
    test = std::move(b);
    TrainConfig cfg;
    cfg.max_epochs = 20;
    cfg.adam_lr = 1e-3;
    cfg.gha.gamma_init = cfg.gha.gamma_min = 5e-5;
    ModelPair compact;
    compact.family = "Compact";
    compact.primal.kind = "compact";
    compact.primal.compact = train_compact(train, cfg);
    cfg.mode = TrainMode::convl_large;
    cfg.target = TrainTarget::dual;
    compact.dual = TrainedModel{"conventional", {}, train_dual(train, net, cfg)};
    models.push_back(std::move(compact));
    BenchConfig bc;
    bc.flat_control = true;
    bc.workers = 2;
    report = run_suite(net, test, models, bc);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("method rows") {
  const auto& r = fixture().report;
  std::vector<std::string> names;
  for (const auto& m : r.rows) names.push_back(m.method);
  CHECK(names == std::vector<std::string>{"Flat", "Flat(control)", "WS:AC-OPF(P)", "WS:AC-OPF(P+D)", "WS:Compact(P)",
                                          "WS:Compact(P+D)"});
  CHECK(r.trace.size() == 6 * fixture().test.size());
  CHECK(r.find("Flat")->elapsed > 0.0);
  CHECK(r.find("nope") == nullptr);
}

TEST_CASE("flat control has unit iteration ratio") {
  const auto* c = fixture().report.find("Flat(control)");
  REQUIRE(c != nullptr);
  CHECK(c->iter_ratio_mean == 1.0);
  CHECK(c->iter_ratio_median == 1.0);
  CHECK(c->failures == 0);
}

TEST_CASE("self warm start is faster in iterations") {
  const auto* pd = fixture().report.find("WS:AC-OPF(P+D)");
  REQUIRE(pd != nullptr);
  CHECK(pd->iter_ratio_mean < 1.0);
  CHECK(pd->optimal == pd->instances);
}

TEST_CASE("ratio bookkeeping") {
  const auto& r = fixture().report;
  for (const auto& row : r.ratios) {
    const TraceRow* flat = nullptr;
    const TraceRow* m = nullptr;
    for (const auto& t : r.trace) {
      if (t.instance_id != row.instance_id) continue;
      if (t.method == "Flat") flat = &t;
      if (t.method == row.method) m = &t;
    }
    REQUIRE(flat != nullptr);
    REQUIRE(m != nullptr);
    CHECK(row.elapsed_ratio * flat->elapsed_s == doctest::Approx(m->elapsed_s).epsilon(1e-12));
    CHECK(row.iter_ratio * flat->iterations == doctest::Approx(m->iterations).epsilon(1e-12));
  }
  for (const auto& t : r.trace)
    if (t.status == "optimal") CHECK(t.iterations >= 1);
}

TEST_CASE("report regenerates exactly from the persisted trace") {
  const auto& r = fixture().report;
  const WarmStartReport again = aggregate(trace_from_csv(trace_csv(r.trace)));
  CHECK(report_csv(again) == report_csv(r));
  CHECK(ratio_csv(again.ratios) == ratio_csv(r.ratios));
  CHECK(trace_csv(again.trace) == trace_csv(r.trace));
  CHECK(report_csv(r).rfind("method,instances,optimal,failures,elapsed,iter_ratio_mean,iter_ratio_median,elapsed_ratio_median\n", 0) == 0);
}

TEST_CASE("solved-within curve") {
  const auto& r = fixture().report;
  double tmax = 0.0;
  for (const auto& t : r.trace) tmax = std::max(tmax, t.elapsed_s);
  const std::string csv = solved_within_curve(r, {0.0, tmax / 2, tmax * 2});
  std::istringstream is(csv);
  std::string header, zero, mid, big;
  std::getline(is, header);
  std::getline(is, zero);
  std::getline(is, mid);
  std::getline(is, big);
  CHECK(header == "t,Flat,Flat(control),WS:AC-OPF(P),WS:AC-OPF(P+D),WS:Compact(P),WS:Compact(P+D)");
  CHECK(zero == "0,0,0,0,0,0,0");
  std::size_t optimal_flat = 0;
  for (const auto& t : r.trace)
    if (t.method == "Flat" && t.status == "optimal") ++optimal_flat;
  std::vector<std::string> cells;
  std::istringstream row(big);
  for (std::string c; std::getline(row, c, ',');) cells.push_back(c);
  REQUIRE(cells.size() == 7);
  CHECK(cells[1] == std::to_string(optimal_flat));
  const auto grid = default_time_grid(r, 10);
  REQUIRE(grid.size() == 10);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
}

TEST_CASE("mismatched models are rejected") {
  const auto& f = fixture();
  auto models = f.models;
  models[0].primal.compact.fingerprint = "ffff";
  CHECK_THROWS_AS(run_suite(f.net, f.test, models), Error);
  models = f.models;
  models[0].dual->conventional.fingerprint = "ffff";
  CHECK_THROWS_AS(run_suite(f.net, f.test, models), Error);
  models = f.models;
  std::swap(models[0].primal, *models[0].dual);
  CHECK_THROWS_AS(run_suite(f.net, f.test, models), Error);
}
