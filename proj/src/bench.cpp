#include "opfc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "opfc/io.hpp"
#include "opfc/parallel.hpp"

namespace opfc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const MethodSummary* WarmStartReport::find(const std::string& method) const {
  for (const auto& r : rows)
    if (r.method == method) return &r;
  return nullptr;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

TraceRow run_one(const Network& net, const Instance& inst, std::uint64_t id, const std::string& method,
                 const StartPoint& start, const IpmConfig& ipm, double inference_s) {
  const SolveResult r = solve(net, inst, start, ipm);
  return {id, method, status_name(r.status), r.iterations, r.elapsed, r.objective, inference_s};
}

void check_model(const TrainedModel& m, const Dataset& test, TrainTarget target, const std::string& what) {
  if (m.fingerprint() != test.fingerprint)
    throw Error(what + " model fingerprint " + m.fingerprint() + " does not match dataset " + test.fingerprint);
  if (m.target() != target) throw Error(what + " model predicts the wrong target");
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

WarmStartReport run_suite(const Network& net, const Dataset& test, const std::vector<ModelPair>& models,
                          const BenchConfig& cfg) {
  cfg.ipm.validate();
  check_fingerprint(test, net);
  for (const auto& m : models) {
    check_model(m.primal, test, TrainTarget::primal, m.family + " primal");
    if (m.dual) check_model(*m.dual, test, TrainTarget::dual, m.family + " dual");
  }
  const std::size_t n = test.size();

  // Batch inference per model; the per-instance share is logged as inference time.
  struct Prediction {
    MatrixXd primal, dual;
    double primal_s = 0.0, dual_s = 0.0;
  };
  std::vector<Prediction> preds(models.size());
  const MatrixXd X = test.inputs();
  for (std::size_t k = 0; k < models.size(); ++k) {
    auto t0 = std::chrono::steady_clock::now();
    preds[k].primal = models[k].primal.predict(X);
    preds[k].primal_s = seconds_since(t0) / static_cast<double>(std::max<std::size_t>(n, 1));
    if (models[k].dual) {
      t0 = std::chrono::steady_clock::now();
      preds[k].dual = models[k].dual->predict(X);
      preds[k].dual_s = seconds_since(t0) / static_cast<double>(std::max<std::size_t>(n, 1));
    }
  }

  const IpmConfig& ipm = cfg.ipm;
  std::vector<std::vector<TraceRow>> per(n);
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    const Record& rec = test.records[i];
    const Instance inst = decode_x(net, rec.x);
    auto& rows = per[i];
    const SolveResult flat = solve(net, inst, flat_start(net, ipm.mu_init_flat), ipm);
    rows.push_back({rec.id, kFlatMethod, status_name(flat.status), flat.iterations, flat.elapsed, flat.objective, 0.0});
    if (cfg.flat_control) rows.push_back(run_one(net, inst, rec.id, "Flat(control)", flat_start(net, ipm.mu_init_flat), ipm, 0.0));
    if (cfg.self_warm_start) {
      rows.push_back(run_one(net, inst, rec.id, "WS:AC-OPF(P)", primal_start(flat.solution, ipm.mu_init_flat), ipm,
                             flat.elapsed));
      rows.push_back(run_one(net, inst, rec.id, "WS:AC-OPF(P+D)",
                             primal_dual_start(flat.solution, flat.duals, ipm.mu_init_warm), ipm, flat.elapsed));
    }
    for (std::size_t k = 0; k < models.size(); ++k) {
      const Solution primal = decode_y(net, preds[k].primal.row(static_cast<Eigen::Index>(i)).transpose());
      rows.push_back(run_one(net, inst, rec.id, "WS:" + models[k].family + "(P)", primal_start(primal, ipm.mu_init_flat),
                             ipm, preds[k].primal_s));
      if (!models[k].dual) continue;
      const DualSolution dual = decode_duals(net, preds[k].dual.row(static_cast<Eigen::Index>(i)).transpose());
      rows.push_back(run_one(net, inst, rec.id, "WS:" + models[k].family + "(P+D)",
                             primal_dual_start(primal, dual, ipm.mu_init_warm), ipm,
                             preds[k].primal_s + preds[k].dual_s));
    }
  });

  std::vector<TraceRow> trace;
  for (auto& rows : per)
    for (auto& r : rows) trace.push_back(std::move(r));
  return aggregate(std::move(trace));
}

WarmStartReport aggregate(std::vector<TraceRow> trace) {
  WarmStartReport rep;
  rep.trace = std::move(trace);
  std::vector<std::string> methods;
  std::map<std::uint64_t, const TraceRow*> flat;
  for (const auto& t : rep.trace) {
    if (std::find(methods.begin(), methods.end(), t.method) == methods.end()) methods.push_back(t.method);
    if (t.method == kFlatMethod) flat[t.instance_id] = &t;
  }
  for (const auto& [id, f] : flat)
    if (f->status != "optimal") ++rep.flat_failures;

  for (const auto& method : methods) {
    MethodSummary s;
    s.method = method;
    std::vector<double> iter_r, time_r;
    double elapsed_sum = 0.0;
    for (const auto& t : rep.trace) {
      if (t.method != method) continue;
      const auto it = flat.find(t.instance_id);
      if (it == flat.end() || it->second->status != "optimal") continue;
      ++s.instances;
      if (t.status != "optimal") {
        ++s.failures;
        continue;
      }
      ++s.optimal;
      const TraceRow& f = *it->second;
      const double ir = static_cast<double>(t.iterations) / static_cast<double>(f.iterations);
      const double er = t.elapsed_s / f.elapsed_s;
      iter_r.push_back(ir);
      time_r.push_back(er);
      elapsed_sum += method == kFlatMethod ? t.elapsed_s : er;
      if (method != kFlatMethod) rep.ratios.push_back({t.instance_id, method, ir, er});
    }
    if (s.optimal > 0) {
      const double m = static_cast<double>(s.optimal);
      s.elapsed = elapsed_sum / m;
      s.iter_ratio_mean = 0.0;
      for (double r : iter_r) s.iter_ratio_mean += r;
      s.iter_ratio_mean /= m;
      s.iter_ratio_median = median(iter_r);
      s.elapsed_ratio_median = median(time_r);
    } else {
      s.elapsed = s.iter_ratio_mean = s.iter_ratio_median = s.elapsed_ratio_median = std::nan("");
    }
    rep.rows.push_back(s);
  }
  return rep;
}

std::string report_csv(const WarmStartReport& r) {
  std::ostringstream os;
  os << "method,instances,optimal,failures,elapsed,iter_ratio_mean,iter_ratio_median,elapsed_ratio_median\n";
  for (const auto& s : r.rows)
    os << s.method << ',' << s.instances << ',' << s.optimal << ',' << s.failures << ',' << format_double(s.elapsed) << ','
       << format_double(s.iter_ratio_mean) << ',' << format_double(s.iter_ratio_median) << ','
       << format_double(s.elapsed_ratio_median) << '\n';
  return os.str();
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream os;
  os << "instance_id,method,status,iterations,elapsed_s,objective,inference_s\n";
  for (const auto& t : trace)
    os << t.instance_id << ',' << t.method << ',' << t.status << ',' << t.iterations << ',' << format_double(t.elapsed_s)
       << ',' << format_double(t.objective) << ',' << format_double(t.inference_s) << '\n';
  return os.str();
}

std::vector<TraceRow> trace_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("instance_id,method,status", 0) != 0) throw Error("trace CSV: bad header");
  std::vector<TraceRow> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) c.push_back(cell);
    if (c.size() != 7) throw Error("trace CSV line " + std::to_string(lineno) + ": expected 7 fields");
    try {
      out.push_back({std::stoull(c[0]), c[1], c[2], std::stoi(c[3]), std::stod(c[4]), std::stod(c[5]), std::stod(c[6])});
    } catch (const std::exception&) {
      throw Error("trace CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

std::string ratio_csv(const std::vector<RatioRow>& ratios) {
  std::ostringstream os;
  os << "instance_id,method,iter_ratio,elapsed_ratio\n";
  for (const auto& r : ratios)
    os << r.instance_id << ',' << r.method << ',' << format_double(r.iter_ratio) << ',' << format_double(r.elapsed_ratio) << '\n';
  return os.str();
}

std::string solved_within_curve(const WarmStartReport& r, const std::vector<double>& time_grid) {
  std::ostringstream os;
  os << 't';
  for (const auto& s : r.rows) os << ',' << s.method;
  os << '\n';
  for (double t : time_grid) {
    os << format_double(t);
    for (const auto& s : r.rows) {
      std::size_t count = 0;
      for (const auto& row : r.trace)
        if (row.method == s.method && row.status == "optimal" && row.elapsed_s <= t) ++count;
      os << ',' << count;
    }
    os << '\n';
  }
  return os.str();
}

std::vector<double> default_time_grid(const WarmStartReport& r, int points) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& t : r.trace)
    if (t.status == "optimal" && t.elapsed_s > 0.0) {
      lo = std::min(lo, t.elapsed_s);
      hi = std::max(hi, t.elapsed_s);
    }
  if (!(hi > 0.0)) return {0.0};
  if (!(hi > lo)) lo = 0.5 * hi;
  std::vector<double> grid;
  points = std::max(points, 2);
  for (int k = 0; k < points; ++k)
    grid.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / static_cast<double>(points - 1)));
  return grid;
}

}  // namespace opfc
