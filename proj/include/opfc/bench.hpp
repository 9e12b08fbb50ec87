#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "opfc/datagen.hpp"
#include "opfc/grid.hpp"
#include "opfc/ipm.hpp"
#include "opfc/train.hpp"

namespace opfc {

/// A primal predictor and an optional dual predictor of one model family
/// ("Compact", "CONVL-Small", "CONVL-Large").
struct ModelPair {
  std::string family;
  TrainedModel primal;
  std::optional<TrainedModel> dual;
};

struct BenchConfig {
  IpmConfig ipm;
  int workers = 1;
  /// Adds a second flat-start run ("Flat(control)") for each instance.
  bool flat_control = false;
  /// Adds the self warm starts WS:AC-OPF(P) and WS:AC-OPF(P+D).
  bool self_warm_start = true;
};

struct TraceRow {
  std::uint64_t instance_id = 0;
  std::string method;
  std::string status;
  int iterations = 0;
  double elapsed_s = 0.0;
  double objective = 0.0;
  double inference_s = 0.0;  // time to produce the start point, not part of elapsed_s
};

struct RatioRow {
  std::uint64_t instance_id = 0;
  std::string method;
  double iter_ratio = 0.0;
  double elapsed_ratio = 0.0;
};

struct MethodSummary {
  std::string method;
  std::size_t instances = 0;  // instances whose flat start was optimal
  std::size_t optimal = 0;
  std::size_t failures = 0;
  double elapsed = 0.0;  // mean seconds for Flat, mean elapsed ratio otherwise
  double iter_ratio_mean = 1.0;
  double iter_ratio_median = 1.0;
  double elapsed_ratio_median = 1.0;
};

struct WarmStartReport {
  std::vector<TraceRow> trace;
  std::vector<RatioRow> ratios;
  std::vector<MethodSummary> rows;
  std::size_t flat_failures = 0;  // instances excluded from all ratios

  const MethodSummary* find(const std::string& method) const;
};

inline const char* kFlatMethod = "Flat";

/// Solves every test instance from flat start and from each warm start.
/// P+D methods start with mu_init_warm, the others with mu_init_flat.
WarmStartReport run_suite(const Network& net, const Dataset& test, const std::vector<ModelPair>& models,
                          const BenchConfig& cfg = {});

/// Ratios and per-method summaries recomputed from a trace alone.
WarmStartReport aggregate(std::vector<TraceRow> trace);

std::string report_csv(const WarmStartReport& r);
std::string trace_csv(const std::vector<TraceRow>& trace);
std::vector<TraceRow> trace_from_csv(const std::string& text);
std::string ratio_csv(const std::vector<RatioRow>& ratios);

/// Rows "t,<method>..." counting optimal solves with elapsed_s <= t.
std::string solved_within_curve(const WarmStartReport& r, const std::vector<double>& time_grid);
/// Geometric grid from the smallest to the largest optimal elapsed time.
std::vector<double> default_time_grid(const WarmStartReport& r, int points = 50);

}  // namespace opfc
