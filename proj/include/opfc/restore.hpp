#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "opfc/acopf.hpp"
#include "opfc/datagen.hpp"
#include "opfc/grid.hpp"

namespace opfc {

struct PfResult {
  Solution solution;
  int iterations = 0;
  bool converged = false;
  double residual_inf = 0.0;  // p.u.
  double elapsed = 0.0;       // seconds
  std::string diagnostic;
};

/// Newton power flow seeded by a predicted solution. Voltage magnitudes at the
/// slack bus and at buses holding generators (PV) and active injections at
/// every non-slack bus are taken from the seed; angles at non-slack buses and
/// magnitudes at load (PQ) buses are solved. Afterwards the slack bus
/// generators absorb the active residual and bus reactive generation is split
/// over generators in proportion to their reactive ranges.
PfResult newton_pf(const Network& net, const Instance& inst, const Solution& seed, double tol = 1e-8,
                   int max_iter = 30);

/// Remaining bound and thermal violations of a converged power flow.
ViolationReport restored_violations(const Network& net, const Instance& inst, const PfResult& pf);

/// True for buses whose voltage magnitude is fixed in the power flow.
std::vector<bool> voltage_controlled(const Network& net);

struct RestoreRow {
  std::uint64_t instance_id = 0;
  bool converged = false;
  int iterations = 0;
  double bound_pu = 0.0;
  double thermal_mva = 0.0;
  double balance_pu = 0.0;
  double elapsed_s = 0.0;
};

/// Power flow for each record of `test` seeded by the matching prediction row.
std::vector<RestoreRow> restore_all(const Network& net, const Dataset& test, const Eigen::MatrixXd& predictions,
                                    int workers = 1, double tol = 1e-8, int max_iter = 30);

std::string restore_csv(const std::vector<RestoreRow>& rows);

struct RestoreSummary {
  std::size_t instances = 0;
  std::size_t converged = 0;
  double mean_bound_pu = 0.0;    // over converged instances
  double mean_thermal_mva = 0.0;
  double mean_elapsed_s = 0.0;
};

RestoreSummary summarize(const std::vector<RestoreRow>& rows);
std::string restore_summary_csv(const std::string& method, const RestoreSummary& s);

}  // namespace opfc
