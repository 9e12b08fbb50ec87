#include "kkt_factor.hpp"

#include <cmath>

namespace opfc::detail {

bool SymmetricIndefiniteFactor::factor(const Sparse& a, double zero_pivot) {
  const bool same_pattern = analyzed_ && a.rows() == a_.rows() && a.nonZeros() == a_.nonZeros() &&
                            std::equal(a.outerIndexPtr(), a.outerIndexPtr() + a.outerSize() + 1, a_.outerIndexPtr()) &&
                            std::equal(a.innerIndexPtr(), a.innerIndexPtr() + a.nonZeros(), a_.innerIndexPtr());
  a_ = a;
  if (!same_pattern) {
    ldlt_.analyzePattern(a_);
    analyzed_ = true;
  }
  ldlt_.factorize(a_);
  inertia_ = {};
  if (ldlt_.info() != Eigen::Success) return false;
  const Eigen::VectorXd d = ldlt_.vectorD();
  if (!d.allFinite()) return false;
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    if (std::abs(d[k]) <= zero_pivot) ++inertia_.zero;
    else if (d[k] > 0) ++inertia_.positive;
    else ++inertia_.negative;
  }
  return true;
}

void SymmetricIndefiniteFactor::solve(Eigen::VectorXd& rhs) const {
  Eigen::VectorXd x = ldlt_.solve(rhs);
  const Eigen::VectorXd r = rhs - a_.selfadjointView<Eigen::Lower>() * x;
  x += ldlt_.solve(r);
  rhs = std::move(x);
}

}  // namespace opfc::detail
