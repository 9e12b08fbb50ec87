#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace opfc::detail {

struct Inertia {
  int positive = 0;
  int negative = 0;
  int zero = 0;
};

/// Sparse LDL' factorization of a symmetric quasi-definite matrix (no
/// numerical pivoting, fill-reducing AMD ordering). The inertia is read off D;
/// by Sylvester's law it is the inertia of the matrix whenever the
/// factorization exists.
class SymmetricIndefiniteFactor {
 public:
  using Sparse = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

  /// Factors `a` (only the lower triangle is referenced). Pivots with
  /// magnitude at most `zero_pivot` count as zero eigenvalues. Returns false
  /// when the elimination breaks down.
  bool factor(const Sparse& a, double zero_pivot);
  const Inertia& inertia() const { return inertia_; }
  /// Solves A x = rhs in place with one step of iterative refinement.
  void solve(Eigen::VectorXd& rhs) const;

 private:
  Eigen::SimplicialLDLT<Sparse, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  Sparse a_;
  bool analyzed_ = false;
  Inertia inertia_;
};

}  // namespace opfc::detail
