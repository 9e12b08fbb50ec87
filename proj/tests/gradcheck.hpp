#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Core>

#include "opfc/mlp.hpp"

namespace opfc::test {

using Eigen::MatrixXd;

inline MatrixXd gaussian(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = nd(rng);
  return m;
}

inline double half_sq(const MatrixXd& out, const MatrixXd& target) { return 0.5 * (out - target).squaredNorm(); }

// floor of 1e-3 keeps roundoff of the differenced loss (~1e-9 absolute) out of the ratio
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

// Max relative error between backward() and central differences of a smooth
// loss over every parameter.
inline double gradient_check(MlpModel m, const MatrixXd& X, const MatrixXd& T) {
  ForwardCache cache;
  const MatrixXd out = forward(m, X, &cache);
  const MlpGradient g = backward(m, cache, out - T);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    for (Eigen::Index k = 0; k < m.weights[l].size(); ++k) {
      double& w = m.weights[l].data()[k];
      const double w0 = w;
      w = w0 + h;
      const double fp = half_sq(forward(m, X), T);
      w = w0 - h;
      const double fm = half_sq(forward(m, X), T);
      w = w0;
      worst = std::max(worst, rel_err(g.weights[l].data()[k], (fp - fm) / (2 * h)));
    }
    for (Eigen::Index k = 0; k < m.biases[l].size(); ++k) {
      double& b = m.biases[l][k];
      const double b0 = b;
      b = b0 + h;
      const double fp = half_sq(forward(m, X), T);
      b = b0 - h;
      const double fm = half_sq(forward(m, X), T);
      b = b0;
      worst = std::max(worst, rel_err(g.biases[l][k], (fp - fm) / (2 * h)));
    }
  }
  return worst;
}


// Worst gradient error over `trials` random architectures with every width in
// [1, 8].
inline double random_architecture_check(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim(1, 8);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const std::vector<int> dims{dim(rng), dim(rng), dim(rng), dim(rng), dim(rng)};
    MlpModel m = make_mlp(dims, seed + static_cast<std::uint64_t>(trial));
    for (auto& b : m.biases) b = 0.3 * gaussian(b.size(), 1, rng);
    const MatrixXd X = gaussian(3, dims.front(), rng);
    set_input_stats(m, gaussian(6, dims.front(), rng));
    const MatrixXd T = gaussian(3, dims.back(), rng);
    worst = std::max(worst, gradient_check(m, X, T));
  }
  return worst;
}

}  // namespace opfc::test
