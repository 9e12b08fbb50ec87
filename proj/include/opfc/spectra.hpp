#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace opfc {

/// Exact principal components of column-standardized data.
struct PcaDecomposition {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;        // sqrt(var + eps), or ones when only centering
  Eigen::VectorXd eigenvalues;  // descending
  Eigen::MatrixXd components;   // d x d, orthonormal columns
};

struct PcaOptions {
  bool standardize = true;
  double eps = 1e-8;
};

/// Population (divisor n) mean and variance of the columns of Y.
void column_stats(const Eigen::MatrixXd& Y, Eigen::VectorXd& mean, Eigen::VectorXd& var);

/// (Y - mean) ./ scale row by row.
Eigen::MatrixXd standardize_rows(const Eigen::MatrixXd& Y, const Eigen::VectorXd& mean, const Eigen::VectorXd& scale);

/// Eigen-decomposition of the covariance of the standardized rows of Y
/// (n x d). Uses the n x n Gram matrix when n < d.
PcaDecomposition fit_exact_pca(const Eigen::MatrixXd& Y, const PcaOptions& opt = {});

/// 100 * (sum of the first k eigenvalues) / (sum of all); 100 for an all-zero
/// spectrum.
double explained_variance_ratio(const Eigen::VectorXd& eigenvalues, int k);

struct EvrRow {
  double ratio = 0.0;
  int k = 0;
  double evr_percent = 0.0;
};

/// k = max(1, floor(ratio * d)) for each ratio in (0, 1].
std::vector<EvrRow> evr_curve(const PcaDecomposition& pca, const std::vector<double>& ratios);
std::string evr_csv(const std::vector<EvrRow>& rows);

/// Largest principal angle (radians) between the column spans of A and B.
double principal_angle(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

}  // namespace opfc
