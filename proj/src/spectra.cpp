#include "opfc/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "opfc/grid.hpp"
#include "opfc/io.hpp"

namespace opfc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void column_stats(const MatrixXd& Y, VectorXd& mean, VectorXd& var) {
  const double n = static_cast<double>(Y.rows());
  mean = Y.colwise().sum().transpose() / n;
  var = (Y.rowwise() - mean.transpose()).colwise().squaredNorm().transpose() / n;
}

MatrixXd standardize_rows(const MatrixXd& Y, const VectorXd& mean, const VectorXd& scale) {
  MatrixXd Z = Y.rowwise() - mean.transpose();
  Z.array().rowwise() /= scale.transpose().array();
  return Z;
}

namespace {

// Descending eigenpairs of a symmetric matrix.
void sorted_eigen(const MatrixXd& S, VectorXd& values, MatrixXd& vectors) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  if (es.info() != Eigen::Success) throw Error("eigen-decomposition failed");
  values = es.eigenvalues().reverse();
  vectors = es.eigenvectors().rowwise().reverse();
}

}  // namespace

PcaDecomposition fit_exact_pca(const MatrixXd& Y, const PcaOptions& opt) {
  if (Y.rows() < 2) throw Error("PCA needs at least two records");
  if (Y.cols() < 1) throw Error("PCA needs at least one feature");
  if (!Y.allFinite()) throw Error("PCA input contains non-finite values");
  if (!(opt.eps > 0.0)) throw Error("PCA eps must be positive");

  PcaDecomposition out;
  VectorXd var;
  column_stats(Y, out.mean, var);
  out.scale = opt.standardize ? VectorXd((var.array() + opt.eps).sqrt()) : VectorXd::Ones(Y.cols());
  const MatrixXd Z = standardize_rows(Y, out.mean, out.scale);
  const auto n = Y.rows();
  const auto d = Y.cols();
  const double nd = static_cast<double>(n);

  if (n >= d) {
    sorted_eigen(Z.transpose() * Z / nd, out.eigenvalues, out.components);
  } else {
    VectorXd gv;
    MatrixXd gu;
    sorted_eigen(Z * Z.transpose() / nd, gv, gu);
    const double cutoff = std::max(gv.size() ? gv[0] : 0.0, 0.0) * 1e-12 * static_cast<double>(d);
    Eigen::Index r = 0;
    while (r < gv.size() && gv[r] > cutoff && gv[r] > 0.0) ++r;
    MatrixXd basis(d, d);
    for (Eigen::Index k = 0; k < r; ++k) basis.col(k) = Z.transpose() * gu.col(k) / std::sqrt(nd * gv[k]);
    // complete to an orthonormal basis of R^d
    MatrixXd aug(d, d + r);
    aug.leftCols(r) = basis.leftCols(r);
    aug.rightCols(d) = MatrixXd::Identity(d, d);
    Eigen::HouseholderQR<MatrixXd> qr(aug);
    const MatrixXd q = qr.householderQ() * MatrixXd::Identity(d, d);
    for (Eigen::Index k = r; k < d; ++k) basis.col(k) = q.col(k);
    out.components = basis;
    out.eigenvalues = VectorXd::Zero(d);
    out.eigenvalues.head(r) = gv.head(r);
  }
  out.eigenvalues = out.eigenvalues.cwiseMax(0.0);
  return out;
}

double explained_variance_ratio(const VectorXd& eigenvalues, int k) {
  if (k < 1 || k > eigenvalues.size()) throw Error("explained variance: k out of range");
  const double total = eigenvalues.sum();
  if (!(total > 0.0)) return 100.0;
  return 100.0 * eigenvalues.head(k).sum() / total;
}

std::vector<EvrRow> evr_curve(const PcaDecomposition& pca, const std::vector<double>& ratios) {
  const auto d = pca.eigenvalues.size();
  std::vector<EvrRow> rows;
  rows.reserve(ratios.size());
  for (double r : ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw Error("principal component ratio must be in (0, 1]");
    const int k = std::max(1, static_cast<int>(std::floor(r * static_cast<double>(d) + 1e-9)));
    rows.push_back({r, k, explained_variance_ratio(pca.eigenvalues, k)});
  }
  return rows;
}

std::string evr_csv(const std::vector<EvrRow>& rows) {
  std::ostringstream os;
  os << "ratio,k,evr_percent\n";
  for (const auto& r : rows) os << format_double(r.ratio) << ',' << r.k << ',' << format_double(r.evr_percent) << '\n';
  return os.str();
}

double principal_angle(const MatrixXd& A, const MatrixXd& B) {
  if (A.rows() != B.rows()) throw Error("principal angle: row mismatch");
  const MatrixXd qa = Eigen::HouseholderQR<MatrixXd>(A).householderQ() * MatrixXd::Identity(A.rows(), A.cols());
  const MatrixXd qb = Eigen::HouseholderQR<MatrixXd>(B).householderQ() * MatrixXd::Identity(B.rows(), B.cols());
  Eigen::JacobiSVD<MatrixXd> svd(qa.transpose() * qb);
  const VectorXd s = svd.singularValues();
  const double smin = s.size() ? std::clamp(s.minCoeff(), 0.0, 1.0) : 1.0;
  // arcsin of the residual norm is accurate for small angles
  const double resid = std::sqrt(std::max(0.0, 1.0 - smin * smin));
  return smin > 0.7 ? std::asin(resid) : std::acos(smin);
}

}  // namespace opfc
