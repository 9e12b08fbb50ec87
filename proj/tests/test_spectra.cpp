#include <doctest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "opfc/grid.hpp"
#include "opfc/spectra.hpp"

using namespace opfc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd gaussian(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = nd(rng);
  return m;
}

// Covariance spectrum by the general (non-symmetric) eigen-solver on an
// explicitly accumulated covariance matrix.
VectorXd brute_force_spectrum(const MatrixXd& Y, bool standardize, double eps) {
  const auto n = static_cast<double>(Y.rows());
  MatrixXd Z = Y;
  for (Eigen::Index j = 0; j < Y.cols(); ++j) {
    double m = 0.0;
    for (Eigen::Index i = 0; i < Y.rows(); ++i) m += Y(i, j);
    m /= n;
    double v = 0.0;
    for (Eigen::Index i = 0; i < Y.rows(); ++i) v += (Y(i, j) - m) * (Y(i, j) - m);
    v /= n;
    for (Eigen::Index i = 0; i < Y.rows(); ++i) Z(i, j) = (Y(i, j) - m) / (standardize ? std::sqrt(v + eps) : 1.0);
  }
  MatrixXd C = MatrixXd::Zero(Y.cols(), Y.cols());
  for (Eigen::Index a = 0; a < Y.cols(); ++a)
    for (Eigen::Index b = 0; b < Y.cols(); ++b)
      for (Eigen::Index i = 0; i < Y.rows(); ++i) C(a, b) += Z(i, a) * Z(i, b) / n;
  Eigen::EigenSolver<MatrixXd> es(C);
  VectorXd ev = es.eigenvalues().real();
  std::sort(ev.data(), ev.data() + ev.size(), std::greater<>());
  return ev;
}

void check_decomposition(const PcaDecomposition& p) {
  const auto d = p.components.cols();
  CHECK((p.components.transpose() * p.components - MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-8);
  for (Eigen::Index k = 1; k < d; ++k) CHECK(p.eigenvalues[k - 1] >= p.eigenvalues[k]);
  CHECK(p.eigenvalues.minCoeff() >= -1e-10);
}

}  // namespace

TEST_CASE("centered spectrum of a constructed diag(4, 1) sample") {
  // four points with covariance exactly diag(4, 1)
  MatrixXd Y(4, 2);
  Y << 2 * std::sqrt(2.0), 0, -2 * std::sqrt(2.0), 0, 0, std::sqrt(2.0), 0, -std::sqrt(2.0);
  const PcaDecomposition p = fit_exact_pca(Y, {false, 1e-8});
  CHECK(p.eigenvalues[0] == doctest::Approx(4.0));
  CHECK(p.eigenvalues[1] == doctest::Approx(1.0));
  CHECK(std::abs(p.components(0, 0)) == doctest::Approx(1.0));
  check_decomposition(p);
  // standardized: unit variances and zero correlation
  const PcaDecomposition s = fit_exact_pca(Y);
  CHECK(s.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(s.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("spectrum matches the brute-force covariance") {
  MatrixXd Y = gaussian(200, 6, 3) * gaussian(6, 6, 4);
  Y.col(2) *= 50.0;
  Y.col(4).array() += 7.0;
  for (bool standardize : {true, false}) {
    const PcaDecomposition p = fit_exact_pca(Y, {standardize, 1e-8});
    const VectorXd ref = brute_force_spectrum(Y, standardize, 1e-8);
    CHECK((p.eigenvalues - ref).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, ref[0]));
    check_decomposition(p);
  }
}

TEST_CASE("gram route equals covariance route") {
  const MatrixXd Y = gaussian(8, 20, 5);
  const PcaDecomposition p = fit_exact_pca(Y);  // n < d
  const VectorXd ref = brute_force_spectrum(Y, true, 1e-8);
  CHECK((p.eigenvalues - ref).cwiseAbs().maxCoeff() < 1e-9);
  check_decomposition(p);
  // the leading components reproduce the data covariance action
  const MatrixXd Z = standardize_rows(Y, p.mean, p.scale);
  const MatrixXd C = Z.transpose() * Z / 8.0;
  for (int k = 0; k < 7; ++k) CHECK((C * p.components.col(k) - p.eigenvalues[k] * p.components.col(k)).norm() < 1e-9);
}

TEST_CASE("rank structure") {
  const VectorXd v = VectorXd::LinSpaced(5, 1.0, 2.0);
  MatrixXd Y(30, 5);
  for (int i = 0; i < 30; ++i) Y.row(i) = (0.1 * i - 1.3) * v.transpose();
  const PcaDecomposition p = fit_exact_pca(Y);
  CHECK(p.eigenvalues[0] > 1.0);
  CHECK(p.eigenvalues.tail(4).cwiseAbs().maxCoeff() < 1e-10);

  const MatrixXd C = MatrixXd::Constant(10, 4, 3.5);
  const PcaDecomposition c = fit_exact_pca(C);
  CHECK(c.eigenvalues.cwiseAbs().maxCoeff() == 0.0);
  check_decomposition(c);
  CHECK_THROWS_AS(fit_exact_pca(MatrixXd::Ones(1, 3)), Error);
}

TEST_CASE("explained variance ratio") {
  const VectorXd e = (VectorXd(2) << 3, 1).finished();
  CHECK(explained_variance_ratio(e, 1) == doctest::Approx(75.0));
  CHECK(explained_variance_ratio(e, 2) == 100.0);
  CHECK(explained_variance_ratio(VectorXd::Zero(3), 1) == 100.0);
  CHECK_THROWS_AS(explained_variance_ratio(e, 0), Error);
  CHECK_THROWS_AS(explained_variance_ratio(e, 3), Error);
}

TEST_CASE("evr curve") {
  const PcaDecomposition p = fit_exact_pca(gaussian(100, 40, 6) * gaussian(40, 40, 7));
  const auto rows = evr_curve(p, {0.01, 0.05, 0.10, 0.20});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].k == 1);
  CHECK(rows[1].k == 2);
  CHECK(rows[2].k == 4);
  CHECK(rows[3].k == 8);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].evr_percent >= rows[i - 1].evr_percent);
  const auto full = evr_curve(p, {1.0});
  CHECK(full.size() == 1);
  CHECK(full[0].evr_percent == doctest::Approx(100.0));
  CHECK_THROWS_AS(evr_curve(p, {0.0}), Error);
  CHECK_THROWS_AS(evr_curve(p, {1.5}), Error);
  const std::string csv = evr_csv(rows);
  CHECK(csv.rfind("ratio,k,evr_percent\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("reconstruction error equals the discarded spectrum") {
  const MatrixXd Y = gaussian(300, 10, 8) * gaussian(10, 10, 9);
  const PcaDecomposition p = fit_exact_pca(Y);
  const MatrixXd Z = standardize_rows(Y, p.mean, p.scale);
  for (int k : {1, 3, 7}) {
    const MatrixXd W = p.components.leftCols(k);
    const MatrixXd R = Z * W * W.transpose();
    const double mse = (Z - R).squaredNorm() / static_cast<double>(Z.size());
    const double tail = p.eigenvalues.tail(10 - k).sum() / 10.0;
    CHECK(mse == doctest::Approx(tail).epsilon(1e-8));
  }
}

TEST_CASE("feature permutation permutes component rows") {
  const MatrixXd Y = gaussian(100, 5, 10) * gaussian(5, 5, 11);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  const MatrixXd Yp = Y * perm;
  const PcaDecomposition a = fit_exact_pca(Y);
  const PcaDecomposition b = fit_exact_pca(Yp);
  CHECK((a.eigenvalues - b.eigenvalues).cwiseAbs().maxCoeff() < 1e-10);
  const MatrixXd pa = perm.transpose() * a.components;
  for (int k = 0; k < 5; ++k) CHECK(std::abs(pa.col(k).dot(b.components.col(k))) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("principal angle") {
  const MatrixXd I = MatrixXd::Identity(4, 4);
  CHECK(principal_angle(I.leftCols(2), I.leftCols(2)) < 1e-7);
  CHECK(principal_angle(I.leftCols(2), I.rightCols(2)) == doctest::Approx(M_PI / 2));
  MatrixXd A = I.leftCols(1), B(4, 1);
  B << std::cos(0.3), std::sin(0.3), 0, 0;
  CHECK(principal_angle(A, B) == doctest::Approx(0.3));
  // span is what matters, not the basis
  MatrixXd C = I.leftCols(2) * (MatrixXd(2, 2) << 1, 2, 3, 4).finished();
  CHECK(principal_angle(I.leftCols(2), C) < 1e-7);
}
