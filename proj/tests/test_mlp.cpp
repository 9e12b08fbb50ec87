#include <doctest.h>

#include <random>

#include <Eigen/SVD>

#include "opfc/grid.hpp"
#include "opfc/mlp.hpp"
#include "gradcheck.hpp"

using namespace opfc;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using test::gaussian;
using test::gradient_check;

TEST_CASE("architecture") {
  CHECK(mlp_dims(3, 5, 2) == std::vector<int>{3, 5, 5, 5, 2});
  CHECK(mlp_dims(3, 5, 2, 2) == std::vector<int>{3, 5, 2});
  const MlpModel m = make_mlp({3, 4, 4, 4, 2}, 1);
  CHECK(m.num_layers() == 4);
  CHECK(m.num_parameters() == 3 * 4 + 4 + 2 * (16 + 4) + 4 * 2 + 2);
  CHECK(m.weights[0].rows() == 4);
  CHECK(m.weights[0].cols() == 3);
  const double bound = std::sqrt(6.0 / 7.0);
  CHECK(m.weights[0].cwiseAbs().maxCoeff() <= bound);
  CHECK(m.biases[2] == VectorXd::Constant(4, kHiddenBiasInit));
  CHECK(m.biases[3].isZero());
  CHECK(make_mlp({3, 4, 4, 4, 2}, 1).weights[3] == m.weights[3]);
  CHECK((make_mlp({3, 4, 4, 4, 2}, 2).weights[3] - m.weights[3]).norm() > 0.0);
  CHECK_THROWS_AS(make_mlp({3}, 1), Error);
  CHECK_THROWS_AS(make_mlp({3, 0, 2}, 1), Error);
}

TEST_CASE("forward basics") {
  MlpModel zero = make_mlp({3, 4, 4, 4, 2}, 1);
  for (auto& w : zero.weights) w.setZero();
  CHECK(forward_one(zero, VectorXd::Constant(3, 7.0)).isZero());

  MlpModel id = make_mlp({1, 1, 1, 1, 1}, 1);
  for (auto& w : id.weights) w.setOnes();
  for (auto& b : id.biases) b.setZero();
  id.x_mean = VectorXd::Constant(1, 2.0);
  id.x_std = VectorXd::Constant(1, 3.0);
  CHECK(forward_one(id, VectorXd::Constant(1, 5.0))[0] == doctest::Approx(1.0));
  CHECK(forward_one(id, VectorXd::Constant(1, -1.0))[0] == 0.0);  // ReLU clips

  CHECK_THROWS_AS(forward_one(id, VectorXd::Zero(2)), Error);
}

TEST_CASE("forward is bounded and homogeneous in the last layer") {
  std::mt19937_64 rng(3);
  MlpModel m = make_mlp({5, 6, 6, 6, 3}, 4);
  for (auto& b : m.biases) b = VectorXd::Random(b.size());
  const MatrixXd X = gaussian(10, 5, rng);
  const MatrixXd out = forward(m, X);
  CHECK(out.allFinite());
  // |f(x)| <= prod |W_l| |x_n| + sum_l (prod_{k>l} |W_k|) |b_l| with x_n the normalized input
  auto opnorm = [](const MatrixXd& w) { return Eigen::JacobiSVD<MatrixXd>(w).singularValues()(0); };
  double lip = 1.0;
  for (const auto& w : m.weights) lip *= opnorm(w);
  double bias_bound = 0.0;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    double rest = 1.0;
    for (std::size_t k = l + 1; k < m.num_layers(); ++k) rest *= opnorm(m.weights[k]);
    bias_bound += rest * m.biases[l].norm();
  }
  for (Eigen::Index i = 0; i < X.rows(); ++i) CHECK(out.row(i).norm() <= lip * X.row(i).norm() + bias_bound + 1e-12);

  MlpModel scaled = m;
  scaled.weights.back() *= 2.5;
  scaled.biases.back() *= 2.5;
  CHECK((forward(scaled, X) - 2.5 * out).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("input statistics") {
  MatrixXd X(4, 2);
  X << 1, 5, 3, 5, 5, 5, 7, 5;
  MlpModel m = make_mlp({2, 3, 1}, 1);
  set_input_stats(m, X);
  CHECK(m.x_mean[0] == doctest::Approx(4.0));
  CHECK(m.x_std[0] == doctest::Approx(std::sqrt(5.0)));
  CHECK(m.x_std[1] == doctest::Approx(1e-4));
}

TEST_CASE("backward matches central differences on a toy net") {
  std::mt19937_64 rng(5);
  MlpModel m = make_mlp({1, 1, 1, 1, 1}, 6);  // 8 parameters
  for (auto& w : m.weights) w(0, 0) = 0.5 + std::abs(w(0, 0));
  for (auto& b : m.biases) b[0] = 0.3;
  const MatrixXd X = (MatrixXd(3, 1) << 0.4, 1.1, 2.0).finished();
  const MatrixXd T = (MatrixXd(3, 1) << 0.1, -0.5, 3.0).finished();
  CHECK(gradient_check(m, X, T) < 1e-6);
}

TEST_CASE("backward with zero upstream gradient") {
  std::mt19937_64 rng(7);
  const MlpModel m = make_mlp({3, 4, 4, 4, 2}, 8);
  ForwardCache c;
  forward(m, gaussian(5, 3, rng), &c);
  const MlpGradient g = backward(m, c, MatrixXd::Zero(5, 2));
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(g.weights[l].isZero());
    CHECK(g.biases[l].isZero());
  }
}

TEST_CASE("gradient check over random architectures") { CHECK(test::random_architecture_check(100, 2024) < 1e-5); }

TEST_CASE("L1 loss") {
  const MatrixXd p = (MatrixXd(2, 2) << 1, 2, 3, 4).finished();
  const MatrixXd t = (MatrixXd(2, 2) << 0, 2, 5, 4.5).finished();
  MatrixXd g;
  CHECK(l1_loss(p, t, &g) == doctest::Approx((1 + 0 + 2 + 0.5) / 2.0));
  CHECK(g(0, 0) == 0.5);
  CHECK(g(0, 1) == 0.0);
  CHECK(g(1, 0) == -0.5);
  CHECK(g(1, 1) == -0.5);
}

TEST_CASE("adam") {
  MlpModel m = make_mlp({2, 2, 1}, 9);
  const MlpModel m0 = m;
  AdamState st = make_adam(m, 1e-3);
  MlpGradient zero{{MatrixXd::Zero(2, 2), MatrixXd::Zero(1, 2)}, {VectorXd::Zero(2), VectorXd::Zero(1)}};
  adam_step(m, zero, st);
  CHECK(m.weights[0] == m0.weights[0]);
  CHECK(m.biases[1] == m0.biases[1]);
  CHECK(st.t == 1);

  // first step: m_hat = g, v_hat = g^2, so the step is lr g / (|g| + eps)
  MlpModel a = make_mlp({2, 2, 1}, 9);
  AdamState sa = make_adam(a, 1e-3);
  MlpGradient g = zero;
  g.biases[1][0] = 0.25;
  g.weights[0](1, 0) = -4.0;
  adam_step(a, g, sa);
  CHECK(a.biases[1][0] - m0.biases[1][0] == doctest::Approx(-1e-3 * 0.25 / (0.25 + 1e-8)));
  CHECK(a.weights[0](1, 0) - m0.weights[0](1, 0) == doctest::Approx(1e-3 * 4.0 / (4.0 + 1e-8)));
  CHECK(a.weights[0](0, 0) == m0.weights[0](0, 0));

  // constant positive gradient drives the parameter down monotonically
  double prev = a.biases[1][0];
  for (int i = 0; i < 50; ++i) {
    adam_step(a, g, sa);
    CHECK(a.biases[1][0] < prev);
    prev = a.biases[1][0];
  }
}

TEST_CASE("learning-rate drop") {
  CHECK(adam_lr_for_epoch(1e-4, 900, 1000) == 1e-4);
  CHECK(adam_lr_for_epoch(1e-4, 901, 1000) == doctest::Approx(1e-5));
  CHECK(adam_lr_for_epoch(1e-4, 180, 200) == 1e-4);
  CHECK(adam_lr_for_epoch(1e-4, 181, 200) == doctest::Approx(1e-5));
}

TEST_CASE("deterministic training trajectory and json round trip") {
  auto run = [] {
    std::mt19937_64 rng(10);
    MlpModel m = make_mlp({3, 5, 5, 5, 2}, 11);
    const MatrixXd X = gaussian(16, 3, rng);
    const MatrixXd T = gaussian(16, 2, rng);
    set_input_stats(m, X);
    AdamState st = make_adam(m, 1e-2);
    for (int it = 0; it < 30; ++it) {
      ForwardCache c;
      MatrixXd g;
      l1_loss(forward(m, X, &c), T, &g);
      adam_step(m, backward(m, c, g), st);
    }
    return m;
  };
  const MlpModel a = run();
  const MlpModel b = run();
  for (std::size_t l = 0; l < 4; ++l) CHECK(a.weights[l] == b.weights[l]);

  const MlpModel r = mlp_from_json(nlohmann::json::parse(to_json(a).dump()));
  CHECK(r.layer_dims == a.layer_dims);
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(r.weights[l] == a.weights[l]);
    CHECK(r.biases[l] == a.biases[l]);
  }
  CHECK(r.x_mean == a.x_mean);
  CHECK(r.x_std == a.x_std);
  nlohmann::json bad = to_json(a);
  bad["format_version"] = 99;
  CHECK_THROWS_AS(mlp_from_json(bad), Error);
}
