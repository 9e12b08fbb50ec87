#include "opfc/gha.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/QR>

#include "opfc/grid.hpp"
#include "opfc/io.hpp"

namespace opfc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::VectorXd GhaState::scale() const { return (var.array() + eps).sqrt().matrix(); }

void GhaState::validate() const {
  if (W.cols() > W.rows() || W.cols() < 1) throw Error("GHA state: need 1 <= p <= d");
  if (mu.size() != W.rows() || var.size() != W.rows()) throw Error("GHA state: statistics dimension mismatch");
  if (!W.allFinite() || !mu.allFinite() || !var.allFinite()) throw Error("GHA state: non-finite entries");
  if (var.size() && var.minCoeff() < 0.0) throw Error("GHA state: negative variance");
  if (!(beta >= 0.0 && beta < 1.0)) throw Error("GHA state: beta must be in [0, 1)");
  if (!(eps > 0.0)) throw Error("GHA state: eps must be positive");
}

void GhaLrSchedule::validate() const {
  if (!(gamma_min > 0.0) || !(gamma_init >= gamma_min)) throw Error("GHA schedule: need 0 < gamma_min <= gamma_init");
}

double lr(int epoch, const GhaLrSchedule& sched) {
  if (epoch < 1) throw Error("GHA schedule: epoch must be >= 1");
  return std::max(sched.gamma_min, sched.gamma_init / (0.01 * static_cast<double>(epoch)));
}

MatrixXd init_W(Eigen::Index d, Eigen::Index p, std::uint64_t seed) {
  if (p < 1 || p > d) throw Error("init_W: need 1 <= p <= d");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  MatrixXd g(d, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = nd(rng);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  return qr.householderQ() * MatrixXd::Identity(d, p);
}

GhaState make_gha_state(Eigen::Index d, Eigen::Index p, std::uint64_t seed, double beta, double eps) {
  GhaState s;
  s.W = init_W(d, p, seed);
  s.mu = VectorXd::Zero(d);
  s.var = VectorXd::Zero(d);
  s.beta = beta;
  s.eps = eps;
  s.validate();
  return s;
}

MatrixXd sanger_increment(const MatrixXd& normalized, const MatrixXd& W) {
  const MatrixXd yw = normalized * W;  // B x p
  const MatrixXd gram = yw.transpose() * yw;
  // column k is deflated by columns 0..k (upper triangle in this layout)
  MatrixXd upper = gram.triangularView<Eigen::Upper>();
  return (normalized.transpose() * yw - W * upper) / static_cast<double>(normalized.rows());
}

void gha_step(const MatrixXd& batch, GhaState& state, double gamma) {
  if (batch.rows() < 1) throw Error("GHA step: empty batch");
  if (batch.cols() != state.dim()) throw Error("GHA step: batch dimension mismatch");
  if (!batch.allFinite()) throw Error("GHA step: non-finite batch entries");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw Error("GHA step: gamma must be positive");

  const double n = static_cast<double>(batch.rows());
  const VectorXd m = batch.colwise().sum().transpose() / n;
  const VectorXd s2 = (batch.rowwise() - m.transpose()).colwise().squaredNorm().transpose() / n;
  const double beta = state.step_count == 0 ? 0.0 : state.beta;
  state.mu = beta * state.mu + (1.0 - beta) * m;
  state.var = beta * state.var + (1.0 - beta) * s2;

  MatrixXd yn = batch.rowwise() - state.mu.transpose();
  yn.array().rowwise() /= state.scale().transpose().array();
  state.W += gamma * sanger_increment(yn, state.W);
  ++state.step_count;
}

nlohmann::json to_json(const GhaState& s) {
  return {{"d", s.dim()},
          {"p", s.components()},
          {"W", matrix_to_json(s.W)},
          {"mu", to_std(s.mu)},
          {"var", to_std(s.var)},
          {"step_count", s.step_count},
          {"beta", s.beta},
          {"eps", s.eps}};
}

GhaState gha_state_from_json(const nlohmann::json& j) {
  GhaState s;
  const auto d = j.at("d").get<Eigen::Index>();
  const auto p = j.at("p").get<Eigen::Index>();
  s.W = matrix_from_json(j.at("W"), d, p);
  s.mu = vector_from_json(j.at("mu"));
  s.var = vector_from_json(j.at("var"));
  s.step_count = j.at("step_count").get<std::int64_t>();
  s.beta = j.at("beta").get<double>();
  s.eps = j.at("eps").get<double>();
  s.validate();
  return s;
}

nlohmann::json to_json(const GhaLrSchedule& s) { return {{"gamma_init", s.gamma_init}, {"gamma_min", s.gamma_min}}; }

GhaLrSchedule gha_schedule_from_json(const nlohmann::json& j) {
  GhaLrSchedule s;
  s.gamma_init = j.value("gamma_init", s.gamma_init);
  s.gamma_min = j.value("gamma_min", s.gamma_min);
  s.validate();
  return s;
}

}  // namespace opfc
