#include "opfc/mlp.hpp"

#include <cmath>
#include <random>

#include "opfc/grid.hpp"
#include "opfc/io.hpp"

namespace opfc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::size_t MlpModel::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  return n;
}

void MlpModel::validate() const {
  if (layer_dims.size() < 2) throw Error("MLP: need at least one layer");
  for (int d : layer_dims)
    if (d < 1) throw Error("MLP: layer widths must be positive");
  if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size()) throw Error("MLP: layer count mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != layer_dims[l + 1] || weights[l].cols() != layer_dims[l] || biases[l].size() != layer_dims[l + 1])
      throw Error("MLP: layer " + std::to_string(l) + " shape mismatch");
    if (!weights[l].allFinite() || !biases[l].allFinite()) throw Error("MLP: non-finite parameters");
  }
  if (x_mean.size() != layer_dims.front() || x_std.size() != layer_dims.front())
    throw Error("MLP: input normalization dimension mismatch");
  if (!x_mean.allFinite() || !x_std.allFinite() || (x_std.array() <= 0.0).any())
    throw Error("MLP: invalid input normalization");
}

std::vector<int> mlp_dims(int n_in, int hidden, int n_out, int layers) {
  if (layers < 1) throw Error("MLP: need at least one layer");
  std::vector<int> dims{n_in};
  for (int l = 1; l < layers; ++l) dims.push_back(hidden);
  dims.push_back(n_out);
  return dims;
}

MlpModel make_mlp(const std::vector<int>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw Error("MLP: need at least one layer");
  for (int d : dims)
    if (d < 1) throw Error("MLP: layer widths must be positive");
  MlpModel m;
  m.layer_dims = dims;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double a = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    std::uniform_real_distribution<double> u(-a, a);
    MatrixXd w(dims[l + 1], dims[l]);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    m.weights.push_back(std::move(w));
    m.biases.push_back(VectorXd::Constant(dims[l + 1], l + 2 < dims.size() ? kHiddenBiasInit : 0.0));
  }
  m.x_mean = VectorXd::Zero(dims.front());
  m.x_std = VectorXd::Ones(dims.front());
  return m;
}

void set_input_stats(MlpModel& m, const MatrixXd& X, double eps) {
  if (X.cols() != m.input_dim() || X.rows() < 1) throw Error("MLP: input statistics dimension mismatch");
  const double n = static_cast<double>(X.rows());
  m.x_mean = X.colwise().sum().transpose() / n;
  const VectorXd var = (X.rowwise() - m.x_mean.transpose()).colwise().squaredNorm().transpose() / n;
  m.x_std = (var.array() + eps).sqrt().matrix();
}

MatrixXd forward(const MlpModel& m, const MatrixXd& X, ForwardCache* cache) {
  if (X.cols() != m.input_dim()) throw Error("MLP: input dimension mismatch");
  MatrixXd a = (X.rowwise() - m.x_mean.transpose()).transpose();
  a.array().colwise() /= m.x_std.array();
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  const std::size_t L = m.num_layers();
  for (std::size_t l = 0; l < L; ++l) {
    MatrixXd z = m.weights[l] * a;
    z.colwise() += m.biases[l];
    if (cache) {
      cache->inputs.push_back(a);
      cache->pre.push_back(z);
    }
    a = l + 1 < L ? MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return a.transpose();
}

VectorXd forward_one(const MlpModel& m, const VectorXd& x) {
  return forward(m, MatrixXd(x.transpose())).row(0).transpose();
}

MlpGradient backward(const MlpModel& m, const ForwardCache& cache, const MatrixXd& dout) {
  const std::size_t L = m.num_layers();
  if (cache.inputs.size() != L || cache.pre.size() != L) throw Error("MLP: cache does not match the model");
  if (dout.cols() != m.output_dim() || dout.rows() != cache.pre.back().cols()) throw Error("MLP: gradient shape mismatch");
  MlpGradient g;
  g.weights.resize(L);
  g.biases.resize(L);
  MatrixXd delta = dout.transpose();  // n_out x B
  for (std::size_t l = L; l-- > 0;) {
    if (l + 1 < L) delta = delta.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    g.weights[l] = delta * cache.inputs[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l > 0) delta = m.weights[l].transpose() * delta;
  }
  return g;
}

double l1_loss(const MatrixXd& pred, const MatrixXd& target, MatrixXd* grad) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw Error("L1 loss: shape mismatch");
  const double b = static_cast<double>(pred.rows());
  const MatrixXd diff = pred - target;
  if (grad) *grad = diff.unaryExpr([b](double v) { return v > 0.0 ? 1.0 / b : (v < 0.0 ? -1.0 / b : 0.0); });
  return diff.cwiseAbs().sum() / b;
}

AdamState make_adam(const MlpModel& m, double lr) {
  AdamState st;
  st.lr = lr;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    st.mw.push_back(MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
    st.vw.push_back(MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
    st.mb.push_back(VectorXd::Zero(m.biases[l].size()));
    st.vb.push_back(VectorXd::Zero(m.biases[l].size()));
  }
  return st;
}

namespace {

template <class P>
void adam_update(P& param, const P& grad, P& mom, P& vel, double b1, double b2, double c1, double c2, double lr,
                 double eps) {
  mom = b1 * mom + (1.0 - b1) * grad;
  vel = b2 * vel + (1.0 - b2) * grad.cwiseAbs2();
  param.array() -= lr * (mom.array() / c1) / ((vel.array() / c2).sqrt() + eps);
}

}  // namespace

void adam_step(MlpModel& m, const MlpGradient& g, AdamState& st) {
  if (g.weights.size() != m.num_layers() || st.mw.size() != m.num_layers()) throw Error("Adam: layer count mismatch");
  ++st.t;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    adam_update(m.weights[l], g.weights[l], st.mw[l], st.vw[l], st.beta1, st.beta2, c1, c2, st.lr, st.eps);
    adam_update(m.biases[l], g.biases[l], st.mb[l], st.vb[l], st.beta1, st.beta2, c1, c2, st.lr, st.eps);
  }
}

double adam_lr_for_epoch(double base, int epoch, int max_epochs) {
  const long drop = std::lround(0.9 * static_cast<double>(max_epochs));
  return epoch > drop ? 0.1 * base : base;
}

nlohmann::json to_json(const MlpModel& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < m.num_layers(); ++l)
    layers.push_back({{"weights", matrix_to_json(m.weights[l])}, {"biases", to_std(m.biases[l])}});
  return {{"format_version", kMlpFormatVersion},
          {"layer_dims", m.layer_dims},
          {"layers", layers},
          {"x_mean", to_std(m.x_mean)},
          {"x_std", to_std(m.x_std)}};
}

MlpModel mlp_from_json(const nlohmann::json& j) {
  if (j.value("format_version", 0) != kMlpFormatVersion) throw Error("MLP: unsupported model format version");
  MlpModel m;
  m.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  const auto& layers = j.at("layers");
  if (layers.size() + 1 != m.layer_dims.size()) throw Error("MLP: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    m.weights.push_back(matrix_from_json(layers[l].at("weights"), m.layer_dims[l + 1], m.layer_dims[l]));
    m.biases.push_back(vector_from_json(layers[l].at("biases")));
  }
  m.x_mean = vector_from_json(j.at("x_mean"));
  m.x_std = vector_from_json(j.at("x_std"));
  m.validate();
  return m;
}

}  // namespace opfc
