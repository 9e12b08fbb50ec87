#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace opfc {

/// Fully connected network: affine layers with ReLU on every layer but the
/// last. Inputs are standardized with stored statistics.
struct MlpModel {
  std::vector<int> layer_dims;            // input, hidden..., output
  std::vector<Eigen::MatrixXd> weights;  // layer l: dims[l+1] x dims[l]
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_std;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t num_parameters() const;
  void validate() const;
};

constexpr int kDefaultLayers = 4;
/// Initial bias of hidden units; keeps narrow ReLU layers active at the start.
constexpr double kHiddenBiasInit = 1.0;

/// Layer dims (n_in, h, ..., h, n_out) with `layers` affine layers.
std::vector<int> mlp_dims(int n_in, int hidden, int n_out, int layers = kDefaultLayers);

/// Xavier-uniform weights, hidden biases kHiddenBiasInit, zero output bias,
/// identity input normalization.
MlpModel make_mlp(const std::vector<int>& dims, std::uint64_t seed);

/// Sets x_mean and x_std = sqrt(var + eps) from the rows of X.
void set_input_stats(MlpModel& m, const Eigen::MatrixXd& X, double eps = 1e-8);

/// Per-layer inputs (column per sample) and pre-activations.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> pre;
};

/// Batch forward pass; X holds one sample per row. Returns B x n_out.
Eigen::MatrixXd forward(const MlpModel& m, const Eigen::MatrixXd& X, ForwardCache* cache = nullptr);
Eigen::VectorXd forward_one(const MlpModel& m, const Eigen::VectorXd& x);

struct MlpGradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Reverse-mode gradient of a loss whose derivative with respect to the
/// forward output is dout (B x n_out). ReLU'(0) = 0.
MlpGradient backward(const MlpModel& m, const ForwardCache& cache, const Eigen::MatrixXd& dout);

/// Batch-mean L1 loss (1/B) sum_i |pred_i - target_i|_1 and its derivative.
double l1_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, Eigen::MatrixXd* grad = nullptr);

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  std::int64_t t = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(const MlpModel& m, double lr = 1e-4);
void adam_step(MlpModel& m, const MlpGradient& g, AdamState& st);

/// Adam learning rate for an epoch: base, times 0.1 from 90% of max_epochs on.
double adam_lr_for_epoch(double base, int epoch, int max_epochs);

constexpr int kMlpFormatVersion = 1;

nlohmann::json to_json(const MlpModel& m);
MlpModel mlp_from_json(const nlohmann::json& j);

}  // namespace opfc
