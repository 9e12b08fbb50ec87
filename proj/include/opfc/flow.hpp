#pragma once

#include <Eigen/Core>

namespace opfc {

/// Directed flow from bus i to bus j through a branch with series admittance
/// g + jb, together with derivatives with respect to (v_i, v_j, theta_i, theta_j):
///   p = g v_i^2 - v_i v_j (b sin(t_i - t_j) + g cos(t_i - t_j))
///   q = -b v_i^2 - v_i v_j (g sin(t_i - t_j) - b cos(t_i - t_j))
struct FlowDerivatives {
  double p = 0.0;
  double q = 0.0;
  Eigen::Vector4d dp = Eigen::Vector4d::Zero();
  Eigen::Vector4d dq = Eigen::Vector4d::Zero();
  Eigen::Matrix4d hp = Eigen::Matrix4d::Zero();
  Eigen::Matrix4d hq = Eigen::Matrix4d::Zero();
};

struct FlowValue {
  double p = 0.0;
  double q = 0.0;
};

FlowValue directed_flow(double g, double b, double vi, double vj, double ti, double tj);

FlowDerivatives directed_flow_derivatives(double g, double b, double vi, double vj, double ti, double tj,
                                          bool with_hessian);

}  // namespace opfc
