#include "opfc/flow.hpp"

#include <cmath>

namespace opfc {

FlowValue directed_flow(double g, double b, double vi, double vj, double ti, double tj) {
  const double s = std::sin(ti - tj);
  const double c = std::cos(ti - tj);
  return {g * vi * vi - vi * vj * (b * s + g * c), -b * vi * vi - vi * vj * (g * s - b * c)};
}

FlowDerivatives directed_flow_derivatives(double g, double b, double vi, double vj, double ti, double tj,
                                          bool with_hessian) {
  const double s = std::sin(ti - tj);
  const double c = std::cos(ti - tj);
  // a, e and their angle derivatives; a'' = -a, e'' = -e.
  const double a = b * s + g * c;
  const double da = b * c - g * s;
  const double e = g * s - b * c;
  const double de = g * c + b * s;
  const double vv = vi * vj;

  FlowDerivatives out;
  out.p = g * vi * vi - vv * a;
  out.q = -b * vi * vi - vv * e;
  out.dp << 2.0 * g * vi - vj * a, -vi * a, -vv * da, vv * da;
  out.dq << -2.0 * b * vi - vj * e, -vi * e, -vv * de, vv * de;
  if (!with_hessian) return out;

  // Order: 0 = v_i, 1 = v_j, 2 = t_i, 3 = t_j.
  auto& hp = out.hp;
  hp(0, 0) = 2.0 * g;
  hp(0, 1) = -a;
  hp(0, 2) = -vj * da;
  hp(0, 3) = vj * da;
  hp(1, 1) = 0.0;
  hp(1, 2) = -vi * da;
  hp(1, 3) = vi * da;
  hp(2, 2) = vv * a;
  hp(2, 3) = -vv * a;
  hp(3, 3) = vv * a;

  auto& hq = out.hq;
  hq(0, 0) = -2.0 * b;
  hq(0, 1) = -e;
  hq(0, 2) = -vj * de;
  hq(0, 3) = vj * de;
  hq(1, 1) = 0.0;
  hq(1, 2) = -vi * de;
  hq(1, 3) = vi * de;
  hq(2, 2) = vv * e;
  hq(2, 3) = -vv * e;
  hq(3, 3) = vv * e;

  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < r; ++k) {
      hp(r, k) = hp(k, r);
      hq(r, k) = hq(k, r);
    }
  return out;
}

}  // namespace opfc
