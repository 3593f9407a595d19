#include "hypcd/ball_ops.hpp"

namespace hypcd::manifold {

using namespace hypcd::ad;

namespace {
constexpr double kTinyNorm = 1e-15;
}

Var clip_rows(const Var& z, const BallConfig& cfg) {
  note_call();
  const double r = cfg.clip_radius();
  Var factor = div(z.tape().constant(Matrix::Constant(1, 1, r)), maximum(rowwise_norm(z), r));
  return mul(z, factor);
}

Var exp_map_origin_rows(const Var& z, const BallConfig& cfg) {
  note_call();
  Var sn = scale(maximum(rowwise_norm(z), kTinyNorm), cfg.sqrt_c());
  return ball_proj_rows(mul(z, div(tanh(sn), sn)), cfg);
}

Var lift_rows(const Var& z, const BallConfig& cfg) { return exp_map_origin_rows(clip_rows(z, cfg), cfg); }

Var ball_proj_rows(const Var& v, const BallConfig& cfg) {
  note_call();
  const double m = cfg.max_norm();
  Var factor = div(v.tape().constant(Matrix::Constant(1, 1, m)), maximum(rowwise_norm(v), m));
  return mul(v, factor);
}

Var mobius_add_rows(const Var& x, const Var& y, const BallConfig& cfg) {
  note_call();
  const double c = cfg.curvature();
  Var xy = sum_rows(mul(x, y));
  Var xx = sum_rows(mul(x, x));
  Var yy = sum_rows(mul(y, y));
  Var two_cxy = scale(xy, 2.0 * c);
  Var coef_x = add_scalar(add(two_cxy, scale(yy, c)), 1.0);
  Var coef_y = add_scalar(scale(xx, -c), 1.0);
  Var den = add_scalar(add(two_cxy, scale(mul(xx, yy), c * c)), 1.0);
  return div(add(mul(coef_x, x), mul(coef_y, y)), den);
}

Var pairwise_distance(const Var& a, const Var& b, const BallConfig& cfg) {
  note_call();
  // For x = -a_i, y = b_j with G = <a_i, b_j>:
  //   |x (+) y|^2 = (A^2 |x|^2 - 2 A B G + B^2 |y|^2) / D^2
  //   A = 1 - 2cG + c|y|^2,  B = 1 - c|x|^2,  D = 1 - 2cG + c^2 |x|^2 |y|^2
  const double c = cfg.curvature();
  Var g = matmul(a, transpose(b));
  Var xx = sum_rows(mul(a, a));             // n x 1
  Var yy = transpose(sum_rows(mul(b, b)));  // 1 x m
  Var m2cg = scale(g, -2.0 * c);
  Var coef_a = add_scalar(add(m2cg, scale(yy, c)), 1.0);
  Var coef_b = add_scalar(scale(xx, -c), 1.0);
  Var den = add_scalar(add(m2cg, scale(mul(xx, yy), c * c)), 1.0);
  Var num = add(sub(mul(mul(coef_a, coef_a), xx), scale(mul(mul(coef_a, coef_b), g), 2.0)),
                mul(mul(coef_b, coef_b), yy));
  Var gyro_norm = div(ad::sqrt(num), den);
  return scale(arctanh(scale(gyro_norm, cfg.sqrt_c())), 2.0 / cfg.sqrt_c());
}

}  // namespace hypcd::manifold
