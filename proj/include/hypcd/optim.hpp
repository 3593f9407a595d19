#pragma once

#include "hypcd/manifold.hpp"

#include <Eigen/Dense>

#include <string>

namespace hypcd::optim {

using Matrix = Eigen::MatrixXd;

/// Cosine-annealed learning-rate schedule for flat-space parameters.
struct SgdState {
  double base_lr = 0.1;
  double min_lr = 0.001;
  int total_epochs = 200;
  double momentum = 0.9;
};

/// min_lr + 0.5 (base_lr - min_lr)(1 + cos(pi e / T)). Throws
/// std::out_of_range for epochs outside [0, T].
double cosine_lr(int epoch, const SgdState& state);

/// Heavy-ball SGD: buf = momentum * buf + grad; param -= lr * buf.
/// `buf` is zero-initialised on first use. Throws DivergenceError on a
/// non-finite gradient or updated value; `name` is used in the diagnostic.
void sgd_step(Matrix& param, const Matrix& grad, Matrix& buf, double lr, double momentum,
              const std::string& name = "param");

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers and step counter for one parameter.
struct AdamMoments {
  Matrix m;
  Matrix v;
  long step = 0;
};

/// Plain Adam for flat parameters (no metric rescaling).
void adam_step(Matrix& param, const Matrix& grad, AdamMoments& moments, const AdamConfig& cfg,
               const std::string& name = "param");

/// State of Riemannian Adam for a single ball-valued parameter.
struct RAdamState {
  AdamConfig adam;
  Vector m;
  Vector v;
  long step = 0;
};

/// Euclidean gradient -> Riemannian gradient on the ball: g / lambda_c(x)^2.
Vector riemannian_grad(const PoincarePoint& x, const Vector& euclid_grad, const BallConfig& cfg);

/// Exponential map at an arbitrary point x:
/// x (+)_c (tanh(sqrt(c) lambda_x |u| / 2) u / (sqrt(c) |u|)).
Vector exp_map_at(const PoincarePoint& x, const Vector& u, const BallConfig& cfg);

/// Moves the moment buffers from the old point to the new one. Identity in
/// tangent coordinates; exact parallel transport would replace this.
void transport_moments(RAdamState& state, const PoincarePoint& from, const PoincarePoint& to,
                       const BallConfig& cfg);

/// One Riemannian Adam step; result lies in the safe band.
PoincarePoint riemannian_adam_step(const PoincarePoint& param, const Vector& euclid_grad, RAdamState& state,
                                   const BallConfig& cfg);

}  // namespace hypcd::optim
