#include "hypcd/optim.hpp"

#include "hypcd/errors.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hypcd::optim {

namespace {

void require_finite(const Matrix& g, const std::string& name) {
  if (!g.allFinite()) throw DivergenceError("non-finite gradient for '" + name + "'");
}

void require_finite_param(const Matrix& p, const std::string& name) {
  if (!p.allFinite()) throw DivergenceError("parameter '" + name + "' overflowed");
}

}  // namespace

double cosine_lr(int epoch, const SgdState& state) {
  if (state.total_epochs <= 0) throw std::invalid_argument("cosine_lr: total_epochs must be positive");
  if (epoch < 0 || epoch > state.total_epochs)
    throw std::out_of_range("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(state.total_epochs) + "]");
  const double phase = std::numbers::pi * static_cast<double>(epoch) / state.total_epochs;
  return state.min_lr + 0.5 * (state.base_lr - state.min_lr) * (1.0 + std::cos(phase));
}

void sgd_step(Matrix& param, const Matrix& grad, Matrix& buf, double lr, double momentum, const std::string& name) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols())
    throw std::invalid_argument("sgd_step: gradient shape mismatch for '" + name + "'");
  require_finite(grad, name);
  if (buf.size() == 0) buf = Matrix::Zero(param.rows(), param.cols());
  buf = momentum * buf + grad;
  param -= lr * buf;
  require_finite_param(param, name);
}

void adam_step(Matrix& param, const Matrix& grad, AdamMoments& mo, const AdamConfig& cfg, const std::string& name) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols())
    throw std::invalid_argument("adam_step: gradient shape mismatch for '" + name + "'");
  require_finite(grad, name);
  if (mo.m.size() == 0) {
    mo.m = Matrix::Zero(param.rows(), param.cols());
    mo.v = Matrix::Zero(param.rows(), param.cols());
  }
  ++mo.step;
  mo.m = cfg.beta1 * mo.m + (1.0 - cfg.beta1) * grad;
  mo.v = cfg.beta2 * mo.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(mo.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(mo.step));
  param.array() -= cfg.lr * (mo.m.array() / bc1) / ((mo.v.array() / bc2).sqrt() + cfg.eps);
  require_finite_param(param, name);
}

Vector riemannian_grad(const PoincarePoint& x, const Vector& euclid_grad, const BallConfig& cfg) {
  const double lambda = manifold::conformal_factor(x, cfg);
  return euclid_grad / (lambda * lambda);
}

Vector exp_map_at(const PoincarePoint& x, const Vector& u, const BallConfig& cfg) {
  const double n = u.norm();
  if (n == 0.0) return x.coords();
  const double lambda = manifold::conformal_factor(x, cfg);
  const double sc = cfg.sqrt_c();
  const Vector step = std::tanh(sc * lambda * n / 2.0) * u / (sc * n);
  return manifold::mobius_add_raw(x.coords(), step, cfg.curvature());
}

void transport_moments(RAdamState&, const PoincarePoint&, const PoincarePoint&, const BallConfig&) {}

PoincarePoint riemannian_adam_step(const PoincarePoint& param, const Vector& euclid_grad, RAdamState& st,
                                   const BallConfig& cfg) {
  if (euclid_grad.size() != param.dim()) throw std::invalid_argument("riemannian_adam_step: gradient dimension mismatch");
  if (!euclid_grad.allFinite()) throw DivergenceError("non-finite gradient for ball parameter");
  if (st.m.size() == 0) {
    st.m = Vector::Zero(param.dim());
    st.v = Vector::Zero(param.dim());
  }
  const Vector rgrad = riemannian_grad(param, euclid_grad, cfg);
  ++st.step;
  st.m = st.adam.beta1 * st.m + (1.0 - st.adam.beta1) * rgrad;
  st.v = st.adam.beta2 * st.v + (1.0 - st.adam.beta2) * rgrad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(st.adam.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.adam.beta2, static_cast<double>(st.step));
  const Vector direction = ((st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + st.adam.eps)).matrix();
  const Vector moved = exp_map_at(param, -st.adam.lr * direction, cfg);
  PoincarePoint next = ball_proj(moved, cfg);
  transport_moments(st, param, next, cfg);
  return next;
}

}  // namespace hypcd::optim
