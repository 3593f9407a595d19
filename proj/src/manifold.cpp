#include "hypcd/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hypcd {

namespace {

constexpr double kMembershipSlack = 1e-12;
constexpr double kArctanhLimit = 1.0 - 1e-15;

thread_local std::uint64_t g_calls = 0;

void require_in_ball(const Vector& x, const BallConfig& cfg, const char* what) {
  if (!manifold::in_ball(x, cfg)) throw std::domain_error(std::string(what) + ": point outside the Poincare ball");
}

}  // namespace

BallConfig::BallConfig(double curvature, double clip_radius) : c_(curvature), r_(clip_radius) {
  if (!(std::isfinite(curvature) && curvature > 0.0))
    throw std::invalid_argument("curvature must be finite and positive");
  if (!(std::isfinite(clip_radius) && clip_radius > 0.0))
    throw std::invalid_argument("clip radius must be finite and positive");
  sqrt_c_ = std::sqrt(c_);
  max_norm_ = (1.0 - 1e-3) / sqrt_c_;
}

TangentVector::TangentVector(Vector coords) : coords_(std::move(coords)) {
  if (!coords_.allFinite()) throw std::domain_error("tangent vector has non-finite entries");
}

PoincarePoint::PoincarePoint(Vector coords, const BallConfig& cfg) : coords_(std::move(coords)) {
  require_in_ball(coords_, cfg, "PoincarePoint");
}

PoincarePoint PoincarePoint::origin(Eigen::Index dim) { return PoincarePoint(Vector::Zero(dim), Unchecked{}); }

PoincarePoint ball_proj(const Vector& v, const BallConfig& cfg) {
  manifold::note_call();
  if (!v.allFinite()) throw std::domain_error("ball_proj: non-finite input");
  const double n = v.norm();
  if (n > cfg.max_norm()) return PoincarePoint(v * (cfg.max_norm() / n), PoincarePoint::Unchecked{});
  return PoincarePoint(v, PoincarePoint::Unchecked{});
}

namespace manifold {

std::uint64_t call_count() { return g_calls; }
void note_call() { ++g_calls; }

bool in_ball(const Vector& x, const BallConfig& cfg) {
  return x.allFinite() && cfg.curvature() * x.squaredNorm() <= 1.0 - kMembershipSlack;
}

double conformal_factor(const PoincarePoint& a, const BallConfig& cfg) {
  note_call();
  require_in_ball(a.coords(), cfg, "conformal_factor");
  return 2.0 / (1.0 - cfg.curvature() * a.coords().squaredNorm());
}

Vector mobius_add_raw(const Vector& a, const Vector& b, double c) {
  const double ab = a.dot(b);
  const double aa = a.squaredNorm();
  const double bb = b.squaredNorm();
  const double num_a = 1.0 + 2.0 * c * ab + c * bb;
  const double num_b = 1.0 - c * aa;
  const double den = 1.0 + 2.0 * c * ab + c * c * aa * bb;
  return (num_a * a + num_b * b) / den;
}

PoincarePoint mobius_add(const PoincarePoint& a, const PoincarePoint& b, const BallConfig& cfg) {
  note_call();
  if (a.dim() != b.dim()) throw std::invalid_argument("mobius_add: dimension mismatch");
  require_in_ball(a.coords(), cfg, "mobius_add");
  require_in_ball(b.coords(), cfg, "mobius_add");
  return ball_proj(mobius_add_raw(a.coords(), b.coords(), cfg.curvature()), cfg);
}

double hyperbolic_distance(const PoincarePoint& a, const PoincarePoint& b, const BallConfig& cfg) {
  note_call();
  if (a.dim() != b.dim()) throw std::invalid_argument("hyperbolic_distance: dimension mismatch");
  require_in_ball(a.coords(), cfg, "hyperbolic_distance");
  require_in_ball(b.coords(), cfg, "hyperbolic_distance");
  const double gyro = mobius_add_raw(-a.coords(), b.coords(), cfg.curvature()).norm();
  const double u = std::min(cfg.sqrt_c() * gyro, kArctanhLimit);
  return 2.0 / cfg.sqrt_c() * std::atanh(u);
}

TangentVector clip_features(const TangentVector& z, const BallConfig& cfg) {
  note_call();
  const double n = z.coords().norm();
  if (n <= cfg.clip_radius()) return z;
  return TangentVector(z.coords() * (cfg.clip_radius() / n));
}

PoincarePoint exp_map_origin(const TangentVector& z, const BallConfig& cfg) {
  note_call();
  const double n = z.coords().norm();
  if (n == 0.0) return PoincarePoint::origin(z.dim());
  const double sn = cfg.sqrt_c() * n;
  return ball_proj(z.coords() * (std::tanh(sn) / sn), cfg);
}

PoincarePoint lift(const TangentVector& z, const BallConfig& cfg) {
  return exp_map_origin(clip_features(z, cfg), cfg);
}

}  // namespace manifold
}  // namespace hypcd
