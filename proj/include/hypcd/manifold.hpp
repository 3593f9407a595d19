#pragma once

// Poincare-ball primitives in 64-bit precision.
//
// The ball of curvature parameter c is {x : c |x|^2 < 1}. Every function that
// returns a PoincarePoint guarantees |x| <= (1 - 1e-3) / sqrt(c), the safe
// band enforced by ball_proj.

#include <Eigen/Dense>

#include <cstdint>

namespace hypcd {

using Vector = Eigen::VectorXd;

/// Curvature parameter c and feature clip radius r of one Poincare ball.
class BallConfig {
 public:
  /// Throws std::invalid_argument unless both values are finite and positive.
  BallConfig(double curvature, double clip_radius);

  double curvature() const { return c_; }
  double clip_radius() const { return r_; }
  double sqrt_c() const { return sqrt_c_; }
  /// Radius of the safe band, (1 - 1e-3) / sqrt(c).
  double max_norm() const { return max_norm_; }

 private:
  double c_;
  double r_;
  double sqrt_c_;
  double max_norm_;
};

/// Euclidean vector living in the tangent space at the origin.
class TangentVector {
 public:
  /// Throws std::domain_error on non-finite entries.
  explicit TangentVector(Vector coords);

  const Vector& coords() const { return coords_; }
  Eigen::Index dim() const { return coords_.size(); }

 private:
  Vector coords_;
};

/// Point strictly inside the ball.
class PoincarePoint {
 public:
  /// Validates c |x|^2 <= 1 - 1e-12; throws std::domain_error otherwise.
  PoincarePoint(Vector coords, const BallConfig& cfg);

  /// The origin of an n-dimensional ball.
  static PoincarePoint origin(Eigen::Index dim);

  const Vector& coords() const { return coords_; }
  Eigen::Index dim() const { return coords_.size(); }

 private:
  struct Unchecked {};
  PoincarePoint(Vector coords, Unchecked) : coords_(std::move(coords)) {}
  friend PoincarePoint ball_proj(const Vector& v, const BallConfig& cfg);

  Vector coords_;
};

namespace manifold {

/// True when c |x|^2 <= 1 - 1e-12.
bool in_ball(const Vector& x, const BallConfig& cfg);

/// lambda_c(a) = 2 / (1 - c |a|^2).
double conformal_factor(const PoincarePoint& a, const BallConfig& cfg);

/// Gyrovector addition a (+)_c b, followed by the safe projection.
PoincarePoint mobius_add(const PoincarePoint& a, const PoincarePoint& b, const BallConfig& cfg);

/// Unprojected Mobius addition on raw coordinates; no membership checks.
Vector mobius_add_raw(const Vector& a, const Vector& b, double c);

/// (2 / sqrt(c)) artanh(sqrt(c) |-a (+)_c b|).
double hyperbolic_distance(const PoincarePoint& a, const PoincarePoint& b, const BallConfig& cfg);

/// min(1, r / |z|) z; the zero vector maps to itself.
TangentVector clip_features(const TangentVector& z, const BallConfig& cfg);

/// Exponential map at the origin: tanh(sqrt(c)|z|) z / (sqrt(c)|z|).
PoincarePoint exp_map_origin(const TangentVector& z, const BallConfig& cfg);

/// exp_map_origin(clip_features(z)).
PoincarePoint lift(const TangentVector& z, const BallConfig& cfg);

/// Counts manifold entry points executed on the calling thread. Used to
/// verify that Euclidean runs never touch ball geometry.
std::uint64_t call_count();
void note_call();

}  // namespace manifold

/// Rescale v onto the safe band radius when it lies outside; identity otherwise.
/// Throws std::domain_error on non-finite input.
PoincarePoint ball_proj(const Vector& v, const BallConfig& cfg);

}  // namespace hypcd
