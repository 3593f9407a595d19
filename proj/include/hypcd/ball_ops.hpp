#pragma once

// Differentiable, row-batched counterparts of the manifold primitives. Each
// row of the input is one point (or tangent vector).

#include "hypcd/autodiff.hpp"
#include "hypcd/manifold.hpp"

namespace hypcd::manifold {

using ad::Var;

/// Row-wise feature clipping to norm <= r.
Var clip_rows(const Var& z, const BallConfig& cfg);

/// Row-wise exponential map at the origin, followed by the safe projection.
Var exp_map_origin_rows(const Var& z, const BallConfig& cfg);

/// Row-wise lift: clip then exponential map.
Var lift_rows(const Var& z, const BallConfig& cfg);

/// Row-wise safe projection onto norm <= (1 - 1e-3) / sqrt(c).
Var ball_proj_rows(const Var& v, const BallConfig& cfg);

/// Row-wise Mobius addition x_i (+)_c y_i. `y` may be a single row that is
/// broadcast against every row of `x`. No projection is applied.
Var mobius_add_rows(const Var& x, const Var& y, const BallConfig& cfg);

/// n x m matrix of hyperbolic distances between rows of a and rows of b,
/// computed from Gram-matrix terms.
Var pairwise_distance(const Var& a, const Var& b, const BallConfig& cfg);

}  // namespace hypcd::manifold
