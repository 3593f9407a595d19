#pragma once

// Parametric GCD heads. Baseline mode scores l2-normalised features against
// K unit prototypes; hyperbolic mode runs a HypLinear layer,
// Proj[(w (x)_c z) (+)_c s], over lifted features.

#include "hypcd/autodiff.hpp"
#include "hypcd/manifold.hpp"
#include "hypcd/replearn.hpp"

#include <vector>

namespace hypcd::classifier {

using ad::Matrix;
using ad::Var;
using replearn::LossTerm;

/// K x I matrix whose rows are unit-norm category prototypes.
struct EuclidPrototypes {
  Matrix protos;

  /// Re-normalise every row to unit length.
  void normalize();
};

/// Weight w (I x K, flat) and bias s (K, a ball point) of the hyperbolic head.
struct HypClassifierParams {
  Matrix weight;
  Vector bias;
};

struct DistillConfig {
  double tau_student = 0.1;
  double tau_teacher = 0.07;
  double entropy_weight = 1.0;  // xi
  double lambda_b = 0.35;
};

/// softmax(h . c_k / tau) over prototypes. `h` must be unit norm.
Vector proto_logits(const Vector& h, const EuclidPrototypes& protos, double tau);

/// (1/sqrt(c)) tanh(|zw| / |z| artanh(sqrt(c)|z|)) zw / |zw|, with zw = w^T z.
/// Returns 0 when z = 0 or zw = 0.
Vector mobius_matvec(const Matrix& w, const PoincarePoint& z, const BallConfig& cfg);

/// ball_proj(mobius_matvec(w, z) (+)_c s).
PoincarePoint hyp_linear(const PoincarePoint& z, const HypClassifierParams& params, const BallConfig& cfg);

/// softmax(hyp_linear(z) / tau).
Vector hyp_logits(const PoincarePoint& z, const HypClassifierParams& params, const BallConfig& cfg, double tau);

// Batched, differentiable forms. Rows are samples.

/// softmax(h C^T / tau) for row-normalised h.
Var proto_probs_rows(const Var& h_unit, const Var& protos, double tau);
Var mobius_matvec_rows(const Var& z, const Var& w, const BallConfig& cfg);
/// `s` is a 1 x K row.
Var hyp_linear_rows(const Var& z, const Var& w, const Var& s, const BallConfig& cfg);
Var hyp_probs_rows(const Var& z, const Var& w, const Var& s, const BallConfig& cfg, double tau);

/// Mean of l_ce(q'_i, p_i) and l_ce(q_i, p'_i) over the batch minus
/// xi * H(mean of p and p'). Teacher rows are constants. Throws
/// std::invalid_argument if any row is not a probability vector.
Var cls_loss_unsup(const Var& student1, const Var& student2, const Matrix& teacher1, const Matrix& teacher2,
                   double entropy_weight);

/// Mean of -log p[y] over the rows marked labelled. `empty` when none are.
LossTerm cls_loss_sup(const Var& student, const std::vector<bool>& labelled, const std::vector<int>& labels);

/// Shannon entropy of the mean row of the stacked probabilities.
Var mean_entropy(const Var& p1, const Var& p2);

/// Student/teacher predictions for both views of a batch.
struct ClsBatch {
  Var student1;
  Var student2;
  Matrix teacher1;
  Matrix teacher2;
  std::vector<bool> labelled;
  std::vector<int> labels;
};

/// (1 - lambda_b) L_u + lambda_b L_s; the supervised term uses both views.
Var total_cls_loss(const ClsBatch& batch, const DistillConfig& cfg);

}  // namespace hypcd::classifier
