#pragma once

// Contrastive representation losses. Baseline mode works on l2-normalised
// projector outputs with cosine similarity; hyperbolic mode lifts projector
// outputs onto the ball and mixes distance- and angle-based terms.

#include "hypcd/autodiff.hpp"
#include "hypcd/manifold.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace hypcd::replearn {

using ad::Var;

enum class Similarity {
  angle,                // cosine of the coordinate vectors
  hyperbolic_distance,  // -D_H on the ball
  euclidean_distance,   // -|a - b|
};

/// Two augmented views of one mini-batch plus the labelled subset.
struct RepBatch {
  Var view1;
  Var view2;
  std::vector<bool> labelled;  // per row
  std::vector<int> labels;     // valid where labelled
};

struct RepLossConfig {
  double tau_unsup = 1.0;
  double tau_sup = 0.07;
  double lambda_b = 0.35;
  double alpha_d_max = 1.0;
  int total_epochs = 200;
};

/// A loss node plus a flag raised when the term had nothing to average over
/// (the value is then a zero constant).
struct LossTerm {
  Var value;
  bool empty = false;
};

/// Cosine of two nonzero points. Throws std::domain_error on a zero vector.
double similarity_angle(const PoincarePoint& a, const PoincarePoint& b);

/// -hyperbolic_distance(a, b).
double similarity_dist(const PoincarePoint& a, const PoincarePoint& b, const BallConfig& cfg);

/// n x m similarity matrix between rows of a and rows of b. `ball` is only
/// read for Similarity::hyperbolic_distance.
Var similarity_matrix(const Var& a, const Var& b, Similarity sim, const BallConfig* ball);

/// Mean over anchors i of -log(exp(s(i,i')/tau) / sum_{j != i} exp(s(i,j')/tau)),
/// with anchors from view1 and candidates from view2. Needs >= 2 rows.
Var self_sup_contrastive(const Var& view1, const Var& view2, Similarity sim, double tau,
                         const BallConfig* ball);

/// Supervised contrastive loss over the labelled rows of a single view.
/// Anchors without a same-class partner are skipped. `empty` is set when no
/// anchor remains.
LossTerm sup_contrastive(const Var& z, const std::vector<bool>& labelled, const std::vector<int>& labels,
                         Similarity sim, double tau, const BallConfig* ball);

/// True when some labelled row has a same-class labelled partner.
bool has_sup_anchor(const std::vector<bool>& labelled, const std::vector<int>& labels);

/// alpha_d * term(dist_kind) + (1 - alpha_d) * term(angle). The side with
/// zero weight is not evaluated.
Var hybrid_loss(double alpha_d, Similarity dist_kind, const std::function<Var(Similarity)>& term);

/// Linear ramp epoch * alpha_d_max / total_epochs. Throws std::out_of_range
/// outside [0, total_epochs].
double alpha_schedule(int epoch, const RepLossConfig& cfg);

/// Hybrid hyperbolic objective: lifts both views, then
/// (1 - lambda_b) [a L_dis^u + (1 - a) L_ang^u] + lambda_b [a L_dis^s + (1 - a) L_ang^s]
/// with a = alpha_d. The supervised term averages both views.
Var hyp_rep_loss(const RepBatch& batch, double alpha_d, const RepLossConfig& cfg, const BallConfig& ball);

/// Same as above with alpha_d taken from alpha_schedule(epoch).
Var hyp_rep_loss(const RepBatch& batch, int epoch, const RepLossConfig& cfg, const BallConfig& ball);

/// Baseline objective on l2-normalised views with cosine similarity.
Var euclid_rep_loss(const RepBatch& batch, const RepLossConfig& cfg);

}  // namespace hypcd::replearn
