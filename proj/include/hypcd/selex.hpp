#pragma once

// Self-expertise objectives: a pseudo-label hierarchy built by repeated
// clustering, a pairwise target matrix derived from it, an unsupervised
// pairwise BCE term and a level-weighted supervised contrastive term.

#include "hypcd/assignment.hpp"
#include "hypcd/autodiff.hpp"
#include "hypcd/manifold.hpp"
#include "hypcd/replearn.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace hypcd::selex {

using ad::Index;
using ad::Matrix;
using ad::Var;

/// levels[k][row] is the level-k pseudo-label of dataset row `row`.
/// Level 0 has K clusters, level k has ceil(K / 2^k).
struct Hierarchy {
  std::vector<std::vector<int>> levels;
  std::vector<int> cluster_counts;

  int depth() const { return static_cast<int>(levels.size()) - 1; }  // floor(log2 K)
};

struct TargetMatrix {
  Matrix t;
  Matrix t_hat;
  double alpha = 1.0;
};

struct SelexConfig {
  double alpha = 1.0;           // label smoothing weight in t_hat
  double lambda_b = 0.35;       // SSE weight
  double tau_pair = 0.1;        // pairwise logit scale is 1 / tau_pair
  double pair_bias = 0.0;       // added after scaling
  double tau_sup = 0.07;
  bool agreement_targets = false;  // use 1(y_i == y_j) instead of 1(y_i != y_j)
  double alpha_d_max = 1.0;
  int total_epochs = 200;
};

/// floor(log2 K) for K >= 1.
int hierarchy_depth(int k);

/// Balanced semi-supervised k-means with K clusters at level 0, then each
/// level re-clusters the previous level's centroids into half as many.
/// Throws std::invalid_argument for K < 2.
Hierarchy build_hierarchy(const Matrix& features, const std::vector<bool>& labelled, const std::vector<int>& labels,
                          int k, std::uint64_t seed, int max_iters = 100);

/// t_ij = sum_{k=1..L} 1(y_i^k != y_j^k) / 2^k, t_hat = alpha t + (1 - alpha) I.
/// Throws std::out_of_range for an id outside the hierarchy.
TargetMatrix target_matrix(const Hierarchy& h, std::span<const Index> ids, double alpha, bool agreement = false);

/// Pairwise BCE between sigmoid(sim / tau_pair + bias) and t_hat over both
/// views stacked (2B x 2B, self pairs excluded). With a ball the views are
/// lifted and the distance/angle terms are mixed by alpha_d; without one
/// the rows are l2-normalised and only the angle term is used.
Var use_loss(const Var& view1, const Var& view2, const TargetMatrix& targets, double alpha_d, const SelexConfig& cfg,
             const BallConfig* ball);

/// 1/2 sum_{k=0..L} 2^-k [supervised contrastive loss with level-k labels on
/// the first d / 2^k coordinates], each term averaged over both views.
/// Throws std::invalid_argument when d is not divisible by 2^L.
Var sse_loss(const Var& view1, const Var& view2, const Hierarchy& h, std::span<const Index> ids, double alpha_d,
             const SelexConfig& cfg, const BallConfig* ball);

/// (1 - lambda_b) USE + lambda_b SSE with alpha_d from the linear ramp.
Var selex_total(const Var& view1, const Var& view2, const Hierarchy& h, std::span<const Index> ids, int epoch,
                const SelexConfig& cfg, const BallConfig* ball);

}  // namespace hypcd::selex
