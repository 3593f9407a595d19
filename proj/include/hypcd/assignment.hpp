#pragma once

// Label assignment and evaluation: constrained k-means, the Hungarian
// solver, clustering accuracy and parametric prediction.

#include "hypcd/classifier.hpp"
#include "hypcd/manifold.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <set>
#include <vector>

namespace hypcd::assignment {

using Matrix = Eigen::MatrixXd;

struct ClusterResult {
  std::vector<int> assignments;
  Matrix centroids;  // K x d
  int iterations_run = 0;
};

struct AccReport {
  double acc_all = 0.0;
  double acc_old = 0.0;
  double acc_new = 0.0;
  std::vector<int> permutation;  // predicted cluster -> matched class
  long n_old = 0;
  long n_new = 0;
  long correct_old = 0;
  long correct_new = 0;
};

struct KMeansOptions {
  int k = 2;
  int max_iters = 100;
  std::uint64_t seed = 0;
  /// Independent seedings; the run with the lowest inertia is kept.
  int restarts = 10;
};

/// Semi-supervised k-means on rows of `features`. Labelled rows are pinned
/// to the cluster whose index equals their class id; clusters of classes
/// with no labelled rows start from greedy k-means++ over unlabelled rows.
/// Throws std::invalid_argument on an empty dataset, mismatched lengths,
/// or a labelled class id outside [0, K).
ClusterResult semi_sup_kmeans(const Matrix& features, const std::vector<bool>& labelled,
                              const std::vector<int>& labels, const KMeansOptions& opt);

/// As semi_sup_kmeans, but in each round the unlabelled rows nearest to an
/// unseen-class cluster are shared out so that every unseen cluster takes
/// an equal quota, ties ordered by a seeded random priority.
ClusterResult balanced_semi_sup_kmeans(const Matrix& features, const std::vector<bool>& labelled,
                                       const std::vector<int>& labels, const KMeansOptions& opt);

/// Minimum-cost assignment for a square cost matrix; result[row] = column.
/// Throws std::invalid_argument on non-square or non-finite input.
std::vector<int> hungarian_solve(const Matrix& cost);

/// Hungarian-matched accuracy over predictions in [0, K). The matching is
/// computed once on all samples, then reused for the Old/New breakdown.
/// Throws std::out_of_range on a label outside [0, K).
AccReport hungarian_acc(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k,
                        const std::set<int>& old_classes);

/// Argmax of the hyperbolic head over lifted rows. Ties go to the lowest index.
std::vector<int> parametric_predict(const Matrix& features, const classifier::HypClassifierParams& head,
                                    const BallConfig& cfg);

/// Argmax of prototype scores over l2-normalised rows.
std::vector<int> parametric_predict(const Matrix& features, const classifier::EuclidPrototypes& protos);

}  // namespace hypcd::assignment
