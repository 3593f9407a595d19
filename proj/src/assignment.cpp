#include "hypcd/assignment.hpp"

#include "hypcd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

namespace hypcd::assignment {

using Eigen::Index;

namespace {

struct Problem {
  const Matrix& x;
  const std::vector<bool>& labelled;
  const std::vector<int>& labels;
  int k;
  std::vector<bool> seen;  // per cluster: has labelled rows
  std::vector<Index> unlabelled;
};

Problem validate(const Matrix& x, const std::vector<bool>& labelled, const std::vector<int>& labels, int k) {
  if (x.rows() == 0) throw std::invalid_argument("k-means: empty dataset");
  if (static_cast<Index>(labelled.size()) != x.rows() || static_cast<Index>(labels.size()) != x.rows())
    throw std::invalid_argument("k-means: mask/labels length mismatch");
  if (k < 1) throw std::invalid_argument("k-means: K must be at least 1");
  Problem p{x, labelled, labels, k, std::vector<bool>(static_cast<std::size_t>(k), false), {}};
  for (Index i = 0; i < x.rows(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (!labelled[ui]) {
      p.unlabelled.push_back(i);
      continue;
    }
    if (labels[ui] < 0 || labels[ui] >= k)
      throw std::invalid_argument("k-means: labelled class " + std::to_string(labels[ui]) + " outside [0, " +
                                  std::to_string(k) + "); K is smaller than the labelled class set");
    p.seen[static_cast<std::size_t>(labels[ui])] = true;
  }
  return p;
}

double sq_dist(const Matrix& x, Index i, const Matrix& c, Index j) { return (x.row(i) - c.row(j)).squaredNorm(); }

Matrix init_centroids(const Problem& p, Rng& rng) {
  const Index d = p.x.cols();
  Matrix c = Matrix::Zero(p.k, d);
  std::vector<Index> counts(static_cast<std::size_t>(p.k), 0);
  for (Index i = 0; i < p.x.rows(); ++i) {
    if (!p.labelled[static_cast<std::size_t>(i)]) continue;
    const int y = p.labels[static_cast<std::size_t>(i)];
    c.row(y) += p.x.row(i);
    ++counts[static_cast<std::size_t>(y)];
  }
  std::vector<Index> placed;
  for (int j = 0; j < p.k; ++j)
    if (p.seen[static_cast<std::size_t>(j)]) {
      c.row(j) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
      placed.push_back(j);
    }
  if (p.unlabelled.empty()) return c;

  // Greedy k-means++ over unlabelled rows: draw 2 + ln(K) candidates by
  // squared distance and keep the one that lowers the potential most.
  std::vector<double> d2(p.unlabelled.size(), std::numeric_limits<double>::infinity());
  auto with_candidate = [&](std::size_t cand, std::vector<double>& out) {
    double pot = 0.0;
    for (std::size_t u = 0; u < p.unlabelled.size(); ++u) {
      out[u] = std::min(d2[u], (p.x.row(p.unlabelled[u]) - p.x.row(p.unlabelled[cand])).squaredNorm());
      pot += out[u];
    }
    return pot;
  };
  for (Index j : placed)
    for (std::size_t u = 0; u < p.unlabelled.size(); ++u) d2[u] = std::min(d2[u], sq_dist(p.x, p.unlabelled[u], c, j));
  const int trials = 2 + static_cast<int>(std::log(static_cast<double>(p.k)));
  std::vector<double> trial_d2(d2.size()), best_d2(d2.size());
  for (int j = 0; j < p.k; ++j) {
    if (p.seen[static_cast<std::size_t>(j)]) continue;
    const double total = placed.empty() ? 0.0 : std::accumulate(d2.begin(), d2.end(), 0.0);
    const bool weighted = total > 0.0 && std::isfinite(total);
    double best_pot = std::numeric_limits<double>::infinity();
    std::size_t pick = 0;
    for (int t = 0; t < (weighted ? trials : 1); ++t) {
      std::size_t cand = d2.size() - 1;
      if (weighted) {
        double target = rng.uniform() * total;
        for (std::size_t u = 0; u < d2.size(); ++u) {
          target -= d2[u];
          if (target < 0.0) {
            cand = u;
            break;
          }
        }
      } else {
        cand = static_cast<std::size_t>(rng.below(d2.size()));
      }
      const double pot = with_candidate(cand, trial_d2);
      if (pot < best_pot) {
        best_pot = pot;
        pick = cand;
        best_d2.swap(trial_d2);
      }
    }
    c.row(j) = p.x.row(p.unlabelled[pick]);
    placed.push_back(j);
    d2.swap(best_d2);
    best_d2.resize(d2.size());
  }
  return c;
}

// Nearest centroid with lowest-index tie-break.
int nearest(const Matrix& x, Index i, const Matrix& c, const std::vector<bool>* allowed = nullptr) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < c.rows(); ++j) {
    if (allowed && !(*allowed)[static_cast<std::size_t>(j)]) continue;
    const double d = sq_dist(x, i, c, j);
    if (best < 0 || d < best_d) {
      best = static_cast<int>(j);
      best_d = d;
    }
  }
  return best;
}

void balance_unseen(const Problem& p, const Matrix& c, std::vector<int>& assign, Rng& rng) {
  std::vector<int> unseen;
  for (int j = 0; j < p.k; ++j)
    if (!p.seen[static_cast<std::size_t>(j)]) unseen.push_back(j);
  if (unseen.size() < 2) return;
  std::vector<Index> pool;
  for (Index i : p.unlabelled)
    if (!p.seen[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])]) pool.push_back(i);
  if (pool.empty()) return;
  const std::size_t quota = (pool.size() + unseen.size() - 1) / unseen.size();

  std::vector<std::uint64_t> priority(pool.size());
  for (auto& v : priority) v = rng();
  // (distance, random priority, pool slot, cluster)
  std::vector<std::tuple<double, std::uint64_t, std::size_t, int>> pairs;
  pairs.reserve(pool.size() * unseen.size());
  for (std::size_t u = 0; u < pool.size(); ++u)
    for (int j : unseen) pairs.emplace_back(sq_dist(p.x, pool[u], c, j), priority[u], u, j);
  std::sort(pairs.begin(), pairs.end());

  std::vector<bool> done(pool.size(), false);
  std::vector<std::size_t> fill(static_cast<std::size_t>(p.k), 0);
  for (const auto& [d, prio, u, j] : pairs) {
    if (done[u] || fill[static_cast<std::size_t>(j)] >= quota) continue;
    assign[static_cast<std::size_t>(pool[u])] = j;
    done[u] = true;
    ++fill[static_cast<std::size_t>(j)];
  }
}

// Moves the farthest donor row into each empty cluster. Only unlabelled rows
// from clusters with more than one member may donate.
void repair_empty(const Problem& p, const Matrix& c, std::vector<int>& assign) {
  std::vector<Index> size(static_cast<std::size_t>(p.k), 0);
  for (int a : assign) ++size[static_cast<std::size_t>(a)];
  for (int j = 0; j < p.k; ++j) {
    if (size[static_cast<std::size_t>(j)] > 0) continue;
    Index donor = -1;
    double far = -1.0;
    for (Index i : p.unlabelled) {
      const int a = assign[static_cast<std::size_t>(i)];
      if (size[static_cast<std::size_t>(a)] < 2) continue;
      const double d = sq_dist(p.x, i, c, a);
      if (d > far) {
        far = d;
        donor = i;
      }
    }
    if (donor < 0) continue;
    --size[static_cast<std::size_t>(assign[static_cast<std::size_t>(donor)])];
    assign[static_cast<std::size_t>(donor)] = j;
    ++size[static_cast<std::size_t>(j)];
  }
}

Matrix recompute(const Problem& p, const Matrix& old, const std::vector<int>& assign) {
  Matrix c = Matrix::Zero(p.k, p.x.cols());
  std::vector<Index> n(static_cast<std::size_t>(p.k), 0);
  for (Index i = 0; i < p.x.rows(); ++i) {
    const int a = assign[static_cast<std::size_t>(i)];
    c.row(a) += p.x.row(i);
    ++n[static_cast<std::size_t>(a)];
  }
  for (int j = 0; j < p.k; ++j) {
    if (n[static_cast<std::size_t>(j)] > 0)
      c.row(j) /= static_cast<double>(n[static_cast<std::size_t>(j)]);
    else
      c.row(j) = old.row(j);
  }
  return c;
}

ClusterResult run_once(const Problem& p, const KMeansOptions& opt, bool balanced, Rng& rng) {
  const Matrix& x = p.x;
  ClusterResult res;
  res.centroids = init_centroids(p, rng);
  std::vector<int> prev;
  for (int it = 1; it <= opt.max_iters; ++it) {
    std::vector<int> assign(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) {
      const auto ui = static_cast<std::size_t>(i);
      assign[ui] = p.labelled[ui] ? p.labels[ui] : nearest(x, i, res.centroids);
    }
    if (balanced) balance_unseen(p, res.centroids, assign, rng);
    repair_empty(p, res.centroids, assign);
    res.centroids = recompute(p, res.centroids, assign);
    res.iterations_run = it;
    const bool stable = assign == prev;
    prev = std::move(assign);
    if (stable || p.unlabelled.empty()) break;
  }
  res.assignments = std::move(prev);
  return res;
}

double inertia(const Matrix& x, const ClusterResult& r) {
  double s = 0.0;
  for (Index i = 0; i < x.rows(); ++i) s += sq_dist(x, i, r.centroids, r.assignments[static_cast<std::size_t>(i)]);
  return s;
}

ClusterResult run(const Matrix& x, const std::vector<bool>& labelled, const std::vector<int>& labels,
                  const KMeansOptions& opt, bool balanced) {
  const Problem p = validate(x, labelled, labels, opt.k);
  if (opt.max_iters < 1) throw std::invalid_argument("k-means: max_iters must be at least 1");
  if (opt.restarts < 1) throw std::invalid_argument("k-means: restarts must be at least 1");
  Rng rng = Rng(opt.seed).split("kmeans");
  // Seeding only varies when some cluster has no labelled rows.
  const bool all_seen = std::all_of(p.seen.begin(), p.seen.end(), [](bool b) { return b; });
  const int tries = all_seen || p.unlabelled.empty() ? 1 : opt.restarts;
  ClusterResult best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < tries; ++r) {
    ClusterResult cur = run_once(p, opt, balanced, rng);
    const double e = inertia(x, cur);
    if (e < best_inertia) {
      best_inertia = e;
      best = std::move(cur);
    }
  }
  return best;
}

}  // namespace

ClusterResult semi_sup_kmeans(const Matrix& features, const std::vector<bool>& labelled,
                              const std::vector<int>& labels, const KMeansOptions& opt) {
  return run(features, labelled, labels, opt, false);
}

ClusterResult balanced_semi_sup_kmeans(const Matrix& features, const std::vector<bool>& labelled,
                                       const std::vector<int>& labels, const KMeansOptions& opt) {
  return run(features, labelled, labels, opt, true);
}

std::vector<int> hungarian_solve(const Matrix& cost) {
  const Index n = cost.rows();
  if (cost.cols() != n) throw std::invalid_argument("hungarian_solve: cost matrix must be square");
  if (!cost.allFinite()) throw std::invalid_argument("hungarian_solve: non-finite cost entry");
  if (n == 0) return {};
  // Shortest augmenting path with row/column potentials, 1-based internally.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Index> match(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const Index i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        if (used[uj]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[uj];
        if (cur < minv[uj]) {
          minv[uj] = cur;
          way[uj] = j0;
        }
        if (minv[uj] < delta) {
          delta = minv[uj];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        if (used[uj]) {
          u[static_cast<std::size_t>(match[uj])] += delta;
          v[uj] -= delta;
        } else {
          minv[uj] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n));
  for (Index j = 1; j <= n; ++j)
    row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = static_cast<int>(j - 1);
  return row_to_col;
}

AccReport hungarian_acc(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k,
                        const std::set<int>& old_classes) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("hungarian_acc: length mismatch");
  if (k < 1) throw std::invalid_argument("hungarian_acc: K must be positive");
  Matrix w = Matrix::Zero(k, k);  // w(pred, true)
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= k || y_pred[i] < 0 || y_pred[i] >= k)
      throw std::out_of_range("hungarian_acc: label outside [0, " + std::to_string(k) + ") at position " +
                              std::to_string(i));
    w(y_pred[i], y_true[i]) += 1.0;
  }
  AccReport r;
  r.permutation = hungarian_solve(Matrix::Constant(k, k, w.maxCoeff()) - w);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool hit = r.permutation[static_cast<std::size_t>(y_pred[i])] == y_true[i];
    if (old_classes.count(y_true[i])) {
      ++r.n_old;
      r.correct_old += hit;
    } else {
      ++r.n_new;
      r.correct_new += hit;
    }
  }
  const auto ratio = [](long a, long b) { return b > 0 ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  r.acc_old = ratio(r.correct_old, r.n_old);
  r.acc_new = ratio(r.correct_new, r.n_new);
  const long n = r.n_old + r.n_new;
  // Written as the weighted composition so the identity holds bit-for-bit.
  if (n > 0)
    r.acc_all = (static_cast<double>(r.n_old) * r.acc_old + static_cast<double>(r.n_new) * r.acc_new) /
                static_cast<double>(n);
  return r;
}

namespace {

int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (Index j = 1; j < v.size(); ++j)
    if (v(j) > v(best)) best = static_cast<int>(j);
  return best;
}

}  // namespace

std::vector<int> parametric_predict(const Matrix& features, const classifier::HypClassifierParams& head,
                                    const BallConfig& cfg) {
  if (features.cols() != head.weight.rows()) throw std::invalid_argument("parametric_predict: feature width mismatch");
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Index i = 0; i < features.rows(); ++i) {
    const PoincarePoint z = manifold::lift(TangentVector(features.row(i).transpose()), cfg);
    out[static_cast<std::size_t>(i)] = argmax_lowest(classifier::hyp_linear(z, head, cfg).coords());
  }
  return out;
}

std::vector<int> parametric_predict(const Matrix& features, const classifier::EuclidPrototypes& protos) {
  if (features.cols() != protos.protos.cols()) throw std::invalid_argument("parametric_predict: feature width mismatch");
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Index i = 0; i < features.rows(); ++i) {
    const Eigen::VectorXd h = features.row(i).transpose();
    const double n = h.norm();
    const Eigen::VectorXd hu = n > 0.0 ? Eigen::VectorXd(h / n) : h;
    out[static_cast<std::size_t>(i)] = argmax_lowest(protos.protos * hu);
  }
  return out;
}

}  // namespace hypcd::assignment
