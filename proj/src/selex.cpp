#include "hypcd/selex.hpp"

#include "hypcd/ball_ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hypcd::selex {

using namespace hypcd::ad;
using replearn::Similarity;

int hierarchy_depth(int k) {
  int l = 0;
  while ((2 << l) <= k) ++l;
  return l;
}

Hierarchy build_hierarchy(const Matrix& features, const std::vector<bool>& labelled, const std::vector<int>& labels,
                          int k, std::uint64_t seed, int max_iters) {
  if (k < 2) throw std::invalid_argument("build_hierarchy: K must be at least 2");
  Hierarchy h;
  assignment::KMeansOptions opt{k, max_iters, seed};
  assignment::ClusterResult base = assignment::balanced_semi_sup_kmeans(features, labelled, labels, opt);
  h.levels.push_back(base.assignments);
  h.cluster_counts.push_back(k);
  Matrix centroids = base.centroids;
  const int depth = hierarchy_depth(k);
  for (int lvl = 1; lvl <= depth; ++lvl) {
    const int count = (k + (1 << lvl) - 1) >> lvl;
    const auto n_prev = static_cast<std::size_t>(centroids.rows());
    std::vector<bool> none(n_prev, false);
    std::vector<int> dummy(n_prev, 0);
    assignment::KMeansOptions up{count, max_iters, seed + static_cast<std::uint64_t>(lvl)};
    assignment::ClusterResult coarse = assignment::semi_sup_kmeans(centroids, none, dummy, up);
    std::vector<int> labels_k(h.levels.back().size());
    for (std::size_t i = 0; i < labels_k.size(); ++i)
      labels_k[i] = coarse.assignments[static_cast<std::size_t>(h.levels.back()[i])];
    h.levels.push_back(std::move(labels_k));
    h.cluster_counts.push_back(count);
    centroids = coarse.centroids;
  }
  return h;
}

TargetMatrix target_matrix(const Hierarchy& h, std::span<const Index> ids, double alpha, bool agreement) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("target_matrix: alpha outside [0, 1]");
  const auto b = static_cast<Index>(ids.size());
  const std::size_t n = h.levels.empty() ? 0 : h.levels[0].size();
  for (Index id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= n)
      throw std::out_of_range("target_matrix: id " + std::to_string(id) + " not covered by the hierarchy");
  TargetMatrix tm;
  tm.alpha = alpha;
  tm.t = Matrix::Zero(b, b);
  for (int k = 1; k <= h.depth(); ++k) {
    const auto& lv = h.levels[static_cast<std::size_t>(k)];
    const double w = std::ldexp(1.0, -k);
    for (Index i = 0; i < b; ++i)
      for (Index j = 0; j < b; ++j) {
        if (i == j) continue;
        const bool differ = lv[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])] !=
                            lv[static_cast<std::size_t>(ids[static_cast<std::size_t>(j)])];
        if (differ != agreement) tm.t(i, j) += w;
      }
  }
  tm.t_hat = alpha * tm.t + (1.0 - alpha) * Matrix::Identity(b, b);
  return tm;
}

namespace {

Var bce_pairs(const Var& stacked, Similarity sim, const Matrix& target2, const Matrix& mask, const SelexConfig& cfg,
              const BallConfig* ball) {
  Tape& t = stacked.tape();
  Var logits = add_scalar(scale(replearn::similarity_matrix(stacked, stacked, sim, ball), 1.0 / cfg.tau_pair),
                          cfg.pair_bias);
  // softplus(x) - y x is the BCE of sigmoid(x) against target y.
  Var per_pair = sub(softplus(logits), mul(logits, t.constant(target2)));
  return scale(sum(mul(per_pair, t.constant(mask))), 1.0 / mask.sum());
}

Var stack(const Var& a, const Var& b) {
  const std::vector<Var> parts{a, b};
  return concat_rows(parts);
}

}  // namespace

Var use_loss(const Var& view1, const Var& view2, const TargetMatrix& targets, double alpha_d, const SelexConfig& cfg,
             const BallConfig* ball) {
  const Index b = view1.rows();
  if (b < 1 || view2.rows() != b || view2.cols() != view1.cols())
    throw std::invalid_argument("use_loss: views differ in shape");
  if (targets.t_hat.rows() != b || targets.t_hat.cols() != b)
    throw std::invalid_argument("use_loss: target matrix does not match the batch");
  Matrix target2(2 * b, 2 * b);
  target2 << targets.t_hat, targets.t_hat, targets.t_hat, targets.t_hat;
  Matrix mask = Matrix::Ones(2 * b, 2 * b);
  mask.diagonal().setZero();
  if (ball == nullptr) {
    Var z = stack(normalize_rows(view1), normalize_rows(view2));
    return bce_pairs(z, Similarity::angle, target2, mask, cfg, nullptr);
  }
  Var z = stack(manifold::lift_rows(view1, *ball), manifold::lift_rows(view2, *ball));
  return replearn::hybrid_loss(alpha_d, Similarity::hyperbolic_distance,
                               [&](Similarity s) { return bce_pairs(z, s, target2, mask, cfg, ball); });
}

Var sse_loss(const Var& view1, const Var& view2, const Hierarchy& h, std::span<const Index> ids, double alpha_d,
             const SelexConfig& cfg, const BallConfig* ball) {
  const int depth = h.depth();
  const Index d = view1.cols();
  if (depth < 0) throw std::invalid_argument("sse_loss: empty hierarchy");
  if (d % (Index{1} << depth) != 0)
    throw std::invalid_argument("sse_loss: embedding width " + std::to_string(d) + " not divisible by 2^" +
                                std::to_string(depth));
  const std::vector<bool> all(ids.size(), true);
  Tape& t = view1.tape();
  Var total = t.constant(Matrix::Zero(1, 1));
  for (int k = 0; k <= depth; ++k) {
    std::vector<int> y(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= h.levels[static_cast<std::size_t>(k)].size())
        throw std::out_of_range("sse_loss: id not covered by the hierarchy");
      y[i] = h.levels[static_cast<std::size_t>(k)][static_cast<std::size_t>(ids[i])];
    }
    if (!replearn::has_sup_anchor(all, y)) continue;
    const Index width = d >> k;
    Var s1 = slice_cols(view1, 0, width);
    Var s2 = slice_cols(view2, 0, width);
    Var term;
    if (ball == nullptr) {
      Var z1 = normalize_rows(s1), z2 = normalize_rows(s2);
      term = scale(add(replearn::sup_contrastive(z1, all, y, Similarity::angle, cfg.tau_sup, nullptr).value,
                       replearn::sup_contrastive(z2, all, y, Similarity::angle, cfg.tau_sup, nullptr).value),
                   0.5);
    } else {
      Var z1 = manifold::lift_rows(s1, *ball), z2 = manifold::lift_rows(s2, *ball);
      term = replearn::hybrid_loss(alpha_d, Similarity::hyperbolic_distance, [&](Similarity s) {
        return scale(add(replearn::sup_contrastive(z1, all, y, s, cfg.tau_sup, ball).value,
                         replearn::sup_contrastive(z2, all, y, s, cfg.tau_sup, ball).value),
                     0.5);
      });
    }
    total = add(total, scale(term, std::ldexp(1.0, -k)));
  }
  return scale(total, 0.5);
}

Var selex_total(const Var& view1, const Var& view2, const Hierarchy& h, std::span<const Index> ids, int epoch,
                const SelexConfig& cfg, const BallConfig* ball) {
  replearn::RepLossConfig ramp;
  ramp.alpha_d_max = cfg.alpha_d_max;
  ramp.total_epochs = cfg.total_epochs;
  const double alpha_d = ball ? replearn::alpha_schedule(epoch, ramp) : 0.0;
  const TargetMatrix tm = target_matrix(h, ids, cfg.alpha, cfg.agreement_targets);
  if (cfg.lambda_b <= 0.0) return use_loss(view1, view2, tm, alpha_d, cfg, ball);
  if (cfg.lambda_b >= 1.0) return sse_loss(view1, view2, h, ids, alpha_d, cfg, ball);
  return add(scale(use_loss(view1, view2, tm, alpha_d, cfg, ball), 1.0 - cfg.lambda_b),
             scale(sse_loss(view1, view2, h, ids, alpha_d, cfg, ball), cfg.lambda_b));
}

}  // namespace hypcd::selex
