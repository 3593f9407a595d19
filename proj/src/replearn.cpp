#include "hypcd/replearn.hpp"

#include "hypcd/ball_ops.hpp"

#include <functional>
#include <stdexcept>
#include <string>

namespace hypcd::replearn {

using namespace hypcd::ad;
using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

double similarity_angle(const PoincarePoint& a, const PoincarePoint& b) {
  const double na = a.coords().norm();
  const double nb = b.coords().norm();
  if (na == 0.0 || nb == 0.0) throw std::domain_error("similarity_angle: zero vector");
  return a.coords().dot(b.coords()) / (na * nb);
}

double similarity_dist(const PoincarePoint& a, const PoincarePoint& b, const BallConfig& cfg) {
  return -manifold::hyperbolic_distance(a, b, cfg);
}

Var similarity_matrix(const Var& a, const Var& b, Similarity sim, const BallConfig* ball) {
  switch (sim) {
    case Similarity::angle:
      return matmul(normalize_rows(a), transpose(normalize_rows(b)));
    case Similarity::hyperbolic_distance:
      if (ball == nullptr) throw std::invalid_argument("hyperbolic similarity needs a ball configuration");
      return neg(manifold::pairwise_distance(a, b, *ball));
    case Similarity::euclidean_distance: {
      Var g = matmul(a, transpose(b));
      Var aa = sum_rows(mul(a, a));
      Var bb = transpose(sum_rows(mul(b, b)));
      return neg(ad::sqrt(sub(add(aa, bb), scale(g, 2.0))));
    }
  }
  throw std::invalid_argument("unknown similarity");
}

Var self_sup_contrastive(const Var& view1, const Var& view2, Similarity sim, double tau, const BallConfig* ball) {
  const Index n = view1.rows();
  if (n < 2) throw std::invalid_argument("self_sup_contrastive: batch needs at least 2 rows");
  if (view2.rows() != n || view2.cols() != view1.cols())
    throw std::invalid_argument("self_sup_contrastive: views differ in shape");
  Var logits = scale(similarity_matrix(view1, view2, sim, ball), 1.0 / tau);
  BoolArray off_diag = BoolArray::Constant(n, n, true);
  for (Index i = 0; i < n; ++i) off_diag(i, i) = false;
  // -s_ii/tau + log sum_{j != i} exp(s_ij/tau)
  Var per_anchor = sub(logsumexp_rows(logits, off_diag), diagonal(logits));
  return mean(per_anchor);
}

LossTerm sup_contrastive(const Var& z, const std::vector<bool>& labelled, const std::vector<int>& labels,
                         Similarity sim, double tau, const BallConfig* ball) {
  const Index n = z.rows();
  if (static_cast<Index>(labelled.size()) != n || static_cast<Index>(labels.size()) != n)
    throw std::invalid_argument("sup_contrastive: mask/labels length mismatch");
  std::vector<Index> rows;
  for (Index i = 0; i < n; ++i)
    if (labelled[static_cast<std::size_t>(i)]) rows.push_back(i);
  const auto m = static_cast<Index>(rows.size());

  // Positive weights 1/|N_i| for same-class partners, anchor indicator a_i.
  Matrix pos = Matrix::Zero(m, m);
  Matrix anchor = Matrix::Zero(m, 1);
  Index n_anchors = 0;
  for (Index i = 0; i < m; ++i) {
    int count = 0;
    for (Index j = 0; j < m; ++j)
      if (j != i && labels[static_cast<std::size_t>(rows[i])] == labels[static_cast<std::size_t>(rows[j])]) ++count;
    if (count == 0) continue;
    for (Index j = 0; j < m; ++j)
      if (j != i && labels[static_cast<std::size_t>(rows[i])] == labels[static_cast<std::size_t>(rows[j])])
        pos(i, j) = 1.0 / count;
    anchor(i, 0) = 1.0;
    ++n_anchors;
  }
  Tape& t = z.tape();
  if (n_anchors == 0) return {t.constant(Matrix::Zero(1, 1)), true};

  Var sub_z = select_rows(z, rows);
  Var logits = scale(similarity_matrix(sub_z, sub_z, sim, ball), 1.0 / tau);
  BoolArray off_diag = BoolArray::Constant(m, m, true);
  for (Index i = 0; i < m; ++i) off_diag(i, i) = false;
  Var lse = logsumexp_rows(logits, off_diag);
  Var pos_term = sum_rows(mul(logits, t.constant(pos)));
  Var per_anchor = mul(sub(lse, pos_term), t.constant(anchor));
  return {scale(sum(per_anchor), 1.0 / static_cast<double>(n_anchors)), false};
}

double alpha_schedule(int epoch, const RepLossConfig& cfg) {
  if (cfg.total_epochs <= 0) throw std::invalid_argument("alpha_schedule: total_epochs must be positive");
  if (epoch < 0 || epoch > cfg.total_epochs)
    throw std::out_of_range("alpha_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(cfg.total_epochs) + "]");
  return static_cast<double>(epoch) * cfg.alpha_d_max / cfg.total_epochs;
}

bool has_sup_anchor(const std::vector<bool>& labelled, const std::vector<int>& labels) {
  for (std::size_t i = 0; i < labelled.size(); ++i) {
    if (!labelled[i]) continue;
    for (std::size_t j = 0; j < labelled.size(); ++j)
      if (j != i && labelled[j] && labels[j] == labels[i]) return true;
  }
  return false;
}

Var hybrid_loss(double alpha_d, Similarity dist_kind, const std::function<Var(Similarity)>& term) {
  if (alpha_d <= 0.0) return term(Similarity::angle);
  if (alpha_d >= 1.0) return term(dist_kind);
  return add(scale(term(dist_kind), alpha_d), scale(term(Similarity::angle), 1.0 - alpha_d));
}

namespace {

Var combine(const Var& unsup, const std::optional<Var>& sup, double lambda_b) {
  Var u = scale(unsup, 1.0 - lambda_b);
  if (!sup) return u;
  return add(u, scale(*sup, lambda_b));
}

// Supervised term averaged over both views.
Var sup_both_views(const RepBatch& batch, const Var& v1, const Var& v2, Similarity s, double tau,
                   const BallConfig* ball) {
  LossTerm a = sup_contrastive(v1, batch.labelled, batch.labels, s, tau, ball);
  LossTerm b = sup_contrastive(v2, batch.labelled, batch.labels, s, tau, ball);
  return scale(add(a.value, b.value), 0.5);
}

}  // namespace

Var hyp_rep_loss(const RepBatch& batch, double alpha_d, const RepLossConfig& cfg, const BallConfig& ball) {
  if (alpha_d < 0.0 || alpha_d > 1.0) throw std::invalid_argument("hyp_rep_loss: alpha_d outside [0, 1]");
  Var h1 = manifold::lift_rows(batch.view1, ball);
  Var h2 = manifold::lift_rows(batch.view2, ball);
  Var unsup = hybrid_loss(alpha_d, Similarity::hyperbolic_distance,
                          [&](Similarity s) { return self_sup_contrastive(h1, h2, s, cfg.tau_unsup, &ball); });
  std::optional<Var> sup;
  if (cfg.lambda_b > 0.0 && has_sup_anchor(batch.labelled, batch.labels))
    sup = hybrid_loss(alpha_d, Similarity::hyperbolic_distance,
                      [&](Similarity s) { return sup_both_views(batch, h1, h2, s, cfg.tau_sup, &ball); });
  return combine(unsup, sup, cfg.lambda_b);
}

Var hyp_rep_loss(const RepBatch& batch, int epoch, const RepLossConfig& cfg, const BallConfig& ball) {
  return hyp_rep_loss(batch, alpha_schedule(epoch, cfg), cfg, ball);
}

Var euclid_rep_loss(const RepBatch& batch, const RepLossConfig& cfg) {
  Var z1 = normalize_rows(batch.view1);
  Var z2 = normalize_rows(batch.view2);
  Var unsup = self_sup_contrastive(z1, z2, Similarity::angle, cfg.tau_unsup, nullptr);
  std::optional<Var> sup;
  if (cfg.lambda_b > 0.0 && has_sup_anchor(batch.labelled, batch.labels))
    sup = sup_both_views(batch, z1, z2, Similarity::angle, cfg.tau_sup, nullptr);
  return combine(unsup, sup, cfg.lambda_b);
}

}  // namespace hypcd::replearn
