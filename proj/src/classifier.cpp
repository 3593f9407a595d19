#include "hypcd/classifier.hpp"

#include "hypcd/ball_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hypcd::classifier {

using namespace hypcd::ad;

namespace {

constexpr double kTinyNorm = 1e-15;
constexpr double kArctanhLimit = 1.0 - 1e-15;

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

void require_probability_rows(const Matrix& p, const char* what) {
  for (Index i = 0; i < p.rows(); ++i) {
    if ((p.row(i).array() < 0.0).any() || std::abs(p.row(i).sum() - 1.0) > 1e-6)
      throw std::invalid_argument(std::string(what) + ": row " + std::to_string(i) + " is not a probability vector");
  }
}

}  // namespace

void EuclidPrototypes::normalize() {
  for (Index k = 0; k < protos.rows(); ++k) {
    const double n = protos.row(k).norm();
    if (n > 0.0) protos.row(k) /= n;
  }
}

Vector proto_logits(const Vector& h, const EuclidPrototypes& protos, double tau) {
  if (h.size() != protos.protos.cols()) throw std::invalid_argument("proto_logits: dimension mismatch");
  return softmax(protos.protos * h / tau);
}

Vector mobius_matvec(const Matrix& w, const PoincarePoint& z, const BallConfig& cfg) {
  manifold::note_call();
  if (w.rows() != z.dim()) throw std::invalid_argument("mobius_matvec: dimension mismatch");
  if (!manifold::in_ball(z.coords(), cfg)) throw std::domain_error("mobius_matvec: point outside the ball");
  const Vector zw = w.transpose() * z.coords();
  const double zn = z.coords().norm();
  const double zwn = zw.norm();
  if (zn == 0.0 || zwn == 0.0) return Vector::Zero(w.cols());
  const double sc = cfg.sqrt_c();
  const double inner = zwn / zn * std::atanh(std::min(sc * zn, kArctanhLimit));
  return std::tanh(inner) / sc * zw / zwn;
}

PoincarePoint hyp_linear(const PoincarePoint& z, const HypClassifierParams& params, const BallConfig& cfg) {
  if (params.bias.size() != params.weight.cols()) throw std::invalid_argument("hyp_linear: bias dimension mismatch");
  const Vector v = mobius_matvec(params.weight, z, cfg);
  return ball_proj(manifold::mobius_add_raw(v, params.bias, cfg.curvature()), cfg);
}

Vector hyp_logits(const PoincarePoint& z, const HypClassifierParams& params, const BallConfig& cfg, double tau) {
  return softmax(hyp_linear(z, params, cfg).coords() / tau);
}

Var proto_probs_rows(const Var& h_unit, const Var& protos, double tau) {
  return softmax_rows(scale(matmul(h_unit, transpose(protos)), 1.0 / tau));
}

Var mobius_matvec_rows(const Var& z, const Var& w, const BallConfig& cfg) {
  manifold::note_call();
  Var zw = matmul(z, w);
  Var zn = maximum(rowwise_norm(z), kTinyNorm);
  Var zwn = maximum(rowwise_norm(zw), kTinyNorm);
  Var inner = mul(div(zwn, zn), arctanh(scale(zn, cfg.sqrt_c())));
  Var factor = div(tanh(inner), scale(zwn, cfg.sqrt_c()));
  return mul(zw, factor);
}

Var hyp_linear_rows(const Var& z, const Var& w, const Var& s, const BallConfig& cfg) {
  if (s.rows() != 1 || s.cols() != w.cols()) throw std::invalid_argument("hyp_linear_rows: bias must be 1 x K");
  return manifold::ball_proj_rows(manifold::mobius_add_rows(mobius_matvec_rows(z, w, cfg), s, cfg), cfg);
}

Var hyp_probs_rows(const Var& z, const Var& w, const Var& s, const BallConfig& cfg, double tau) {
  return softmax_rows(scale(hyp_linear_rows(z, w, s, cfg), 1.0 / tau));
}

Var mean_entropy(const Var& p1, const Var& p2) {
  const std::vector<Var> parts{p1, p2};
  Var pbar = scale(sum_cols(concat_rows(parts)), 1.0 / static_cast<double>(p1.rows() + p2.rows()));
  return neg(sum(mul(pbar, log(pbar))));
}

Var cls_loss_unsup(const Var& student1, const Var& student2, const Matrix& teacher1, const Matrix& teacher2,
                   double entropy_weight) {
  if (student1.rows() != teacher2.rows() || student2.rows() != teacher1.rows() ||
      student1.cols() != teacher2.cols() || student2.cols() != teacher1.cols())
    throw std::invalid_argument("cls_loss_unsup: student/teacher shape mismatch");
  require_probability_rows(student1.value(), "cls_loss_unsup student");
  require_probability_rows(student2.value(), "cls_loss_unsup student");
  require_probability_rows(teacher1, "cls_loss_unsup teacher");
  require_probability_rows(teacher2, "cls_loss_unsup teacher");
  Tape& t = student1.tape();
  // Cross-view distillation: the teacher of one view supervises the student of the other.
  Var ce1 = neg(sum(mul(t.constant(teacher2), log(student1))));
  Var ce2 = neg(sum(mul(t.constant(teacher1), log(student2))));
  Var ce = scale(add(ce1, ce2), 1.0 / static_cast<double>(student1.rows() + student2.rows()));
  if (entropy_weight == 0.0) return ce;
  return sub(ce, scale(mean_entropy(student1, student2), entropy_weight));
}

LossTerm cls_loss_sup(const Var& student, const std::vector<bool>& labelled, const std::vector<int>& labels) {
  const Index n = student.rows();
  if (static_cast<Index>(labelled.size()) != n || static_cast<Index>(labels.size()) != n)
    throw std::invalid_argument("cls_loss_sup: mask/labels length mismatch");
  Matrix onehot = Matrix::Zero(n, student.cols());
  Index count = 0;
  for (Index i = 0; i < n; ++i) {
    if (!labelled[static_cast<std::size_t>(i)]) continue;
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= student.cols()) throw std::out_of_range("cls_loss_sup: label out of range");
    onehot(i, y) = 1.0;
    ++count;
  }
  Tape& t = student.tape();
  if (count == 0) return {t.constant(Matrix::Zero(1, 1)), true};
  Var nll = neg(sum(mul(t.constant(onehot), log(maximum(student, 0.0)))));
  return {scale(nll, 1.0 / static_cast<double>(count)), false};
}

Var total_cls_loss(const ClsBatch& b, const DistillConfig& cfg) {
  Var unsup = cls_loss_unsup(b.student1, b.student2, b.teacher1, b.teacher2, cfg.entropy_weight);
  std::vector<bool> mask2(b.labelled);
  mask2.insert(mask2.end(), b.labelled.begin(), b.labelled.end());
  std::vector<int> labels2(b.labels);
  labels2.insert(labels2.end(), b.labels.begin(), b.labels.end());
  const std::vector<Var> both{b.student1, b.student2};
  LossTerm sup = cls_loss_sup(concat_rows(both), mask2, labels2);
  Var u = scale(unsup, 1.0 - cfg.lambda_b);
  if (sup.empty) return u;
  return add(u, scale(sup.value, cfg.lambda_b));
}

}  // namespace hypcd::classifier
