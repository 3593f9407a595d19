#include "hypcd/ball_ops.hpp"
#include "hypcd/classifier.hpp"
#include "hypcd/manifold.hpp"
#include "hypcd/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace hypcd;
using namespace hypcd::classifier;
using ad::Tape;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

Matrix softmax(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    p.row(i) = (p.row(i).array() - p.row(i).maxCoeff()).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace

TEST_CASE("mobius matrix-vector product") {
  const BallConfig b(1.0, 1.0);
  const PoincarePoint z(Vector::Constant(1, 0.5), b);
  CHECK(mobius_matvec(Matrix::Constant(1, 1, 2.0), z, b)(0) == doctest::Approx(0.8).epsilon(1e-15));
  // Identity weights leave the point unchanged.
  Vector v(3);
  v << 0.2, -0.3, 0.1;
  const PoincarePoint p(v, b);
  CHECK((mobius_matvec(Matrix::Identity(3, 3), p, b) - v).norm() < 1e-15);
  CHECK(mobius_matvec(Matrix::Identity(3, 3), PoincarePoint::origin(3), b).norm() == 0.0);
  CHECK(mobius_matvec(Matrix::Zero(3, 2), p, b).norm() == 0.0);
}

TEST_CASE("hyperbolic linear layer") {
  const BallConfig b(1.0, 1.0);
  const PoincarePoint z(Vector::Constant(1, 0.5), b);
  const HypClassifierParams params{Matrix::Constant(1, 1, 2.0), Vector::Constant(1, 0.1)};
  CHECK(hyp_linear(z, params, b).coords()(0) == doctest::Approx(0.8333333333333334).epsilon(1e-14));
  const Vector p = hyp_logits(z, params, b, 0.1);
  CHECK(p.size() == 1);
  CHECK(p(0) == doctest::Approx(1.0));
}

TEST_CASE("prototype head") {
  EuclidPrototypes protos{Matrix::Ones(4, 3)};
  protos.normalize();
  CHECK(protos.protos.row(2).norm() == doctest::Approx(1.0).epsilon(1e-15));
  Vector h(3);
  h << 1.0, 0.0, 0.0;
  const Vector p = proto_logits(h, protos, 0.1);
  for (Eigen::Index k = 0; k < 4; ++k) CHECK(p(k) == doctest::Approx(0.25).epsilon(1e-15));

  protos.protos = Matrix::Identity(3, 3);
  const Vector q = proto_logits(h, protos, 0.1);
  CHECK(q(0) == doctest::Approx(std::exp(10.0) / (std::exp(10.0) + 2.0)).epsilon(1e-14));
  CHECK(q.sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("batched heads agree with the point versions") {
  Rng rng(21);
  const BallConfig b(0.05, 2.3);
  Tape t;
  const Matrix x = random_matrix(5, 6, rng, 3.0);
  const Matrix w = random_matrix(6, 4, rng, 0.5);
  Vector s(4);
  s << 0.3, -0.2, 0.1, 0.0;
  const auto z = manifold::lift_rows(t.constant(x), b);
  const Matrix out = hyp_linear_rows(z, t.constant(w), t.constant(s.transpose()), b).value();
  const Matrix probs = hyp_probs_rows(z, t.constant(w), t.constant(s.transpose()), b, 0.1).value();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const PoincarePoint zi = manifold::lift(TangentVector(x.row(i).transpose()), b);
    const Vector ref = hyp_linear(zi, {w, s}, b).coords();
    CHECK((out.row(i).transpose() - ref).norm() < 1e-12);
    CHECK((probs.row(i).transpose() - hyp_logits(zi, {w, s}, b, 0.1)).norm() < 1e-12);
    CHECK(probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-14));
  }

  EuclidPrototypes protos{random_matrix(4, 6, rng)};
  protos.normalize();
  const auto hu = ad::normalize_rows(t.constant(x));
  const Matrix pp = proto_probs_rows(hu, t.constant(protos.protos), 0.1).value();
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    CHECK((pp.row(i).transpose() - proto_logits(x.row(i).transpose().normalized(), protos, 0.1)).norm() < 1e-12);
}

TEST_CASE("supervised cross-entropy") {
  Tape t;
  Matrix p(2, 2);
  p << 0.5, 0.5, 0.9, 0.1;
  const LossTerm l = cls_loss_sup(t.constant(p), {true, false}, {0, -1});
  CHECK_FALSE(l.empty);
  CHECK(l.value.scalar() == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  CHECK(cls_loss_sup(t.constant(p), {false, false}, {-1, -1}).empty);
}

TEST_CASE("uniform predictions give zero unsupervised loss") {
  Tape t;
  const Matrix u = Matrix::Constant(6, 4, 0.25);
  CHECK(cls_loss_unsup(t.constant(u), t.constant(u), u, u, 1.0).scalar() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(mean_entropy(t.constant(u), t.constant(u)).scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-15));
}

TEST_CASE("unsupervised loss validates probability rows") {
  Tape t;
  const Matrix u = Matrix::Constant(2, 2, 0.5);
  Matrix bad = u;
  bad(0, 0) = 0.7;
  CHECK_THROWS_AS(cls_loss_unsup(t.constant(bad), t.constant(u), u, u, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(cls_loss_unsup(t.constant(u), t.constant(u), bad, u, 1.0), std::invalid_argument);
}

TEST_CASE("teacher rows receive no gradient") {
  Rng rng(8);
  const Matrix logits1 = random_matrix(4, 3, rng), logits2 = random_matrix(4, 3, rng);
  const Matrix teach1 = softmax(random_matrix(4, 3, rng)), teach2 = softmax(random_matrix(4, 3, rng));
  // The gradient w.r.t. the student logits matches finite differences taken
  // with the teacher held fixed, and the teacher input is not a graph node.
  const ad::GraphFn f = [&](Tape& t, const ad::Var& x) {
    return cls_loss_unsup(ad::softmax_rows(x), ad::softmax_rows(t.constant(logits2)), teach1, teach2, 1.0);
  };
  CHECK(ad::finite_diff_check(f, logits1).pass);

  // Changing the teacher changes the loss but the student gradient stays
  // that of a plain cross-entropy against fixed targets.
  Tape t;
  auto x = t.leaf(logits1);
  auto s2 = t.constant(softmax(logits2));
  t.backward(cls_loss_unsup(ad::softmax_rows(x), s2, teach1, teach2, 0.0));
  // d/dlogits of mean CE(q, softmax(x)) over 2B = (softmax(x) - q) / (2B)
  const Matrix expected = (softmax(logits1) - teach2) / 8.0;
  CHECK((x.grad() - expected).norm() < 1e-14);
}

TEST_CASE("total loss mixes both terms") {
  Rng rng(13);
  Tape t;
  const Matrix p1 = softmax(random_matrix(4, 3, rng)), p2 = softmax(random_matrix(4, 3, rng));
  const Matrix q1 = softmax(random_matrix(4, 3, rng)), q2 = softmax(random_matrix(4, 3, rng));
  ClsBatch batch{t.constant(p1), t.constant(p2), q1, q2, {true, false, true, false}, {0, -1, 2, -1}};
  const DistillConfig cfg;
  const double unsup = cls_loss_unsup(batch.student1, batch.student2, q1, q2, cfg.entropy_weight).scalar();
  const double sup = 0.25 * (-std::log(p1(0, 0)) - std::log(p1(2, 2)) - std::log(p2(0, 0)) - std::log(p2(2, 2)));
  CHECK(total_cls_loss(batch, cfg).scalar() == doctest::Approx(0.65 * unsup + 0.35 * sup).epsilon(1e-13));
}

TEST_CASE("boundary inputs stay finite through the hyperbolic head") {
  Rng rng(99);
  const BallConfig b(0.05, 2.3);
  const HypClassifierParams params{random_matrix(16, 8, rng, 0.5), Vector::Zero(8)};
  for (int t = 0; t < 10000; ++t) {
    Vector v(16);
    for (int i = 0; i < 16; ++i) v(i) = rng.normal();
    v *= std::pow(10.0, 6.0 * rng.uniform()) / v.norm();
    const PoincarePoint z = manifold::lift(TangentVector(v), b);
    const PoincarePoint y = hyp_linear(z, params, b);
    REQUIRE(y.coords().allFinite());
    REQUIRE(y.coords().norm() <= b.max_norm() * (1 + 1e-15));
    const Vector p = hyp_logits(z, params, b, 0.1);
    REQUIRE(p.allFinite());
    REQUIRE(std::abs(p.sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("small curvature recovers the affine layer") {
  Rng rng(6);
  const BallConfig b(1e-8, 1.0);
  const Matrix w = random_matrix(5, 3, rng, 0.5);
  Vector s(3);
  s << 0.1, -0.2, 0.05;
  for (int t = 0; t < 100; ++t) {
    const Vector z = random_matrix(5, 1, rng, 0.5).col(0);
    const Vector flat = w.transpose() * z + s;
    CHECK((hyp_linear(PoincarePoint(z, b), {w, s}, b).coords() - flat).norm() < 1e-3);
  }
}
