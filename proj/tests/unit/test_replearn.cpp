#include "hypcd/ball_ops.hpp"
#include "hypcd/manifold.hpp"
#include "hypcd/replearn.hpp"
#include "hypcd/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace hypcd;
using namespace hypcd::replearn;
using ad::Matrix;
using ad::Tape;

namespace {

Matrix view_a() {
  Matrix m(3, 2);
  m << 0.4, 0.1, -0.3, 0.5, 2.0, -1.0;
  return m;
}

Matrix view_b() {
  Matrix m(3, 2);
  m << 0.35, 0.2, -0.1, 0.6, 1.5, -0.5;
  return m;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("point similarities") {
  const BallConfig b(1.0, 1.0);
  Vector x(2), y(2);
  x << 0.3, 0.0;
  y << 0.0, 0.4;
  CHECK(similarity_angle(PoincarePoint(x, b), PoincarePoint(y, b)) == doctest::Approx(0.0));
  CHECK(similarity_angle(PoincarePoint(x, b), PoincarePoint(2.0 * x, b)) == doctest::Approx(1.0));
  CHECK_THROWS_AS(similarity_angle(PoincarePoint::origin(2), PoincarePoint(x, b)), std::domain_error);
  CHECK(similarity_dist(PoincarePoint(x, b), PoincarePoint(x, b), b) == 0.0);
  CHECK(similarity_dist(PoincarePoint::origin(1), PoincarePoint(Vector::Constant(1, 0.5), b), b) ==
        doctest::Approx(-1.0986122886681098).epsilon(1e-14));
}

TEST_CASE("self-supervised contrastive reference values on lifted views") {
  const BallConfig b(0.5, 1.5);
  Tape t;
  const auto h1 = manifold::lift_rows(t.constant(view_a()), b);
  const auto h2 = manifold::lift_rows(t.constant(view_b()), b);
  CHECK(self_sup_contrastive(h1, h2, Similarity::hyperbolic_distance, 1.0, &b).scalar() ==
        doctest::Approx(-1.1606385336159166).epsilon(1e-12));
  CHECK(self_sup_contrastive(h1, h2, Similarity::angle, 1.0, nullptr).scalar() ==
        doctest::Approx(-0.15198351515614676).epsilon(1e-12));
  CHECK_THROWS_AS(self_sup_contrastive(h1, h2, Similarity::hyperbolic_distance, 1.0, nullptr), std::invalid_argument);
}

TEST_CASE("self-supervised contrastive closed forms") {
  Tape t;
  // Orthonormal identical views: -1 + log(n - 1).
  for (int n : {2, 3, 5}) {
    const auto v = t.constant(Matrix::Identity(n, n));
    CHECK(self_sup_contrastive(v, v, Similarity::angle, 1.0, nullptr).scalar() ==
          doctest::Approx(-1.0 + std::log(n - 1.0)).epsilon(1e-14));
  }
  const auto one = t.constant(Matrix::Ones(1, 3));
  CHECK_THROWS_AS(self_sup_contrastive(one, one, Similarity::angle, 1.0, nullptr), std::invalid_argument);
}

TEST_CASE("supervised contrastive") {
  const BallConfig b(0.5, 1.5);
  Tape t;
  const auto h1 = manifold::lift_rows(t.constant(view_a()), b);
  const LossTerm ref = sup_contrastive(h1, {true, true, true}, {0, 0, 1}, Similarity::angle, 0.5, nullptr);
  CHECK_FALSE(ref.empty);
  CHECK(ref.value.scalar() == doctest::Approx(1.2511768852294087).epsilon(1e-12));

  // Two labelled rows of one class: the positive is the whole denominator.
  const auto pair = t.constant(view_a().topRows(2));
  CHECK(sup_contrastive(pair, {true, true}, {3, 3}, Similarity::angle, 0.07, nullptr).value.scalar() ==
        doctest::Approx(0.0).epsilon(1e-15));
  // n identical rows of one class give log(n - 1).
  const auto same = t.constant(Matrix::Ones(5, 4));
  CHECK(sup_contrastive(same, std::vector<bool>(5, true), std::vector<int>(5, 1), Similarity::angle, 0.07, nullptr)
            .value.scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  // No anchor with a partner.
  const LossTerm none = sup_contrastive(h1, {true, false, true}, {0, 0, 1}, Similarity::angle, 0.5, nullptr);
  CHECK(none.empty);
  CHECK(none.value.scalar() == 0.0);
  CHECK_FALSE(has_sup_anchor({true, false, true}, {0, 0, 1}));
  CHECK(has_sup_anchor({true, true, false}, {2, 2, 1}));
}

TEST_CASE("alpha schedule") {
  RepLossConfig cfg;
  CHECK(alpha_schedule(0, cfg) == 0.0);
  CHECK(alpha_schedule(100, cfg) == doctest::Approx(0.5));
  CHECK(alpha_schedule(200, cfg) == doctest::Approx(1.0));
  cfg.alpha_d_max = 0.5;
  CHECK(alpha_schedule(200, cfg) == doctest::Approx(0.5));
  CHECK_THROWS_AS(alpha_schedule(-1, cfg), std::out_of_range);
  CHECK_THROWS_AS(alpha_schedule(201, cfg), std::out_of_range);
}

TEST_CASE("hybrid loss weights and skips zero-weight terms") {
  Tape t;
  int dist_calls = 0, angle_calls = 0;
  auto term = [&](Similarity s) {
    if (s == Similarity::angle) {
      ++angle_calls;
      return t.constant(Matrix::Constant(1, 1, 2.0));
    }
    ++dist_calls;
    return t.constant(Matrix::Constant(1, 1, 10.0));
  };
  CHECK(hybrid_loss(0.0, Similarity::hyperbolic_distance, term).scalar() == 2.0);
  CHECK(dist_calls == 0);
  CHECK(hybrid_loss(1.0, Similarity::hyperbolic_distance, term).scalar() == 10.0);
  CHECK(angle_calls == 1);
  CHECK(hybrid_loss(0.25, Similarity::hyperbolic_distance, term).scalar() == doctest::Approx(4.0));
}

TEST_CASE("hyperbolic objective at alpha 0 equals the angle-only objective") {
  Rng rng(4);
  const BallConfig b(0.05, 2.3);
  Tape t;
  RepBatch batch{t.constant(random_matrix(6, 8, rng)), t.constant(random_matrix(6, 8, rng)),
                 {true, true, false, true, false, true}, {0, 0, -1, 1, -1, 1}};
  const RepLossConfig cfg;
  const double hyp = hyp_rep_loss(batch, 0.0, cfg, b).scalar();
  // Lifting keeps directions, so cosine terms match the normalised baseline.
  CHECK(hyp == doctest::Approx(euclid_rep_loss(batch, cfg).scalar()).epsilon(1e-12));
  CHECK(hyp_rep_loss(batch, 0, cfg, b).scalar() == doctest::Approx(hyp).epsilon(1e-15));

  // The distance mix changes the value and is linear in alpha.
  const double l1 = hyp_rep_loss(batch, 1.0, cfg, b).scalar();
  const double lh = hyp_rep_loss(batch, 0.5, cfg, b).scalar();
  CHECK(std::abs(l1 - hyp) > 1e-6);
  CHECK(lh == doctest::Approx(0.5 * (l1 + hyp)).epsilon(1e-12));
  CHECK_THROWS_AS(hyp_rep_loss(batch, 1.5, cfg, b), std::invalid_argument);
}

TEST_CASE("euclidean distance similarity") {
  Tape t;
  Matrix a(2, 2), c(1, 2);
  a << 0.0, 0.0, 3.0, 4.0;
  c << 0.0, 0.0;
  const Matrix s = similarity_matrix(t.constant(a), t.constant(c), Similarity::euclidean_distance, nullptr).value();
  CHECK(s(0, 0) == doctest::Approx(0.0));
  CHECK(s(1, 0) == doctest::Approx(-5.0));
}

TEST_CASE("lambda_b zero drops the supervised term") {
  Rng rng(9);
  Tape t;
  RepBatch batch{t.constant(random_matrix(4, 3, rng)), t.constant(random_matrix(4, 3, rng)),
                 {true, true, true, true}, {0, 0, 1, 1}};
  RepLossConfig cfg;
  cfg.lambda_b = 0.0;
  const double unsup = self_sup_contrastive(ad::normalize_rows(batch.view1), ad::normalize_rows(batch.view2),
                                            Similarity::angle, cfg.tau_unsup, nullptr)
                           .scalar();
  CHECK(euclid_rep_loss(batch, cfg).scalar() == doctest::Approx(unsup).epsilon(1e-14));
}
