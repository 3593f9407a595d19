#include "hypcd/assignment.hpp"
#include "hypcd/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

using namespace hypcd;
using namespace hypcd::assignment;

namespace {

struct Blobs {
  Matrix x;
  std::vector<int> y;
};

// K Gaussian blobs with unit noise and centres 10 apart along separate axes.
Blobs blobs(int k, int per_class, int dim, Rng& rng) {
  Blobs b{Matrix(k * per_class, dim), {}};
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < per_class; ++i) {
      const int row = c * per_class + i;
      for (int j = 0; j < dim; ++j) b.x(row, j) = rng.normal();
      b.x(row, c % dim) += 10.0 / std::sqrt(2.0) * (c < dim ? 1.0 : -1.0);
      b.y.push_back(c);
    }
  return b;
}

double brute_force_min(const Matrix& cost) {
  std::vector<int> perm(static_cast<std::size_t>(cost.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += cost(static_cast<Eigen::Index>(i), perm[i]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double assignment_cost(const Matrix& cost, const std::vector<int>& perm) {
  double s = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) s += cost(static_cast<Eigen::Index>(i), perm[i]);
  return s;
}

}  // namespace

TEST_CASE("all rows labelled are pinned in one pass") {
  Rng rng(1);
  const Blobs b = blobs(3, 10, 4, rng);
  const std::vector<bool> lab(b.y.size(), true);
  const ClusterResult r = semi_sup_kmeans(b.x, lab, b.y, {3, 100, 0});
  CHECK(r.assignments == b.y);
  CHECK(r.iterations_run == 1);
}

TEST_CASE("single cluster") {
  Rng rng(2);
  const Blobs b = blobs(3, 10, 4, rng);
  const std::vector<bool> lab(b.y.size(), false);
  const ClusterResult r = semi_sup_kmeans(b.x, lab, b.y, {1, 100, 0});
  CHECK(std::all_of(r.assignments.begin(), r.assignments.end(), [](int a) { return a == 0; }));
  CHECK((r.centroids.row(0) - b.x.colwise().mean()).norm() < 1e-12);
}

TEST_CASE("k-means input validation") {
  const Matrix x = Matrix::Zero(0, 2);
  CHECK_THROWS_AS(semi_sup_kmeans(x, {}, {}, {2, 100, 0}), std::invalid_argument);
  const Matrix y = Matrix::Ones(3, 2);
  CHECK_THROWS_AS(semi_sup_kmeans(y, {true, false, false}, {4, 0, 0}, {2, 100, 0}), std::invalid_argument);
  CHECK_THROWS_AS(semi_sup_kmeans(y, {true, false}, {0, 0}, {2, 100, 0}), std::invalid_argument);
  CHECK_THROWS_AS(balanced_semi_sup_kmeans(x, {}, {}, {2, 100, 0}), std::invalid_argument);
  CHECK_THROWS_AS(semi_sup_kmeans(y, {false, false, false}, {0, 0, 0}, {2, 100, 0, 0}), std::invalid_argument);
}

TEST_CASE("separated blobs are recovered with labelled rows pinned") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 100);
    const Blobs b = blobs(8, 100, 16, rng);
    std::vector<bool> lab(b.y.size(), false);
    for (std::size_t i = 0; i < b.y.size(); ++i) lab[i] = b.y[i] < 4 && i % 2 == 0;
    for (bool balanced : {false, true}) {
      const KMeansOptions opt{8, 100, seed};
      const ClusterResult r =
          balanced ? balanced_semi_sup_kmeans(b.x, lab, b.y, opt) : semi_sup_kmeans(b.x, lab, b.y, opt);
      for (std::size_t i = 0; i < lab.size(); ++i)
        if (lab[i]) REQUIRE(r.assignments[i] == b.y[i]);
      CHECK(hungarian_acc(b.y, r.assignments, 8, {0, 1, 2, 3}).acc_all == 1.0);
      CHECK(r.iterations_run <= 100);
    }
  }
}

TEST_CASE("balanced variant splits a symmetric two-blob pool evenly") {
  Rng rng(7);
  Matrix x(40, 2);
  std::vector<int> y(40);
  // One labelled class far away, two mirrored unlabelled blobs.
  for (int i = 0; i < 20; ++i) {
    const double dx = 0.1 * rng.normal(), dy = 0.1 * rng.normal();
    x.row(i) << 5.0 + dx, dy;
    x.row(20 + i) << -5.0 - dx, -dy;
  }
  Matrix all(50, 2);
  all << Matrix::Constant(10, 2, 50.0), x;
  std::vector<bool> lab(50, false);
  std::vector<int> labels(50, 0);
  for (int i = 0; i < 10; ++i) lab[static_cast<std::size_t>(i)] = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ClusterResult r = balanced_semi_sup_kmeans(all, lab, labels, {3, 100, seed});
    const auto n1 = std::count(r.assignments.begin(), r.assignments.end(), 1);
    const auto n2 = std::count(r.assignments.begin(), r.assignments.end(), 2);
    CHECK(n1 == 20);
    CHECK(n2 == 20);
    const ClusterResult again = balanced_semi_sup_kmeans(all, lab, labels, {3, 100, seed});
    CHECK(again.assignments == r.assignments);
    CHECK(again.centroids == r.centroids);
  }
}

TEST_CASE("empty clusters are repaired") {
  // Three identical points and K = 3: every cluster must end up non-empty.
  Matrix x(4, 1);
  x << 0.0, 0.0, 0.0, 1.0;
  const ClusterResult r = semi_sup_kmeans(x, std::vector<bool>(4, false), std::vector<int>(4, 0), {3, 100, 4});
  for (int a : r.assignments) CHECK((a >= 0 && a < 3));
  CHECK(r.centroids.allFinite());
}

TEST_CASE("hungarian solver") {
  Matrix diag = Matrix::Constant(4, 4, 5.0);
  diag.diagonal().setZero();
  CHECK(hungarian_solve(diag) == std::vector<int>{0, 1, 2, 3});

  const std::vector<int> pi{2, 0, 3, 1};
  Matrix c = Matrix::Ones(4, 4);
  for (int i = 0; i < 4; ++i) c(i, pi[static_cast<std::size_t>(i)]) = 0.0;
  CHECK(hungarian_solve(c) == pi);

  Rng rng(42);
  for (int t = 0; t < 100; ++t) {
    Matrix m(6, 6);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() * 10.0 - 3.0;
    const auto perm = hungarian_solve(m);
    CHECK(assignment_cost(m, perm) == doctest::Approx(brute_force_min(m)).epsilon(1e-12));
    std::vector<int> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5});
  }

  CHECK_THROWS_AS(hungarian_solve(Matrix::Zero(2, 3)), std::invalid_argument);
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(hungarian_solve(bad), std::invalid_argument);
  CHECK(hungarian_solve(Matrix::Zero(0, 0)).empty());
}

TEST_CASE("matched accuracy") {
  const AccReport r = hungarian_acc({0, 0, 1, 2}, {0, 1, 1, 2}, 3, {0});
  CHECK(r.acc_all == 0.75);
  CHECK(r.acc_old == 0.5);
  CHECK(r.acc_new == 1.0);
  CHECK(r.n_old == 2);
  CHECK(r.n_new == 2);

  const std::vector<int> y{0, 1, 2, 3, 3, 2, 1, 0};
  CHECK(hungarian_acc(y, y, 4, {0, 1}).acc_all == 1.0);
  std::vector<int> permuted;
  for (int v : y) permuted.push_back((v + 1) % 4);
  const AccReport p = hungarian_acc(y, permuted, 4, {0, 1});
  CHECK(p.acc_all == 1.0);
  CHECK(p.permutation == std::vector<int>{3, 0, 1, 2});

  CHECK_THROWS_AS(hungarian_acc({0, 4}, {0, 1}, 4, {}), std::out_of_range);
  CHECK_THROWS_AS(hungarian_acc({0, 1}, {0, -1}, 4, {}), std::out_of_range);
  CHECK_THROWS_AS(hungarian_acc({0, 1}, {0}, 4, {}), std::invalid_argument);
}

TEST_CASE("accuracy is relabel-invariant and composes exactly") {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const int k = 2 + static_cast<int>(rng.below(7));
    const int n = 5 + static_cast<int>(rng.below(60));
    std::vector<int> y(static_cast<std::size_t>(n)), p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      y[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      p[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    }
    std::set<int> old;
    for (int c = 0; c < k / 2; ++c) old.insert(c);
    const AccReport r = hungarian_acc(y, p, k, old);

    // Brute-force optimum over permutations of predicted ids.
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    long best = 0;
    do {
      long hit = 0;
      for (int i = 0; i < n; ++i)
        hit += perm[static_cast<std::size_t>(p[static_cast<std::size_t>(i)])] == y[static_cast<std::size_t>(i)];
      best = std::max(best, hit);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(r.acc_all == doctest::Approx(static_cast<double>(best) / n).epsilon(1e-15));

    std::vector<int> shuffled(static_cast<std::size_t>(k));
    std::iota(shuffled.begin(), shuffled.end(), 0);
    hypcd::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<int> relabelled;
    for (int v : p) relabelled.push_back(shuffled[static_cast<std::size_t>(v)]);
    CHECK(hungarian_acc(y, relabelled, k, old).acc_all == r.acc_all);

    const double composed =
        (static_cast<double>(r.n_old) * r.acc_old + static_cast<double>(r.n_new) * r.acc_new) / n;
    CHECK(r.acc_all == composed);
  }
}

TEST_CASE("parametric prediction") {
  const BallConfig b(0.05, 2.3);
  // Symmetric head: both logits equal, the tie goes to class 0.
  classifier::HypClassifierParams head{Matrix::Ones(3, 2), Vector::Zero(2)};
  Matrix x(2, 3);
  x << 1.0, 2.0, 3.0, 1.0, 2.0, 3.0;
  const auto pred = parametric_predict(x, head, b);
  CHECK(pred == std::vector<int>{0, 0});

  Rng rng(3);
  Matrix w(4, 3);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  head = {w, Vector::Zero(3)};
  Matrix f(20, 4);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
  const auto hp = parametric_predict(f, head, b);
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    const PoincarePoint z = manifold::lift(TangentVector(f.row(i).transpose()), b);
    for (double tau : {0.01, 0.1, 1.0, 10.0}) {
      Eigen::Index arg = 0;
      classifier::hyp_logits(z, head, b, tau).maxCoeff(&arg);
      CHECK(arg == hp[static_cast<std::size_t>(i)]);
    }
  }

  classifier::EuclidPrototypes protos{Matrix::Identity(3, 3)};
  Matrix g(3, 3);
  g << 0.1, 5.0, 0.0, 2.0, 2.0, 0.0, 0.0, 0.0, -1.0;
  CHECK(parametric_predict(g, protos) == std::vector<int>{1, 0, 0});
  CHECK_THROWS(parametric_predict(Matrix::Ones(2, 5), protos));
}
