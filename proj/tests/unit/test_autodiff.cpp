#include "hypcd/autodiff.hpp"
#include "hypcd/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <string>

using namespace hypcd::ad;

namespace {

Matrix random_matrix(Index r, Index c, hypcd::Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace

TEST_CASE("leaf gradients accumulate, intermediates reset") {
  Tape t;
  Var x = t.leaf(scalar(3.0));
  Var y = mul(x, x);
  t.backward(y);
  CHECK(x.grad()(0, 0) == 6.0);
  t.backward(y);
  CHECK(x.grad()(0, 0) == 12.0);
  CHECK(y.grad()(0, 0) == 1.0);
  t.zero_grad();
  CHECK(x.grad()(0, 0) == 0.0);
}

TEST_CASE("backward requires a scalar root") {
  Tape t;
  Var x = t.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
}

TEST_CASE("constants and detached nodes get no gradient") {
  Tape t;
  Var x = t.leaf(scalar(2.0));
  Var c = t.constant(scalar(5.0));
  Var y = add(mul(x, c), mul(detach(x), x));
  t.backward(y);
  // d/dx (5x + stop(x) x) = 5 + 2
  CHECK(x.grad()(0, 0) == 7.0);
  CHECK_FALSE(c.requires_grad());
}

TEST_CASE("arctanh derivative and domain") {
  Tape t;
  Var x = t.leaf(scalar(0.5));
  Var y = arctanh(x);
  t.backward(y);
  CHECK(x.grad()(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(arctanh(t.constant(scalar(1.5))), std::domain_error);
  CHECK(std::isfinite(arctanh(t.constant(scalar(1.0))).scalar()));
}

TEST_CASE("log rejects negative input") {
  Tape t;
  CHECK_THROWS_AS(log(t.constant(scalar(-1.0))), std::domain_error);
}

TEST_CASE("sqrt has zero gradient at zero") {
  Tape t;
  Var x = t.leaf(Matrix::Zero(1, 2));
  t.backward(sum(hypcd::ad::sqrt(x)));
  CHECK(x.grad().allFinite());
  CHECK(x.grad().norm() == 0.0);
}

TEST_CASE("softmax rows sum to one and logsumexp is stable") {
  Tape t;
  Matrix big(2, 3);
  big << 1000.0, 1001.0, 999.0, -5.0, 0.0, 5.0;
  const Matrix p = softmax_rows(t.constant(big)).value();
  CHECK(p.row(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p.allFinite());
  const Matrix l = logsumexp_rows(t.constant(big)).value();
  CHECK(l(0, 0) == doctest::Approx(1001.0 + std::log(1.0 + std::exp(-1.0) + std::exp(-2.0))).epsilon(1e-14));
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask(2, 3);
  mask << true, false, true, false, true, true;
  const Matrix lm = logsumexp_rows(t.constant(big), mask).value();
  CHECK(lm(0, 0) == doctest::Approx(1000.0 + std::log(1.0 + std::exp(-1.0))).epsilon(1e-14));
  CHECK(lm(1, 0) == doctest::Approx(5.0 + std::log(1.0 + std::exp(-5.0))).epsilon(1e-14));
}

TEST_CASE("broadcasting sums gradients over the broadcast axis") {
  Tape t;
  Var a = t.leaf(Matrix::Ones(3, 2));
  Var row = t.leaf(Matrix::Constant(1, 2, 2.0));
  Var col = t.leaf(Matrix::Constant(3, 1, 3.0));
  t.backward(sum(add(mul(a, row), col)));
  CHECK(row.grad() == Matrix::Constant(1, 2, 3.0));
  CHECK(col.grad() == Matrix::Constant(3, 1, 2.0));
  CHECK(a.grad() == Matrix::Constant(3, 2, 2.0));
}

TEST_CASE("finite differences agree with reverse mode on every primitive") {
  hypcd::Rng rng(17);
  const Matrix pos = random_matrix(3, 4, rng).cwiseAbs().array() + 0.5;
  const Matrix any = random_matrix(3, 4, rng);
  const Matrix small = random_matrix(3, 4, rng, 0.3);
  const Matrix other = random_matrix(4, 2, rng);
  const Matrix weights = random_matrix(3, 4, rng);

  struct Probe {
    std::string name;
    GraphFn f;
    Matrix x;
  };
  auto weighted = [weights](Tape& t, const Var& v) { return sum(mul(v, t.constant(weights))); };
  std::vector<Probe> probes = {
      {"add/sub/mul/div", [&](Tape& t, const Var& x) { return weighted(t, div(mul(add(x, x), sub(x, t.constant(pos))), add_scalar(mul(x, x), 1.0))); }, any},
      {"matmul/transpose", [&](Tape& t, const Var& x) { return sum(mul(matmul(x, t.constant(other)), matmul(x, t.constant(other)))) ; }, any},
      {"transpose", [&](Tape& t, const Var& x) { return sum(matmul(transpose(x), t.constant(weights))); }, any},
      {"tanh", [&](Tape& t, const Var& x) { return weighted(t, tanh(x)); }, any},
      {"arctanh", [&](Tape& t, const Var& x) { return weighted(t, arctanh(x)); }, small},
      {"exp/log", [&](Tape& t, const Var& x) { return weighted(t, add(exp(scale(x, 0.3)), log(x))); }, pos},
      {"sqrt", [&](Tape& t, const Var& x) { return weighted(t, hypcd::ad::sqrt(x)); }, pos},
      {"softplus", [&](Tape& t, const Var& x) { return weighted(t, softplus(x)); }, any},
      {"relu", [&](Tape& t, const Var& x) { return weighted(t, relu(x)); }, pos},
      {"maximum/minimum", [&](Tape& t, const Var& x) { return weighted(t, minimum(maximum(x, 0.6), 1.5)); }, pos},
      {"softmax", [&](Tape& t, const Var& x) { return weighted(t, softmax_rows(x)); }, any},
      {"log_softmax", [&](Tape& t, const Var& x) { return weighted(t, log_softmax_rows(x)); }, any},
      {"logsumexp", [&](Tape&, const Var& x) { return sum(mul(logsumexp_rows(x), logsumexp_rows(x))); }, any},
      {"rowwise_norm", [&](Tape&, const Var& x) { return sum(mul(rowwise_norm(x), rowwise_norm(x))); }, any},
      {"normalize_rows", [&](Tape& t, const Var& x) { return weighted(t, normalize_rows(x)); }, any},
      {"sum_rows/sum_cols/mean",
       [&](Tape&, const Var& x) { return add(sum(mul(sum_rows(x), sum_rows(x))), add(sum(mul(sum_cols(x), sum_cols(x))), mean(x))); },
       any},
      {"select/concat/slice/diagonal",
       [&](Tape& t, const Var& x) {
         const std::vector<Index> rows{2, 0, 2};
         Var s = select_rows(x, rows);
         const std::vector<Var> parts{s, slice_cols(x, 1, 2)};
         Var cat = concat_cols(parts);
         const std::vector<Var> vparts{x, x};
         Var stacked = concat_rows(vparts);
         return add(add(weighted(t, slice_cols(cat, 1, 4)), sum(mul(stacked, stacked))),
                    sum(mul(diagonal(matmul(x, transpose(x))), diagonal(matmul(x, transpose(x))))));
       },
       any},
  };
  for (const auto& p : probes) {
    CAPTURE(p.name);
    const GradCheckReport r = finite_diff_check(p.f, p.x);
    CHECK(r.pass);
    CHECK(r.max_rel_err < 1e-6);
  }
}

TEST_CASE("finite_diff_check rejects non-finite graphs") {
  const GraphFn f = [](Tape&, const Var& x) { return sum(log(x)); };
  CHECK_THROWS(finite_diff_check(f, Matrix::Zero(1, 1)));
}
