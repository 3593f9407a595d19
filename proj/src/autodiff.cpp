#include "hypcd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace hypcd::ad {

namespace {

constexpr double kArctanhLimit = 1.0 - 1e-15;

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

Index broadcast_dim(Index a, Index b, const char* op) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw std::invalid_argument(std::string(op) + ": incompatible dimensions " + std::to_string(a) +
                              " and " + std::to_string(b));
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// Sum a gradient of the broadcast shape back onto the operand's shape.
Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix r = g;
  if (rows == 1 && r.rows() != 1) r = r.colwise().sum().eval();
  if (cols == 1 && r.cols() != 1) r = r.rowwise().sum().eval();
  return r;
}

void check_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands recorded on different tapes");
}

template <typename Fwd, typename BackA, typename BackB>
Var binary(const Var& a, const Var& b, const char* name, Fwd fwd, BackA back_a, BackB back_b) {
  check_same_tape(a, b);
  const Index rows = broadcast_dim(a.rows(), b.rows(), name);
  const Index cols = broadcast_dim(a.cols(), b.cols(), name);
  const Matrix av = expand(a.value(), rows, cols);
  const Matrix bv = expand(b.value(), rows, cols);
  Matrix out = fwd(av.array(), bv.array()).matrix();
  Tape& t = a.tape();
  return t.record(std::move(out), {a, b}, [=, &t](const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, reduce_to(back_a(g.array(), av.array(), bv.array()).matrix(), a.rows(), a.cols()));
    if (b.requires_grad()) t.accumulate(b, reduce_to(back_b(g.array(), av.array(), bv.array()).matrix(), b.rows(), b.cols()));
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Tape

const Matrix& Var::value() const { return tape_->nodes_[id_].value; }

const Matrix& Var::grad() const {
  const auto& n = tape_->nodes_[id_];
  return n.grad.size() == 0 && n.value.size() != 0 ? tape_->empty_ : n.grad;
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw std::invalid_argument("scalar() on " + shape_str(v) + " node");
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->nodes_[id_].requires_grad; }

Var Tape::leaf(Matrix value) {
  Node n;
  n.grad = Matrix::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (&p.tape() != this) throw std::invalid_argument("parent recorded on a different tape");
    n.requires_grad = n.requires_grad || p.requires_grad();
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols())
    throw std::logic_error("gradient shape " + shape_str(g) + " does not match value " + shape_str(n.value));
  if (n.grad.size() == 0 && n.value.size() != 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(const Var& root) {
  if (&root.tape() != this) throw std::invalid_argument("root recorded on a different tape");
  if (root.rows() != 1 || root.cols() != 1)
    throw std::invalid_argument("backward() needs a scalar root, got " + shape_str(root.value()));
  for (Node& n : nodes_)
    if (!n.is_leaf) n.grad.resize(0, 0);
  if (!nodes_[root.id()].requires_grad) return;
  accumulate(root, Matrix::Ones(1, 1));
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.is_leaf || !n.requires_grad || n.grad.size() == 0) continue;
    n.backward(n.grad);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_)
    if (n.is_leaf && n.requires_grad) n.grad.setZero();
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, "add", [](const auto& x, const auto& y) { return x + y; },
      [](const auto& g, const auto&, const auto&) { return g; },
      [](const auto& g, const auto&, const auto&) { return g; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, "sub", [](const auto& x, const auto& y) { return x - y; },
      [](const auto& g, const auto&, const auto&) { return g; },
      [](const auto& g, const auto&, const auto&) { return -g; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, "mul", [](const auto& x, const auto& y) { return x * y; },
      [](const auto& g, const auto&, const auto& y) { return g * y; },
      [](const auto& g, const auto& x, const auto&) { return g * x; });
}

Var elementwise_mul(const Var& a, const Var& b) { return mul(a, b); }

Var div(const Var& a, const Var& b) {
  return binary(
      a, b, "div", [](const auto& x, const auto& y) { return x / y; },
      [](const auto& g, const auto&, const auto& y) { return g / y; },
      [](const auto& g, const auto& x, const auto& y) { return -g * x / (y * y); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
  Tape& t = a.tape();
  return t.record(a.value() * s, {a}, [=, &t](const Matrix& g) { t.accumulate(a, g * s); });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = a.tape();
  Matrix out = (a.value().array() + s).matrix();
  return t.record(std::move(out), {a}, [=, &t](const Matrix& g) { t.accumulate(a, g); });
}

// ---------------------------------------------------------------------------
// Linear algebra and reductions

Var matmul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: " + shape_str(a.value()) + " times " + shape_str(b.value()));
  Tape& t = a.tape();
  return t.record(a.value() * b.value(), {a, b}, [=, &t](const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

Var transpose(const Var& a) {
  Tape& t = a.tape();
  return t.record(a.value().transpose(), {a}, [=, &t](const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var sum(const Var& a) {
  Tape& t = a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [=, &t](const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean of an empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var sum_rows(const Var& a) {
  Tape& t = a.tape();
  return t.record(a.value().rowwise().sum(), {a}, [=, &t](const Matrix& g) {
    t.accumulate(a, g.replicate(1, a.cols()));
  });
}

Var sum_cols(const Var& a) {
  Tape& t = a.tape();
  return t.record(a.value().colwise().sum(), {a}, [=, &t](const Matrix& g) {
    t.accumulate(a, g.replicate(a.rows(), 1));
  });
}

Var rowwise_norm(const Var& a) {
  Tape& t = a.tape();
  Matrix norms = a.value().rowwise().norm();
  return t.record(norms, {a}, [=, &t](const Matrix& g) {
    Matrix ga = a.value();
    for (Index i = 0; i < ga.rows(); ++i) {
      const double n = norms(i, 0);
      if (n > 0.0)
        ga.row(i) *= g(i, 0) / n;
      else
        ga.row(i).setZero();
    }
    t.accumulate(a, ga);
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

Var tanh(const Var& a) {
  Tape& t = a.tape();
  Matrix y = a.value().array().tanh().matrix();
  return t.record(y, {a}, [=, &t](const Matrix& g) {
    t.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var arctanh(const Var& a) {
  const Matrix& x = a.value();
  Matrix xc(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double v = x(i, j);
      if (!(std::abs(v) <= 1.0)) throw std::domain_error("arctanh: argument outside [-1, 1]");
      xc(i, j) = std::clamp(v, -kArctanhLimit, kArctanhLimit);
    }
  }
  Matrix y = xc.unaryExpr([](double v) { return std::atanh(v); });
  Tape& t = a.tape();
  return t.record(std::move(y), {a}, [=, &t](const Matrix& g) {
    t.accumulate(a, (g.array() / (1.0 - xc.array().square())).matrix());
  });
}

Var exp(const Var& a) {
  Tape& t = a.tape();
  Matrix y = a.value().array().exp().matrix();
  return t.record(y, {a}, [=, &t](const Matrix& g) { t.accumulate(a, (g.array() * y.array()).matrix()); });
}

Var log(const Var& a) {
  if ((a.value().array() < 0.0).any()) throw std::domain_error("log of a negative value");
  Tape& t = a.tape();
  return t.record(a.value().array().log().matrix(), {a}, [=, &t](const Matrix& g) {
    t.accumulate(a, (g.array() / a.value().array()).matrix());
  });
}

Var sqrt(const Var& a) {
  Tape& t = a.tape();
  Matrix y = a.value().cwiseMax(0.0).cwiseSqrt();
  return t.record(y, {a}, [=, &t](const Matrix& g) {
    Matrix ga = Matrix::Zero(y.rows(), y.cols());
    for (Index j = 0; j < y.cols(); ++j)
      for (Index i = 0; i < y.rows(); ++i)
        if (y(i, j) > 0.0) ga(i, j) = 0.5 * g(i, j) / y(i, j);
    t.accumulate(a, ga);
  });
}

Var relu(const Var& a) {
  Tape& t = a.tape();
  return t.record(a.value().cwiseMax(0.0), {a}, [=, &t](const Matrix& g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

Var softplus(const Var& a) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  Matrix y = x.unaryExpr([](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
  return t.record(std::move(y), {a}, [=, &t](const Matrix& g) {
    Matrix sig = a.value().unaryExpr([](double v) {
      return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    });
    t.accumulate(a, (g.array() * sig.array()).matrix());
  });
}

Var maximum(const Var& a, double floor) {
  Tape& t = a.tape();
  return t.record(a.value().cwiseMax(floor), {a}, [=, &t](const Matrix& g) {
    t.accumulate(a, (a.value().array() > floor).select(g.array(), 0.0).matrix());
  });
}

Var minimum(const Var& a, double ceil) {
  Tape& t = a.tape();
  return t.record(a.value().cwiseMin(ceil), {a}, [=, &t](const Matrix& g) {
    t.accumulate(a, (a.value().array() < ceil).select(g.array(), 0.0).matrix());
  });
}

// ---------------------------------------------------------------------------
// Row-wise normalisers

namespace {

Matrix softmax_of(const Matrix& x) {
  Matrix y = x;
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

}  // namespace

Var softmax_rows(const Var& a) {
  Tape& t = a.tape();
  Matrix y = softmax_of(a.value());
  return t.record(y, {a}, [=, &t](const Matrix& g) {
    const Eigen::VectorXd dot = (g.array() * y.array()).rowwise().sum();
    Matrix ga = y.array() * (g.colwise() - dot).array();
    t.accumulate(a, ga);
  });
}

Var log_softmax_rows(const Var& a) {
  Tape& t = a.tape();
  const Matrix& x = a.value();
  Matrix y = x;
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    y.row(i).array() -= lse;
  }
  Matrix p = y.array().exp().matrix();
  return t.record(std::move(y), {a}, [=, &t](const Matrix& g) {
    const Eigen::VectorXd gs = g.rowwise().sum();
    Matrix ga = g - (p.array().colwise() * gs.array()).matrix();
    t.accumulate(a, ga);
  });
}

Var logsumexp_rows(const Var& a) {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> all =
      Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(a.rows(), a.cols(), true);
  return logsumexp_rows(a, all);
}

Var logsumexp_rows(const Var& a, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& include) {
  const Matrix& x = a.value();
  if (include.rows() != x.rows() || include.cols() != x.cols())
    throw std::invalid_argument("logsumexp_rows: mask shape mismatch");
  Matrix out(x.rows(), 1);
  Matrix w = Matrix::Zero(x.rows(), x.cols());  // softmax weights over included entries
  for (Index i = 0; i < x.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < x.cols(); ++j)
      if (include(i, j)) m = std::max(m, x(i, j));
    if (!std::isfinite(m)) throw std::domain_error("logsumexp_rows: row " + std::to_string(i) + " has no finite included entry");
    double s = 0.0;
    for (Index j = 0; j < x.cols(); ++j)
      if (include(i, j)) {
        w(i, j) = std::exp(x(i, j) - m);
        s += w(i, j);
      }
    w.row(i) /= s;
    out(i, 0) = m + std::log(s);
  }
  Tape& t = a.tape();
  return t.record(std::move(out), {a}, [=, &t](const Matrix& g) {
    t.accumulate(a, (w.array().colwise() * g.col(0).array()).matrix());
  });
}

// ---------------------------------------------------------------------------
// Structural ops

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  Tape& t = parts[0].tape();
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [ps, &t](const Matrix& g) {
    Index off = 0;
    for (const Var& p : ps) {
      if (p.requires_grad()) t.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  Tape& t = parts[0].tape();
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [ps, &t](const Matrix& g) {
    Index off = 0;
    for (const Var& p : ps) {
      if (p.requires_grad()) t.accumulate(p, g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: range out of bounds");
  Tape& t = a.tape();
  return t.record(a.value().middleCols(start, count), {a}, [=, &t](const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    ga.middleCols(start, count) = g;
    t.accumulate(a, ga);
  });
}

Var select_rows(const Var& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= a.rows()) throw std::invalid_argument("select_rows: index out of range");
    out.row(static_cast<Index>(k)) = a.value().row(rows[k]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  Tape& t = a.tape();
  return t.record(std::move(out), {a}, [=, &t](const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) ga.row(idx[k]) += g.row(static_cast<Index>(k));
    t.accumulate(a, ga);
  });
}

Var diagonal(const Var& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("diagonal: matrix is not square");
  Tape& t = a.tape();
  return t.record(a.value().diagonal(), {a}, [=, &t](const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    ga.diagonal() = g.col(0);
    t.accumulate(a, ga);
  });
}

Var detach(const Var& a) { return a.tape().constant(a.value()); }

Var normalize_rows(const Var& a, double eps) { return div(a, maximum(rowwise_norm(a), eps)); }

// ---------------------------------------------------------------------------

GradCheckReport finite_diff_check(const GraphFn& f, const Matrix& x, double h, double tol) {
  Matrix analytic;
  {
    Tape tape;
    Var leaf = tape.leaf(x);
    Var root = f(tape, leaf);
    if (!std::isfinite(root.scalar())) throw std::domain_error("finite_diff_check: non-finite value at x");
    tape.backward(root);
    analytic = leaf.grad();
  }
  auto eval = [&](const Matrix& at) {
    Tape tape;
    Var leaf = tape.constant(at);
    const double v = f(tape, leaf).scalar();
    if (!std::isfinite(v)) throw std::domain_error("finite_diff_check: non-finite value at a probe point");
    return v;
  };
  GradCheckReport rep;
  Matrix probe = x;
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      probe(i, j) = x(i, j) + h;
      const double fp = eval(probe);
      probe(i, j) = x(i, j) - h;
      const double fm = eval(probe);
      probe(i, j) = x(i, j);
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic(i, j);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > rep.max_rel_err || (i == 0 && j == 0)) {
        rep.max_rel_err = rel;
        rep.worst_row = i;
        rep.worst_col = j;
        rep.analytic = a;
        rep.numeric = numeric;
      }
    }
  }
  rep.pass = rep.max_rel_err < tol;
  return rep;
}

}  // namespace hypcd::ad
