#pragma once

// Minimal reverse-mode differentiation over dense double matrices.
//
// A Tape records nodes in creation order, which is already a topological
// order, so backward() is a single reverse sweep. Leaves keep their gradient
// across backward() calls (accumulation); intermediate gradients are reset at
// the start of every sweep.

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace hypcd::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class Tape;

/// Handle to a recorded node. Cheap to copy, valid while its Tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the gradient of the root w.r.t. this node's value and must
  /// push contributions into the parents via accumulate().
  using Backward = std::function<void(const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable input; gradient accumulates across backward() calls.
  Var leaf(Matrix value);
  /// Input that never receives a gradient.
  Var constant(Matrix value);
  /// Record an operation result. The backward rule only runs when at least
  /// one parent requires a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, std::span<const Var> parents, Backward backward);

  /// Add `g` into the gradient of `v` (no-op for constants).
  void accumulate(const Var& v, const Matrix& g);

  /// Reverse sweep from a 1x1 root. Throws std::invalid_argument otherwise.
  void backward(const Var& root);
  /// Zero every leaf gradient.
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool is_leaf = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
  Matrix empty_;
};

// ---------------------------------------------------------------------------
// Primitives. Binary elementwise ops broadcast a 1-row or 1-column operand
// against the other; gradients are summed back over the broadcast axis.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

/// Sum of all entries (1x1).
Var sum(const Var& a);
/// Mean of all entries (1x1).
Var mean(const Var& a);
/// Per-row sum, n x 1.
Var sum_rows(const Var& a);
/// Per-column sum, 1 x m.
Var sum_cols(const Var& a);
/// Euclidean norm of every row, n x 1. Zero rows get a zero gradient.
Var rowwise_norm(const Var& a);

Var tanh(const Var& a);
/// Inputs with |x| > 1 throw std::domain_error; |x| in [1 - 1e-15, 1] is
/// clamped to 1 - 1e-15 and the derivative is taken at the clamped value.
Var arctanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
/// sqrt(max(x, 0)); derivative is zero wherever the value is zero.
Var sqrt(const Var& a);
Var relu(const Var& a);
/// log(1 + exp(x)), evaluated stably.
Var softplus(const Var& a);
Var elementwise_mul(const Var& a, const Var& b);
/// Elementwise max(x, floor). Gradient flows only where x > floor.
Var maximum(const Var& a, double floor);
/// Elementwise min(x, ceil). Gradient flows only where x < ceil.
Var minimum(const Var& a, double ceil);

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
/// Row-wise log-sum-exp, n x 1.
Var logsumexp_rows(const Var& a);
/// Row-wise log-sum-exp over entries where `include` is true. Every row
/// must include at least one entry.
Var logsumexp_rows(const Var& a, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& include);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Index start, Index count);
Var select_rows(const Var& a, std::span<const Index> rows);
/// Diagonal of a square matrix, n x 1.
Var diagonal(const Var& a);
/// Constant copy; cuts the gradient path.
Var detach(const Var& a);

/// a / max(rowwise_norm(a), eps).
Var normalize_rows(const Var& a, double eps = 1e-12);

// ---------------------------------------------------------------------------
// Finite-difference verification.

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  Index worst_row = 0;
  Index worst_col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Builds a scalar graph from the leaf standing in for x.
using GraphFn = std::function<Var(Tape&, const Var& x)>;

/// Central differences per coordinate against the reverse-mode gradient.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8); pass iff the maximum is
/// below tol. Throws std::domain_error if f is non-finite at a probe.
GradCheckReport finite_diff_check(const GraphFn& f, const Matrix& x, double h = 1e-5,
                                  double tol = 1e-4);

}  // namespace hypcd::ad
