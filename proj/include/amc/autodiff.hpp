#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records nodes in creation order, which is a topological order
// since every node's inputs already exist when it is recorded. backward()
// walks the tape in reverse and accumulates gradients into every node that
// (transitively) depends on a requires_grad leaf.

#include "amc/graph.hpp"
#include "amc/types.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace amc::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the Tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;
  /// Scalar value of a 1x1 node.
  double item() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the tape and the id of the node whose gradient is ready.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  struct Node {
    std::string op;
    Matrix value;
    Matrix grad;  // empty until something flows into it
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Parameter or input leaf.
  Var leaf(Matrix value, bool requires_grad = true, std::string name = "leaf");
  Var constant(Matrix value) { return leaf(std::move(value), false, "constant"); }

  /// Records an operation node. `backward` is only stored (and only ever
  /// called) when some input requires a gradient.
  Var record(std::string op, Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Populates gradients of every requires_grad node reachable from `root`.
  /// Throws DimensionError unless root is 1x1.
  void backward(Var root);

  /// Gradient of a node; a zero matrix when nothing flowed into it.
  Matrix grad(Var v) const;

  /// Adds `g` into the gradient of node `id` if it requires one.
  void accumulate(std::size_t id, const Matrix& g);

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

// Primitives. Every shape violation throws DimensionError.

Var matmul(Var a, Var b);
/// a * x for a fixed sparse matrix `a` (no gradient flows to `a`).
Var sparse_matmul(std::shared_ptr<const CsrMatrix> a, Var x);
Var add(Var a, Var b);
/// x + 1*bias for a 1 x cols bias row.
Var add_row_bias(Var x, Var bias);
Var scale(Var x, double s);
/// Elementwise product of equal shapes.
Var mul(Var a, Var b);
Var relu(Var x);
/// max(x,0) + slope*min(x,0) with a learned 1x1 slope.
Var prelu(Var x, Var slope);
Var tanh(Var x);
Var exp(Var x);
/// Throws NumericalError on any non-positive entry.
Var log(Var x);
Var row_softmax(Var x);
Var row_l2_normalize(Var x, double eps = 1e-12);
/// x * y^T (pairwise row similarities).
Var transpose_dot(Var x, Var y);
Var mean_all(Var x);
Var sum_all(Var x);
/// 1 x cols row of column means.
Var col_mean(Var x);
Var concat_cols(std::span<const Var> parts);
/// Multiplies column j by mask[j] (a fixed 0/1 vector).
Var mask_cols(Var x, const std::vector<double>& mask);

/// Scalar-valued function of a parameter list, rebuilt on a fresh tape.
using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  Index worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients with central differences of step `eps`.
/// Error per entry is |analytic - numeric| / max(1, |numeric|).
/// Throws NumericalError if any evaluation is non-finite.
FiniteDiffReport finite_diff_check(const ScalarFunction& f, const std::vector<Matrix>& params, double eps = 1e-4);

}  // namespace amc::ad
