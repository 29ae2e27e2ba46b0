#include "amc/autodiff.hpp"

#include "amc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace amc::ad {

const Matrix& Var::value() const { return tape_->node(id_).value; }
bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError("item() on non-scalar " + shape_string(v));
  return v(0, 0);
}

Var Tape::leaf(Matrix value, bool requires_grad, std::string name) {
  Node n;
  n.op = std::move(name);
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(std::string op, Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
    throw DimensionError("gradient shape " + shape_string(g) + " does not match value " + shape_string(n.value) +
                         " for op '" + n.op + "'");
  }
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
  const Node& r = nodes_[root.id()];
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw DimensionError("backward: root must be scalar, got " + shape_string(r.value));
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!r.requires_grad) return;
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, id);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape() || !a.valid()) throw std::invalid_argument("operands belong to different tapes");
  return *a.tape();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
}

const Matrix& grad_of(Tape& t, std::size_t id) { return t.node(id).grad; }
const Matrix& value_of(Tape& t, std::size_t id) { return t.node(id).value; }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_string(a.value()) + " * " + shape_string(b.value()));
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("matmul", kernels::gemm(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = grad_of(t, self);
    if (t.node(ia).requires_grad) t.accumulate(ia, kernels::gemm_nt(g, value_of(t, ib)));
    if (t.node(ib).requires_grad) t.accumulate(ib, kernels::gemm_tn(value_of(t, ia), g));
  });
}

Var sparse_matmul(std::shared_ptr<const CsrMatrix> a, Var x) {
  Tape& t = tape_of(x);
  if (a->cols != x.rows()) {
    throw DimensionError("sparse_matmul: " + std::to_string(a->rows) + "x" + std::to_string(a->cols) + " * " +
                         shape_string(x.value()));
  }
  const std::size_t ix = x.id();
  Matrix value = kernels::spmm(*a, x.value());
  return t.record("sparse_matmul", std::move(value), {ix}, [a = std::move(a), ix](Tape& t, std::size_t self) {
    t.accumulate(ix, kernels::spmm_transposed(*a, grad_of(t, self)));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("add", a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix g = grad_of(t, self);
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var add_row_bias(Var x, Var bias) {
  Tape& t = tape_of(x, bias);
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_row_bias: bias " + shape_string(bias.value()) + " for " + shape_string(x.value()));
  }
  const std::size_t ix = x.id(), ib = bias.id();
  Matrix value = x.value().rowwise() + bias.value().row(0);
  return t.record("add_row_bias", std::move(value), {ix, ib}, [ix, ib](Tape& t, std::size_t self) {
    const Matrix g = grad_of(t, self);
    t.accumulate(ix, g);
    t.accumulate(ib, g.colwise().sum());
  });
}

Var scale(Var x, double s) {
  Tape& t = tape_of(x);
  const std::size_t ix = x.id();
  return t.record("scale", x.value() * s, {ix}, [ix, s](Tape& t, std::size_t self) {
    t.accumulate(ix, grad_of(t, self) * s);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  const std::size_t ia = a.id(), ib = b.id();
  Matrix value = a.value().cwiseProduct(b.value());
  return t.record("mul", std::move(value), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix g = grad_of(t, self);
    if (t.node(ia).requires_grad) t.accumulate(ia, g.cwiseProduct(value_of(t, ib)));
    if (t.node(ib).requires_grad) t.accumulate(ib, g.cwiseProduct(value_of(t, ia)));
  });
}

Var relu(Var x) {
  Tape& t = tape_of(x);
  const std::size_t ix = x.id();
  Matrix value = x.value().cwiseMax(0.0);
  return t.record("relu", std::move(value), {ix}, [ix](Tape& t, std::size_t self) {
    const Matrix& in = value_of(t, ix);
    t.accumulate(ix, (in.array() > 0.0).select(grad_of(t, self), 0.0));
  });
}

Var prelu(Var x, Var slope) {
  Tape& t = tape_of(x, slope);
  if (slope.value().size() != 1) throw DimensionError("prelu: slope must be 1x1");
  const std::size_t ix = x.id(), is = slope.id();
  const double a = slope.value()(0, 0);
  Matrix value = (x.value().array() > 0.0).select(x.value(), a * x.value());
  return t.record("prelu", std::move(value), {ix, is}, [ix, is](Tape& t, std::size_t self) {
    const Matrix& in = value_of(t, ix);
    const Matrix& g = grad_of(t, self);
    const double a = value_of(t, is)(0, 0);
    if (t.node(ix).requires_grad) t.accumulate(ix, (in.array() > 0.0).select(g, a * g));
    if (t.node(is).requires_grad) {
      Matrix ds(1, 1);
      ds(0, 0) = (in.array() > 0.0).select(Matrix::Zero(in.rows(), in.cols()), g.cwiseProduct(in)).sum();
      t.accumulate(is, ds);
    }
  });
}

Var tanh(Var x) {
  Tape& t = tape_of(x);
  const std::size_t ix = x.id();
  Matrix value = x.value().array().tanh().matrix();
  return t.record("tanh", std::move(value), {ix}, [ix](Tape& t, std::size_t self) {
    const Matrix& y = value_of(t, self);
    t.accumulate(ix, grad_of(t, self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var exp(Var x) {
  Tape& t = tape_of(x);
  const std::size_t ix = x.id();
  Matrix value = x.value().array().exp().matrix();
  return t.record("exp", std::move(value), {ix}, [ix](Tape& t, std::size_t self) {
    t.accumulate(ix, grad_of(t, self).cwiseProduct(value_of(t, self)));
  });
}

Var log(Var x) {
  Tape& t = tape_of(x);
  if ((x.value().array() <= 0.0).any() || !x.value().allFinite()) {
    throw NumericalError("log: argument has non-positive or non-finite entries");
  }
  const std::size_t ix = x.id();
  Matrix value = x.value().array().log().matrix();
  return t.record("log", std::move(value), {ix}, [ix](Tape& t, std::size_t self) {
    t.accumulate(ix, grad_of(t, self).cwiseQuotient(value_of(t, ix)));
  });
}

Var row_softmax(Var x) {
  Tape& t = tape_of(x);
  const std::size_t ix = x.id();
  return t.record("row_softmax", kernels::row_softmax(x.value()), {ix}, [ix](Tape& t, std::size_t self) {
    const Matrix& y = value_of(t, self);
    const Matrix& g = grad_of(t, self);
    const Vector dots = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.cwiseProduct(g - dots.replicate(1, g.cols()));
    t.accumulate(ix, dx);
  });
}

Var row_l2_normalize(Var x, double eps) {
  Tape& t = tape_of(x);
  const std::size_t ix = x.id();
  return t.record("row_l2_normalize", kernels::row_l2_normalize(x.value(), eps), {ix},
                  [ix, eps](Tape& t, std::size_t self) {
                    const Matrix& in = value_of(t, ix);
                    const Matrix& y = value_of(t, self);
                    const Matrix& g = grad_of(t, self);
                    Matrix dx(g.rows(), g.cols());
                    for (Index i = 0; i < g.rows(); ++i) {
                      const double norm = in.row(i).norm();
                      if (norm > eps) {
                        dx.row(i) = (g.row(i) - y.row(i) * y.row(i).dot(g.row(i))) / norm;
                      } else {
                        dx.row(i) = g.row(i) / eps;
                      }
                    }
                    t.accumulate(ix, dx);
                  });
}

Var transpose_dot(Var x, Var y) {
  Tape& t = tape_of(x, y);
  if (x.cols() != y.cols()) {
    throw DimensionError("transpose_dot: " + shape_string(x.value()) + " vs " + shape_string(y.value()));
  }
  const std::size_t ix = x.id(), iy = y.id();
  return t.record("transpose_dot", kernels::gemm_nt(x.value(), y.value()), {ix, iy},
                  [ix, iy](Tape& t, std::size_t self) {
                    const Matrix& g = grad_of(t, self);
                    if (t.node(ix).requires_grad) t.accumulate(ix, kernels::gemm(g, value_of(t, iy)));
                    if (t.node(iy).requires_grad) t.accumulate(iy, kernels::gemm_tn(g, value_of(t, ix)));
                  });
}

Var mean_all(Var x) {
  Tape& t = tape_of(x);
  const std::size_t ix = x.id();
  if (x.value().size() == 0) throw DimensionError("mean_all of empty matrix");
  Matrix value(1, 1);
  value(0, 0) = x.value().mean();
  return t.record("mean_all", std::move(value), {ix}, [ix](Tape& t, std::size_t self) {
    const Matrix& in = value_of(t, ix);
    const double g = grad_of(t, self)(0, 0) / static_cast<double>(in.size());
    t.accumulate(ix, Matrix::Constant(in.rows(), in.cols(), g));
  });
}

Var sum_all(Var x) {
  Tape& t = tape_of(x);
  const std::size_t ix = x.id();
  Matrix value(1, 1);
  value(0, 0) = x.value().sum();
  return t.record("sum_all", std::move(value), {ix}, [ix](Tape& t, std::size_t self) {
    const Matrix& in = value_of(t, ix);
    t.accumulate(ix, Matrix::Constant(in.rows(), in.cols(), grad_of(t, self)(0, 0)));
  });
}

Var col_mean(Var x) {
  Tape& t = tape_of(x);
  const std::size_t ix = x.id();
  if (x.rows() == 0) throw DimensionError("col_mean of empty matrix");
  Matrix value = x.value().colwise().mean();
  return t.record("col_mean", std::move(value), {ix}, [ix](Tape& t, std::size_t self) {
    const Matrix& in = value_of(t, ix);
    const Matrix g = grad_of(t, self) / static_cast<double>(in.rows());
    t.accumulate(ix, g.replicate(in.rows(), 1));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const Index rows = parts.front().rows();
  Index cols = 0;
  std::vector<std::size_t> ids;
  std::vector<Index> widths;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("concat_cols: operands belong to different tapes");
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    ids.push_back(p.id());
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Matrix value(rows, cols);
  Index offset = 0;
  for (const Var& p : parts) {
    value.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return t.record("concat_cols", std::move(value), ids, [ids, widths](Tape& t, std::size_t self) {
    const Matrix& g = grad_of(t, self);
    Index offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.node(ids[k]).requires_grad) t.accumulate(ids[k], g.middleCols(offset, widths[k]));
      offset += widths[k];
    }
  });
}

Var mask_cols(Var x, const std::vector<double>& mask) {
  Tape& t = tape_of(x);
  if (static_cast<Index>(mask.size()) != x.cols()) {
    throw DimensionError("mask_cols: mask length " + std::to_string(mask.size()) + " for " + shape_string(x.value()));
  }
  const RowVector m = Eigen::Map<const RowVector>(mask.data(), static_cast<Index>(mask.size()));
  const std::size_t ix = x.id();
  Matrix value = x.value().array().rowwise() * m.array();
  return t.record("mask_cols", std::move(value), {ix}, [ix, m](Tape& t, std::size_t self) {
    Matrix g = grad_of(t, self).array().rowwise() * m.array();
    t.accumulate(ix, g);
  });
}

FiniteDiffReport finite_diff_check(const ScalarFunction& f, const std::vector<Matrix>& params, double eps) {
  auto evaluate = [&](const std::vector<Matrix>& p) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Matrix& m : p) leaves.push_back(tape.leaf(m, false));
    const double v = f(tape, leaves).item();
    if (!std::isfinite(v)) throw NumericalError("finite_diff_check: non-finite function value");
    return v;
  };

  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Matrix& m : params) leaves.push_back(tape.leaf(m, true));
    Var root = f(tape, leaves);
    if (!std::isfinite(root.item())) throw NumericalError("finite_diff_check: non-finite function value");
    tape.backward(root);
    for (const Var& v : leaves) {
      analytic.push_back(tape.grad(v));
      if (!analytic.back().allFinite()) throw NumericalError("finite_diff_check: non-finite analytic gradient");
    }
  }

  FiniteDiffReport report;
  std::vector<Matrix> probe = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Index e = 0; e < params[p].size(); ++e) {
      const double original = params[p].data()[e];
      probe[p].data()[e] = original + eps;
      const double plus = evaluate(probe);
      probe[p].data()[e] = original - eps;
      const double minus = evaluate(probe);
      probe[p].data()[e] = original;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[p].data()[e];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      if (err > report.max_rel_error) report = {err, p, e, a, numeric};
    }
  }
  return report;
}

}  // namespace amc::ad
