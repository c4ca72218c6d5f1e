#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "oepg/matrix.hpp"
#include "oepg/params.hpp"

namespace oepg {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const { return value()[0]; }
};

// Reverse-mode gradient tape over dense matrices. Nodes are appended in
// evaluation order, so a reverse sweep is a valid topological order.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Var constant(Matrix value);
  // Leaf whose gradient is added into `store.grad(name)` by backward().
  Var parameter(ParameterStore& store, const std::string& name);
  // Leaf whose gradient can be read back with grad().
  Var leaf(Matrix value);

  Var push(Matrix value, std::vector<std::size_t> inputs, Backward backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  // Gradient accumulator of a node (allocated on first use).
  Matrix& grad_slot(std::size_t id);
  const Matrix& grad(Var v) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  void backward(Var scalar_output);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
    ParameterStore* store = nullptr;
    std::string param_name;
  };
  std::vector<Node> nodes_;
};

// Differentiable operations. Shapes follow the Matrix conventions: vectors
// are 1 x d rows, per-row scalars are n x 1 columns, scalars are 1 x 1.
namespace ad {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
// a (n x d) + bias (1 x d) broadcast over rows.
Var add_row(Var a, Var bias);
// Repeats a 1 x d row n times.
Var broadcast_rows(Var row, std::size_t n);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
// a (any shape) times scalar s (1 x 1).
Var mul_scalar(Var a, Var s);
Var transpose(Var a);
Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var select_rows(Var a, std::span<const std::size_t> rows);
// Mean over the listed rows -> 1 x d.
Var mean_rows(Var a, std::span<const std::size_t> rows);
// Per-row squared l2 norm -> n x 1.
Var row_sqnorm(Var a);
// Each row divided by max(||row||, eps).
Var row_normalize(Var a, double eps);
// Each row i multiplied by w(i, 0).
Var row_scale(Var a, Var w);
// Softmax over all entries of an n x 1 column.
Var softmax(Var a);
Var softplus(Var a);
// Sparse GIN aggregation: out_i = h_i + sum_{j in neighbors[i]} h_j.
// `neighbors` must be symmetric; the backward pass relies on it.
Var aggregate(Var h, const std::vector<std::vector<std::size_t>>& neighbors);
Var sum_all(Var a);
// Sum of a list of scalars.
Var sum_scalars(std::span<const Var> xs);
Var dot(Var a, Var b);
// Cosine similarity of two 1 x d rows; throws NumericError on zero norm.
Var cosine(Var a, Var b);
// log(sigmoid(x)) of a scalar, computed stably.
Var log_sigmoid(Var x);

}  // namespace ad

}  // namespace oepg
