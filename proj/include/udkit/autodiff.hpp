#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "udkit/rng.hpp"
#include "udkit/tensor.hpp"

namespace udkit {

// Handle to a value recorded on a Graph.
struct Var {
  std::uint32_t id = 0;
};

// Single-use reverse-mode tape. Build the forward computation with the op
// methods, then call backward() once on a 1x1 result. Gradients of
// parameters are accumulated into Parameter::grad.
//
// In training mode, dropout draws from the supplied Rng; in eval mode it is
// the identity.
class Graph {
 public:
  explicit Graph(bool training = false, Rng* rng = nullptr);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const { return training_; }

  Var constant(Matrix value);
  // `trainable` = false records the parameter as a constant (no gradient).
  Var param(Parameter& p, bool trainable = true);

  const Matrix& value(Var v) const { return *nodes_[v.id].value; }
  // Gradient of the last backward() target w.r.t. v (zeros if untouched).
  Matrix grad(Var v) const;

  void backward(Var scalar);

  // Linear algebra
  Var matmul(Var a, Var b);     // a b
  Var matmul_nt(Var a, Var b);  // a b^T
  Var add(Var a, Var b);
  Var add_n(std::span<const Var> terms);
  Var add_row(Var a, Var row);   // row (1 x c) broadcast over rows of a
  Var add_col(Var a, Var col);   // col (r x 1) broadcast over columns of a
  Var add_const(Var a, const Matrix& offset);
  Var scale(Var a, double factor);
  Var scale_by(Var a, Var scalar);  // scalar is 1 x 1
  Var element(Var a, Eigen::Index row, Eigen::Index col);
  Var sum(Var a);

  // Nonlinearities and normalization
  Var gelu(Var a);
  Var softmax_rows(Var a);
  Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-12);
  Var dropout(Var a, double prob);

  // Indexing and reshaping
  Var gather_rows(Var table, std::span<const int> rows);
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(std::span<const Var> parts);
  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);

  // out(j, l) = sum_b a(j, l * width + b) * b(j, b); a is n x (L * width), b is n x width.
  Var blocked_row_dot(Var a, Var b);

  // Sum over rows of label-smoothed cross entropy. Row r's target puts
  // (1 - eps) on gold[r] and spreads eps uniformly over the row's valid
  // columns. `valid` (same shape as logits, nonzero = valid) may be null.
  Var cross_entropy(Var logits, std::span<const int> gold, double eps,
                    const Matrix* valid = nullptr);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix own_value;
    const Matrix* value = nullptr;
    Matrix own_grad;
    Matrix* grad = nullptr;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  Var push(Matrix value, bool needs_grad);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Matrix& grad_ref(Var v);
  const Matrix& upstream(Var v) { return grad_ref(v); }

  bool training_;
  Rng* rng_;
  std::deque<Node> nodes_;  // deque keeps node addresses stable
  std::unordered_map<const Parameter*, Var> param_vars_;
};

}  // namespace udkit
