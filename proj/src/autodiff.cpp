#include "udkit/autodiff.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace udkit {
namespace {

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) +
                     " differ");
  }
}

}  // namespace

Graph::Graph(bool training, Rng* rng) : training_(training), rng_(rng) {
  if (training_ && rng_ == nullptr) throw std::invalid_argument("training graph needs an Rng");
}

Var Graph::push(Matrix value, bool needs_grad) {
  Node node;
  node.own_value = std::move(value);
  node.needs_grad = needs_grad;
  nodes_.push_back(std::move(node));
  auto& back = nodes_.back();
  back.value = &back.own_value;
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::constant(Matrix value) { return push(std::move(value), false); }

Var Graph::param(Parameter& p, bool trainable) {
  if (auto it = param_vars_.find(&p); it != param_vars_.end() && needs(it->second) == trainable) {
    return it->second;
  }
  Node node;
  node.value = &p.value;
  node.needs_grad = trainable;
  if (trainable) node.grad = &p.grad;
  nodes_.push_back(std::move(node));
  Var v{static_cast<std::uint32_t>(nodes_.size() - 1)};
  param_vars_[&p] = v;
  return v;
}

Matrix& Graph::grad_ref(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad == nullptr) {
    n.own_grad = Matrix::Zero(n.value->rows(), n.value->cols());
    n.grad = &n.own_grad;
  }
  return *n.grad;
}

Matrix Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad == nullptr) return Matrix::Zero(n.value->rows(), n.value->cols());
  return *n.grad;
}

void Graph::backward(Var scalar) {
  const Matrix& out = value(scalar);
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("backward: target must be 1x1, got " + shape_string(out));
  }
  if (!needs(scalar)) return;
  grad_ref(scalar)(0, 0) += 1.0;
  for (std::uint32_t id = scalar.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && n.needs_grad && n.grad != nullptr) n.backward();
  }
}

Var Graph::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: shapes " + shape_string(av) + " and " + shape_string(bv) +
                     " are incompatible");
  }
  Var out = push(av * bv, needs(a) || needs(b));
  nodes_[out.id].backward = [this, a, b, out] {
    const Matrix& g = upstream(out);
    if (needs(a)) grad_ref(a).noalias() += g * value(b).transpose();
    if (needs(b)) grad_ref(b).noalias() += value(a).transpose() * g;
  };
  return out;
}

Var Graph::matmul_nt(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_nt: shapes " + shape_string(av) + " and " + shape_string(bv) +
                     " are incompatible");
  }
  Var out = push(av * bv.transpose(), needs(a) || needs(b));
  nodes_[out.id].backward = [this, a, b, out] {
    const Matrix& g = upstream(out);
    if (needs(a)) grad_ref(a).noalias() += g * value(b);
    if (needs(b)) grad_ref(b).noalias() += g.transpose() * value(a);
  };
  return out;
}

Var Graph::add(Var a, Var b) {
  require_same_shape("add", value(a), value(b));
  Var out = push(value(a) + value(b), needs(a) || needs(b));
  nodes_[out.id].backward = [this, a, b, out] {
    const Matrix& g = upstream(out);
    if (needs(a)) grad_ref(a) += g;
    if (needs(b)) grad_ref(b) += g;
  };
  return out;
}

Var Graph::add_n(std::span<const Var> terms) {
  if (terms.empty()) throw ShapeError("add_n: no terms");
  Matrix total = value(terms[0]);
  bool any = needs(terms[0]);
  for (std::size_t i = 1; i < terms.size(); ++i) {
    require_same_shape("add_n", total, value(terms[i]));
    total += value(terms[i]);
    any = any || needs(terms[i]);
  }
  Var out = push(std::move(total), any);
  std::vector<Var> parts(terms.begin(), terms.end());
  nodes_[out.id].backward = [this, parts, out] {
    const Matrix& g = upstream(out);
    for (Var p : parts) {
      if (needs(p)) grad_ref(p) += g;
    }
  };
  return out;
}

Var Graph::add_row(Var a, Var row) {
  const Matrix& av = value(a);
  const Matrix& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_row: shapes " + shape_string(av) + " and " + shape_string(rv) +
                     " are incompatible");
  }
  Matrix result = av;
  result.rowwise() += rv.row(0);
  Var out = push(std::move(result), needs(a) || needs(row));
  nodes_[out.id].backward = [this, a, row, out] {
    const Matrix& g = upstream(out);
    if (needs(a)) grad_ref(a) += g;
    if (needs(row)) grad_ref(row) += g.colwise().sum();
  };
  return out;
}

Var Graph::add_col(Var a, Var col) {
  const Matrix& av = value(a);
  const Matrix& cv = value(col);
  if (cv.cols() != 1 || cv.rows() != av.rows()) {
    throw ShapeError("add_col: shapes " + shape_string(av) + " and " + shape_string(cv) +
                     " are incompatible");
  }
  Matrix result = av;
  result.colwise() += cv.col(0);
  Var out = push(std::move(result), needs(a) || needs(col));
  nodes_[out.id].backward = [this, a, col, out] {
    const Matrix& g = upstream(out);
    if (needs(a)) grad_ref(a) += g;
    if (needs(col)) grad_ref(col) += g.rowwise().sum();
  };
  return out;
}

Var Graph::add_const(Var a, const Matrix& offset) {
  require_same_shape("add_const", value(a), offset);
  Var out = push(value(a) + offset, needs(a));
  nodes_[out.id].backward = [this, a, out] { grad_ref(a) += upstream(out); };
  return out;
}

Var Graph::scale(Var a, double factor) {
  Var out = push(value(a) * factor, needs(a));
  nodes_[out.id].backward = [this, a, out, factor] { grad_ref(a) += factor * upstream(out); };
  return out;
}

Var Graph::scale_by(Var a, Var scalar) {
  const Matrix& sv = value(scalar);
  if (sv.rows() != 1 || sv.cols() != 1) {
    throw ShapeError("scale_by: scalar has shape " + shape_string(sv));
  }
  Var out = push(value(a) * sv(0, 0), needs(a) || needs(scalar));
  nodes_[out.id].backward = [this, a, scalar, out] {
    const Matrix& g = upstream(out);
    if (needs(a)) grad_ref(a) += value(scalar)(0, 0) * g;
    if (needs(scalar)) grad_ref(scalar)(0, 0) += g.cwiseProduct(value(a)).sum();
  };
  return out;
}

Var Graph::element(Var a, Eigen::Index row, Eigen::Index col) {
  const Matrix& av = value(a);
  if (row < 0 || col < 0 || row >= av.rows() || col >= av.cols()) {
    throw ShapeError("element: index (" + std::to_string(row) + ", " + std::to_string(col) +
                     ") outside " + shape_string(av));
  }
  Matrix v(1, 1);
  v(0, 0) = av(row, col);
  Var out = push(std::move(v), needs(a));
  nodes_[out.id].backward = [this, a, out, row, col] { grad_ref(a)(row, col) += upstream(out)(0, 0); };
  return out;
}

Var Graph::sum(Var a) {
  Matrix v(1, 1);
  v(0, 0) = value(a).sum();
  Var out = push(std::move(v), needs(a));
  nodes_[out.id].backward = [this, a, out] { grad_ref(a).array() += upstream(out)(0, 0); };
  return out;
}

Var Graph::gelu(Var a) {
  const Matrix& x = value(a);
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    y.data()[i] = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  }
  Var out = push(std::move(y), needs(a));
  nodes_[out.id].backward = [this, a, out] {
    const Matrix& x = value(a);
    const Matrix& g = upstream(out);
    Matrix& gx = grad_ref(a);
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = x.data()[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      gx.data()[i] += g.data()[i] * (cdf + v * pdf);
    }
  };
  return out;
}

Var Graph::softmax_rows(Var a) {
  const Matrix& x = value(a);
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      y(r, c) = std::exp(x(r, c) - mx);
      z += y(r, c);
    }
    y.row(r) /= z;
  }
  Var out = push(std::move(y), needs(a));
  nodes_[out.id].backward = [this, a, out] {
    const Matrix& y = value(out);
    const Matrix& g = upstream(out);
    Matrix& gx = grad_ref(a);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      gx.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
    }
  };
  return out;
}

Var Graph::layer_norm(Var a, Var gain, Var bias, double eps) {
  const Matrix& x = value(a);
  const Matrix& gv = value(gain);
  const Matrix& bv = value(bias);
  if (gv.rows() != 1 || gv.cols() != x.cols() || bv.rows() != 1 || bv.cols() != x.cols()) {
    throw ShapeError("layer_norm: input " + shape_string(x) + " with gain " + shape_string(gv) +
                     " and bias " + shape_string(bv));
  }
  const auto n = static_cast<double>(x.cols());
  Matrix xhat(x.rows(), x.cols());
  std::vector<double> inv_std(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / n;
    inv_std[static_cast<std::size_t>(r)] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std[static_cast<std::size_t>(r)];
  }
  Matrix y = xhat.array().rowwise() * gv.row(0).array();
  y.rowwise() += bv.row(0);
  Var out = push(std::move(y), needs(a) || needs(gain) || needs(bias));
  nodes_[out.id].backward = [this, a, gain, bias, out, xhat = std::move(xhat),
                             inv_std = std::move(inv_std), n] {
    const Matrix& g = upstream(out);
    if (needs(gain)) grad_ref(gain) += g.cwiseProduct(xhat).colwise().sum();
    if (needs(bias)) grad_ref(bias) += g.colwise().sum();
    if (needs(a)) {
      Matrix dxhat = g.array().rowwise() * value(gain).row(0).array();
      Matrix& gx = grad_ref(a);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const double mean_d = dxhat.row(r).sum() / n;
        const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / n;
        gx.row(r).array() += inv_std[static_cast<std::size_t>(r)] *
                             (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
      }
    }
  };
  return out;
}

Var Graph::dropout(Var a, double prob) {
  if (!training_ || prob <= 0.0) return a;
  if (prob >= 1.0) throw std::invalid_argument("dropout probability must be < 1");
  const Matrix& x = value(a);
  Matrix mask(x.rows(), x.cols());
  const double keep_scale = 1.0 / (1.0 - prob);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng_->bernoulli(prob) ? 0.0 : keep_scale;
  }
  Var out = push(x.cwiseProduct(mask), needs(a));
  nodes_[out.id].backward = [this, a, out, mask = std::move(mask)] {
    grad_ref(a) += upstream(out).cwiseProduct(mask);
  };
  return out;
}

Var Graph::gather_rows(Var table, std::span<const int> rows) {
  const Matrix& t = value(table);
  Matrix y(static_cast<Eigen::Index>(rows.size()), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= t.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " outside " + shape_string(t));
    }
    y.row(static_cast<Eigen::Index>(i)) = t.row(rows[i]);
  }
  Var out = push(std::move(y), needs(table));
  nodes_[out.id].backward = [this, table, out, idx = std::vector<int>(rows.begin(), rows.end())] {
    const Matrix& g = upstream(out);
    Matrix& gt = grad_ref(table);
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  };
  return out;
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool any = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) {
      throw ShapeError("concat_rows: shapes " + shape_string(value(parts[0])) + " and " +
                       shape_string(value(p)) + " differ in columns");
    }
    rows += value(p).rows();
    any = any || needs(p);
  }
  Matrix y(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    y.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
  }
  Var out = push(std::move(y), any);
  nodes_[out.id].backward = [this, out, ps = std::vector<Var>(parts.begin(), parts.end())] {
    const Matrix& g = upstream(out);
    Eigen::Index at = 0;
    for (Var p : ps) {
      const Eigen::Index r = value(p).rows();
      if (needs(p)) grad_ref(p) += g.middleRows(at, r);
      at += r;
    }
  };
  return out;
}

Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool any = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) {
      throw ShapeError("concat_cols: shapes " + shape_string(value(parts[0])) + " and " +
                       shape_string(value(p)) + " differ in rows");
    }
    cols += value(p).cols();
    any = any || needs(p);
  }
  Matrix y(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    y.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  Var out = push(std::move(y), any);
  nodes_[out.id].backward = [this, out, ps = std::vector<Var>(parts.begin(), parts.end())] {
    const Matrix& g = upstream(out);
    Eigen::Index at = 0;
    for (Var p : ps) {
      const Eigen::Index c = value(p).cols();
      if (needs(p)) grad_ref(p) += g.middleCols(at, c);
      at += c;
    }
  };
  return out;
}

Var Graph::slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& x = value(a);
  if (start < 0 || count < 0 || start + count > x.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + shape_string(x));
  }
  Var out = push(x.middleRows(start, count), needs(a));
  nodes_[out.id].backward = [this, a, out, start, count] {
    grad_ref(a).middleRows(start, count) += upstream(out);
  };
  return out;
}

Var Graph::slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& x = value(a);
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + shape_string(x));
  }
  Var out = push(x.middleCols(start, count), needs(a));
  nodes_[out.id].backward = [this, a, out, start, count] {
    grad_ref(a).middleCols(start, count) += upstream(out);
  };
  return out;
}

Var Graph::blocked_row_dot(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  const Eigen::Index width = bv.cols();
  if (av.rows() != bv.rows() || width == 0 || av.cols() % width != 0) {
    throw ShapeError("blocked_row_dot: shapes " + shape_string(av) + " and " + shape_string(bv) +
                     " are incompatible");
  }
  const Eigen::Index blocks = av.cols() / width;
  Matrix y(av.rows(), blocks);
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    for (Eigen::Index l = 0; l < blocks; ++l) {
      y(r, l) = av.row(r).segment(l * width, width).dot(bv.row(r));
    }
  }
  Var out = push(std::move(y), needs(a) || needs(b));
  nodes_[out.id].backward = [this, a, b, out, width, blocks] {
    const Matrix& g = upstream(out);
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (needs(a)) {
      Matrix& ga = grad_ref(a);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        for (Eigen::Index l = 0; l < blocks; ++l) ga.row(r).segment(l * width, width) += g(r, l) * bv.row(r);
      }
    }
    if (needs(b)) {
      Matrix& gb = grad_ref(b);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        for (Eigen::Index l = 0; l < blocks; ++l) gb.row(r) += g(r, l) * av.row(r).segment(l * width, width);
      }
    }
  };
  return out;
}

Var Graph::cross_entropy(Var logits, std::span<const int> gold, double eps, const Matrix* valid) {
  const Matrix& x = value(logits);
  if (static_cast<Eigen::Index>(gold.size()) != x.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(gold.size()) + " gold labels for logits " +
                     shape_string(x));
  }
  if (valid) require_same_shape("cross_entropy", x, *valid);
  if (eps < 0.0 || eps >= 1.0) throw std::invalid_argument("label smoothing must be in [0, 1)");
  if (x.cols() < 2) throw ShapeError("cross_entropy: need at least 2 classes, got " + shape_string(x));

  // target(r, k) and softmax probabilities, both restricted to valid columns.
  Matrix target = Matrix::Zero(x.rows(), x.cols());
  Matrix prob = Matrix::Zero(x.rows(), x.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int g = gold[static_cast<std::size_t>(r)];
    auto is_valid = [&](Eigen::Index k) { return valid == nullptr || (*valid)(r, k) != 0.0; };
    if (g < 0 || g >= x.cols() || !is_valid(g)) {
      throw std::out_of_range("cross_entropy: gold index " + std::to_string(g) + " invalid for row " +
                              std::to_string(r));
    }
    double mx = -std::numeric_limits<double>::infinity();
    int count = 0;
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      if (!is_valid(k)) continue;
      mx = std::max(mx, x(r, k));
      ++count;
    }
    double z = 0.0;
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      if (is_valid(k)) z += std::exp(x(r, k) - mx);
    }
    const double log_z = mx + std::log(z);
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      if (!is_valid(k)) continue;
      const double log_p = x(r, k) - log_z;
      prob(r, k) = std::exp(log_p);
      target(r, k) = eps / count + (k == g ? 1.0 - eps : 0.0);
      loss -= target(r, k) * log_p;
    }
  }
  Matrix v(1, 1);
  v(0, 0) = loss;
  Var out = push(std::move(v), needs(logits));
  nodes_[out.id].backward = [this, logits, out, diff = Matrix(prob - target)] {
    grad_ref(logits) += upstream(out)(0, 0) * diff;
  };
  return out;
}

}  // namespace udkit
