// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense rank-<=3 tensors with reverse-mode autodiff, templated on the scalar
// type with Eigen as the only math dependency. Ops are free functions that
// record pull-back closures onto the active tape; with no active tape they
// compute values only, which is what inference uses.
//
// Matrix view convention: rank-1 [D] maps to [1, D], rank-2 [N, D] to
// [N, D], rank-3 [B, T, D] to [B*T, D]. Row-wise ops (softmax, layer_norm)
// operate on that collapsed view.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pgen/error.hpp"
#include "pgen/rng.hpp"

namespace pgen {

template <typename S>
struct TensorNode {
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;

  std::vector<int> shape;
  Array value;
  Array grad;
  bool requires_grad = false;
  std::function<void()> backprop;

  Eigen::Index size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad = Array::Zero(value.size());
  }
};

template <typename S>
class TapeT;

template <typename S>
class TensorT {
 public:
  using Node = TensorNode<S>;
  using Array = typename Node::Array;
  using Matrix =
      Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  TensorT() = default;

  static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
    TensorT t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = Array::Zero(size_of(t.node_->shape));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static TensorT constant(std::vector<int> shape, S fill) {
    TensorT t = zeros(std::move(shape));
    t.node_->value.setConstant(fill);
    return t;
  }

  static TensorT from(const std::vector<S>& data, std::vector<int> shape,
                      bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    if (static_cast<Eigen::Index>(data.size()) != t.size())
      throw ShapeMismatch("tensor literal size does not match shape");
    for (Eigen::Index i = 0; i < t.size(); ++i)
      t.node_->value[i] = data[static_cast<std::size_t>(i)];
    return t;
  }

  static TensorT scalar(S v) {
    TensorT t = zeros({});
    t.node_->value[0] = v;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  const std::vector<int>& shape() const { return node_->shape; }
  Eigen::Index size() const { return node_->size(); }

  // Collapsed 2-D view dimensions.
  int view_rows() const {
    switch (rank()) {
      case 0: return 1;
      case 1: return 1;
      case 2: return dim(0);
      default: return dim(0) * dim(1);
    }
  }
  int view_cols() const {
    switch (rank()) {
      case 0: return 1;
      case 1: return dim(0);
      case 2: return dim(1);
      default: return dim(2);
    }
  }

  Array& array() { return node_->value; }
  const Array& array() const { return node_->value; }
  S item() const {
    if (size() != 1) throw NotScalar("item() on non-scalar tensor");
    return node_->value[0];
  }
  S at(Eigen::Index i) const { return node_->value[i]; }

  MatrixMap matrix() {
    return MatrixMap(node_->value.data(), view_rows(), view_cols());
  }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(node_->value.data(), view_rows(), view_cols());
  }
  MatrixMap grad_matrix() {
    node_->ensure_grad();
    return MatrixMap(node_->grad.data(), view_rows(), view_cols());
  }

  bool requires_grad() const { return node_->requires_grad; }
  Array& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const Array& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void clear_grad() {
    if (node_->grad.size() > 0) node_->grad.setZero();
  }

  std::shared_ptr<Node> node() const { return node_; }

  static Eigen::Index size_of(const std::vector<int>& shape) {
    Eigen::Index n = 1;
    for (int d : shape) {
      if (d < 0) throw ShapeMismatch("negative dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::shared_ptr<Node> node_;
};

// Recording scope. Constructing a tape makes it active for the current
// thread; ops record result nodes in creation order, and backward replays
// the pull-backs in exact reverse order.
template <typename S>
class TapeT {
 public:
  TapeT() : prev_(active_ref()) { active_ref() = this; }
  ~TapeT() { active_ref() = prev_; }

  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  static TapeT* active() { return active_ref(); }

  void record(std::shared_ptr<TensorNode<S>> node) {
    nodes_.push_back(std::move(node));
  }

  std::size_t recorded() const { return nodes_.size(); }

  void backward(const TensorT<S>& loss) {
    if (loss.size() != 1)
      throw NotScalar("backward needs a scalar loss, got size " +
                      std::to_string(loss.size()));
    loss.node()->ensure_grad();
    loss.node()->grad[0] = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      // Orphaned ops (recorded but feeding no scored output) still replay;
      // their output grad stays all-zero, so they propagate exact zeros.
      (*it)->ensure_grad();
      if ((*it)->backprop) (*it)->backprop();
    }
    nodes_.clear();
  }

  void clear() { nodes_.clear(); }

  std::size_t size() const { return nodes_.size(); }

  static TapeT* swap_active(TapeT* t) {
    TapeT* old = active_ref();
    active_ref() = t;
    return old;
  }

 private:
  static TapeT*& active_ref() {
    thread_local TapeT* active = nullptr;
    return active;
  }

  std::vector<std::shared_ptr<TensorNode<S>>> nodes_;
  TapeT* prev_;
};

// Suspends recording on the current thread: ops inside the scope run
// value-only even when an outer tape is live.
template <typename S>
class TapePauseT {
 public:
  TapePauseT() : saved_(TapeT<S>::swap_active(nullptr)) {}
  ~TapePauseT() { TapeT<S>::swap_active(saved_); }

  TapePauseT(const TapePauseT&) = delete;
  TapePauseT& operator=(const TapePauseT&) = delete;

 private:
  TapeT<S>* saved_;
};

using Tensor = TensorT<double>;
using Tape = TapeT<double>;
using TapePause = TapePauseT<double>;

namespace detail {

template <typename S>
TensorT<S> make_result(std::vector<int> shape, bool requires_grad) {
  TensorT<S> out = TensorT<S>::zeros(std::move(shape), false);
  out.node()->requires_grad = requires_grad && TapeT<S>::active() != nullptr;
  return out;
}

// Register the pull-back if anything upstream wants gradients.
template <typename S, typename F>
void record_op(TensorT<S>& out, F&& backprop) {
  if (!out.requires_grad()) return;
  out.node()->backprop = std::forward<F>(backprop);
  TapeT<S>::active()->record(out.node());
}

template <typename S>
void check_same_shape(const TensorT<S>& a, const TensorT<S>& b,
                      const char* op) {
  if (a.shape() != b.shape())
    throw ShapeMismatch(std::string(op) + ": shapes differ");
}

}  // namespace detail

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape(a, b, "add");
  TensorT<S> out = detail::make_result<S>(
      a.shape(), a.requires_grad() || b.requires_grad());
  out.array() = a.array() + b.array();
  auto an = a.node();
  auto bn = b.node();
  auto on = out.node();
  detail::record_op(out, [an, bn, on] {
    if (an->requires_grad) {
      an->ensure_grad();
      an->grad += on->grad;
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      bn->grad += on->grad;
    }
  });
  return out;
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape(a, b, "sub");
  TensorT<S> out = detail::make_result<S>(
      a.shape(), a.requires_grad() || b.requires_grad());
  out.array() = a.array() - b.array();
  auto an = a.node();
  auto bn = b.node();
  auto on = out.node();
  detail::record_op(out, [an, bn, on] {
    if (an->requires_grad) {
      an->ensure_grad();
      an->grad += on->grad;
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      bn->grad -= on->grad;
    }
  });
  return out;
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape(a, b, "mul");
  TensorT<S> out = detail::make_result<S>(
      a.shape(), a.requires_grad() || b.requires_grad());
  out.array() = a.array() * b.array();
  auto an = a.node();
  auto bn = b.node();
  auto on = out.node();
  detail::record_op(out, [an, bn, on] {
    if (an->requires_grad) {
      an->ensure_grad();
      an->grad += on->grad * bn->value;
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      bn->grad += on->grad * an->value;
    }
  });
  return out;
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, S c) {
  TensorT<S> out = detail::make_result<S>(a.shape(), a.requires_grad());
  out.array() = a.array() * c;
  auto an = a.node();
  auto on = out.node();
  detail::record_op(out, [an, on, c] {
    an->ensure_grad();
    an->grad += on->grad * c;
  });
  return out;
}

// a viewed as [N, D] plus rank-1 vector b of length D added to every row.
template <typename S>
TensorT<S> add_rowwise(const TensorT<S>& a, const TensorT<S>& b) {
  if (b.rank() != 1 || b.dim(0) != a.view_cols())
    throw ShapeMismatch("add_rowwise: vector length must equal row width");
  TensorT<S> out = detail::make_result<S>(
      a.shape(), a.requires_grad() || b.requires_grad());
  out.matrix() = a.matrix().rowwise() +
                 Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(
                     b.array().data(), b.dim(0));
  auto an = a.node();
  auto bn = b.node();
  auto on = out.node();
  int rows = a.view_rows();
  int cols = a.view_cols();
  detail::record_op(out, [an, bn, on, rows, cols] {
    typename TensorT<S>::ConstMatrixMap g(on->grad.data(), rows, cols);
    if (an->requires_grad) {
      an->ensure_grad();
      typename TensorT<S>::MatrixMap ga(an->grad.data(), rows, cols);
      ga += g;
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> gb(bn->grad.data(),
                                                         cols);
      gb += g.colwise().sum();
    }
  });
  return out;
}

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeMismatch("matmul: rank-2 operands required");
  if (a.dim(1) != b.dim(0))
    throw ShapeMismatch("matmul: inner dimensions " + std::to_string(a.dim(1)) +
                        " vs " + std::to_string(b.dim(0)));
  TensorT<S> out = detail::make_result<S>(
      {a.dim(0), b.dim(1)}, a.requires_grad() || b.requires_grad());
  out.matrix().noalias() = a.matrix() * b.matrix();
  auto an = a.node();
  auto bn = b.node();
  auto on = out.node();
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  detail::record_op(out, [an, bn, on, m, k, n] {
    typename TensorT<S>::ConstMatrixMap g(on->grad.data(), m, n);
    typename TensorT<S>::ConstMatrixMap av(an->value.data(), m, k);
    typename TensorT<S>::ConstMatrixMap bv(bn->value.data(), k, n);
    if (an->requires_grad) {
      an->ensure_grad();
      typename TensorT<S>::MatrixMap ga(an->grad.data(), m, k);
      ga.noalias() += g * bv.transpose();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      typename TensorT<S>::MatrixMap gb(bn->grad.data(), k, n);
      gb.noalias() += av.transpose() * g;
    }
  });
  return out;
}

template <typename S>
TensorT<S> transpose(const TensorT<S>& a) {
  if (a.rank() != 2) throw ShapeMismatch("transpose: rank-2 required");
  TensorT<S> out =
      detail::make_result<S>({a.dim(1), a.dim(0)}, a.requires_grad());
  out.matrix() = a.matrix().transpose();
  auto an = a.node();
  auto on = out.node();
  int m = a.dim(0), n = a.dim(1);
  detail::record_op(out, [an, on, m, n] {
    an->ensure_grad();
    typename TensorT<S>::ConstMatrixMap g(on->grad.data(), n, m);
    typename TensorT<S>::MatrixMap ga(an->grad.data(), m, n);
    ga += g.transpose();
  });
  return out;
}

template <typename S>
TensorT<S> reshape(const TensorT<S>& a, std::vector<int> shape) {
  if (TensorT<S>::size_of(shape) != a.size())
    throw ShapeMismatch("reshape: element count changes");
  TensorT<S> out = detail::make_result<S>(std::move(shape), a.requires_grad());
  out.array() = a.array();
  auto an = a.node();
  auto on = out.node();
  detail::record_op(out, [an, on] {
    an->ensure_grad();
    an->grad += on->grad;
  });
  return out;
}

// Row slice [start, start+count) of the collapsed [N, D] view.
template <typename S>
TensorT<S> rows(const TensorT<S>& a, int start, int count) {
  if (a.rank() != 2) throw ShapeMismatch("rows: rank-2 required");
  if (start < 0 || count < 0 || start + count > a.dim(0))
    throw ShapeMismatch("rows: slice out of range");
  TensorT<S> out =
      detail::make_result<S>({count, a.dim(1)}, a.requires_grad());
  out.matrix() = a.matrix().middleRows(start, count);
  auto an = a.node();
  auto on = out.node();
  int m = a.dim(0), n = a.dim(1);
  detail::record_op(out, [an, on, start, count, m, n] {
    an->ensure_grad();
    typename TensorT<S>::ConstMatrixMap g(on->grad.data(), count, n);
    typename TensorT<S>::MatrixMap ga(an->grad.data(), m, n);
    ga.middleRows(start, count) += g;
  });
  return out;
}

template <typename S>
TensorT<S> cols(const TensorT<S>& a, int start, int count) {
  if (a.rank() != 2) throw ShapeMismatch("cols: rank-2 required");
  if (start < 0 || count < 0 || start + count > a.dim(1))
    throw ShapeMismatch("cols: slice out of range");
  TensorT<S> out =
      detail::make_result<S>({a.dim(0), count}, a.requires_grad());
  out.matrix() = a.matrix().middleCols(start, count);
  auto an = a.node();
  auto on = out.node();
  int m = a.dim(0), n = a.dim(1);
  detail::record_op(out, [an, on, start, count, m, n] {
    an->ensure_grad();
    typename TensorT<S>::ConstMatrixMap g(on->grad.data(), m, count);
    typename TensorT<S>::MatrixMap ga(an->grad.data(), m, n);
    ga.middleCols(start, count) += g;
  });
  return out;
}

template <typename S>
TensorT<S> concat_cols(const std::vector<TensorT<S>>& parts) {
  if (parts.empty()) throw EmptyError("concat_cols: no parts");
  int m = parts[0].dim(0);
  int total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != m)
      throw ShapeMismatch("concat_cols: row counts differ");
    total += p.dim(1);
    rg = rg || p.requires_grad();
  }
  TensorT<S> out = detail::make_result<S>({m, total}, rg);
  int at = 0;
  for (const auto& p : parts) {
    out.matrix().middleCols(at, p.dim(1)) = p.matrix();
    at += p.dim(1);
  }
  std::vector<std::shared_ptr<TensorNode<S>>> nodes;
  std::vector<int> widths;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    widths.push_back(p.dim(1));
  }
  auto on = out.node();
  detail::record_op(out, [nodes, widths, on, m, total] {
    typename TensorT<S>::ConstMatrixMap g(on->grad.data(), m, total);
    int at = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i]->requires_grad) {
        nodes[i]->ensure_grad();
        typename TensorT<S>::MatrixMap ga(nodes[i]->grad.data(), m,
                                          widths[i]);
        ga += g.middleCols(at, widths[i]);
      }
      at += widths[i];
    }
  });
  return out;
}

template <typename S>
TensorT<S> vstack(const std::vector<TensorT<S>>& parts) {
  if (parts.empty()) throw EmptyError("vstack: no parts");
  int n = parts[0].dim(1);
  int total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != n)
      throw ShapeMismatch("vstack: column counts differ");
    total += p.dim(0);
    rg = rg || p.requires_grad();
  }
  TensorT<S> out = detail::make_result<S>({total, n}, rg);
  int at = 0;
  for (const auto& p : parts) {
    out.matrix().middleRows(at, p.dim(0)) = p.matrix();
    at += p.dim(0);
  }
  std::vector<std::shared_ptr<TensorNode<S>>> nodes;
  std::vector<int> heights;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    heights.push_back(p.dim(0));
  }
  auto on = out.node();
  detail::record_op(out, [nodes, heights, on, n, total] {
    typename TensorT<S>::ConstMatrixMap g(on->grad.data(), total, n);
    int at = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i]->requires_grad) {
        nodes[i]->ensure_grad();
        typename TensorT<S>::MatrixMap ga(nodes[i]->grad.data(), heights[i],
                                          n);
        ga += g.middleRows(at, heights[i]);
      }
      at += heights[i];
    }
  });
  return out;
}

template <typename S>
TensorT<S> relu(const TensorT<S>& a) {
  TensorT<S> out = detail::make_result<S>(a.shape(), a.requires_grad());
  out.array() = a.array().max(S(0));
  auto an = a.node();
  auto on = out.node();
  detail::record_op(out, [an, on] {
    an->ensure_grad();
    an->grad += on->grad * (an->value > S(0)).template cast<S>();
  });
  return out;
}

// Row-wise softmax over the collapsed [N, D] view, max-subtracted.
template <typename S>
TensorT<S> softmax(const TensorT<S>& a) {
  TensorT<S> out = detail::make_result<S>(a.shape(), a.requires_grad());
  auto src = a.matrix();
  auto dst = out.matrix();
  for (Eigen::Index i = 0; i < src.rows(); ++i) {
    S m = src.row(i).maxCoeff();
    // Scalar exp so that heavily masked scores underflow to exactly zero;
    // Eigen's packet exp clamps the argument and leaks denormals instead.
    dst.row(i) = (src.row(i).array() - m)
                     .unaryExpr([](S v) { return std::exp(v); })
                     .matrix();
    dst.row(i) /= dst.row(i).sum();
  }
  auto an = a.node();
  auto on = out.node();
  int nrows = a.view_rows(), ncols = a.view_cols();
  detail::record_op(out, [an, on, nrows, ncols] {
    an->ensure_grad();
    typename TensorT<S>::ConstMatrixMap y(on->value.data(), nrows, ncols);
    typename TensorT<S>::ConstMatrixMap g(on->grad.data(), nrows, ncols);
    typename TensorT<S>::MatrixMap ga(an->grad.data(), nrows, ncols);
    for (Eigen::Index i = 0; i < nrows; ++i) {
      S dot = (g.row(i).array() * y.row(i).array()).sum();
      ga.row(i).array() +=
          y.row(i).array() * (g.row(i).array() - dot);
    }
  });
  return out;
}

template <typename S>
TensorT<S> layer_norm(const TensorT<S>& a, const TensorT<S>& gain,
                      const TensorT<S>& bias, S eps) {
  int d = a.view_cols();
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 ||
      bias.dim(0) != d)
    throw ShapeMismatch("layer_norm: gain/bias must be rank-1 of row width");
  TensorT<S> out = detail::make_result<S>(
      a.shape(),
      a.requires_grad() || gain.requires_grad() || bias.requires_grad());
  int nrows = a.view_rows();
  auto src = a.matrix();
  auto dst = out.matrix();
  // Save normalized rows for the pull-back.
  auto xhat = std::make_shared<typename TensorT<S>::Matrix>(nrows, d);
  auto inv_sd = std::make_shared<Eigen::Array<S, Eigen::Dynamic, 1>>(nrows);
  for (Eigen::Index i = 0; i < nrows; ++i) {
    S mean = src.row(i).mean();
    S var = (src.row(i).array() - mean).square().sum() / S(d);
    S inv = S(1) / std::sqrt(var + eps);
    (*inv_sd)[i] = inv;
    xhat->row(i) = ((src.row(i).array() - mean) * inv).matrix();
    dst.row(i) = (xhat->row(i).array() * gain.array().transpose() +
                  bias.array().transpose())
                     .matrix();
  }
  auto an = a.node();
  auto gn = gain.node();
  auto bn = bias.node();
  auto on = out.node();
  detail::record_op(out, [an, gn, bn, on, xhat, inv_sd, nrows, d] {
    typename TensorT<S>::ConstMatrixMap g(on->grad.data(), nrows, d);
    if (gn->requires_grad) {
      gn->ensure_grad();
      for (Eigen::Index i = 0; i < nrows; ++i)
        gn->grad += (g.row(i).array() * xhat->row(i).array()).transpose();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (Eigen::Index i = 0; i < nrows; ++i)
        bn->grad += g.row(i).array().transpose();
    }
    if (an->requires_grad) {
      an->ensure_grad();
      typename TensorT<S>::MatrixMap ga(an->grad.data(), nrows, d);
      for (Eigen::Index i = 0; i < nrows; ++i) {
        Eigen::Array<S, 1, Eigen::Dynamic> dxhat =
            g.row(i).array() * gn->value.transpose();
        S m1 = dxhat.mean();
        S m2 = (dxhat * xhat->row(i).array()).mean();
        ga.row(i).array() +=
            (*inv_sd)[i] * (dxhat - m1 - xhat->row(i).array() * m2);
      }
    }
  });
  return out;
}

// Gather rows of an embedding table; the pull-back scatter-adds.
template <typename S>
TensorT<S> embed(const TensorT<S>& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw ShapeMismatch("embed: table must be rank-2");
  int v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw TargetOutOfRange("embed id " + std::to_string(id) +
                             " outside table of " + std::to_string(v));
  TensorT<S> out = detail::make_result<S>(
      {static_cast<int>(ids.size()), d}, table.requires_grad());
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.matrix().row(static_cast<Eigen::Index>(i)) =
        table.matrix().row(ids[i]);
  auto tn = table.node();
  auto on = out.node();
  detail::record_op(out, [tn, on, ids, v, d] {
    tn->ensure_grad();
    typename TensorT<S>::ConstMatrixMap g(
        on->grad.data(), static_cast<Eigen::Index>(ids.size()), d);
    typename TensorT<S>::MatrixMap gt(tn->grad.data(), v, d);
    for (std::size_t i = 0; i < ids.size(); ++i)
      gt.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
  });
  return out;
}

// Inverted dropout: kept activations are scaled by 1/(1-p) so expectations
// match; p = 0 is the identity.
template <typename S>
TensorT<S> dropout(const TensorT<S>& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw Error("dropout: p must be < 1");
  TensorT<S> out = detail::make_result<S>(a.shape(), a.requires_grad());
  auto mask = std::make_shared<typename TensorT<S>::Array>(a.size());
  S keep_scale = S(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < a.size(); ++i)
    (*mask)[i] = rng.unit() < p ? S(0) : keep_scale;
  out.array() = a.array() * (*mask);
  auto an = a.node();
  auto on = out.node();
  detail::record_op(out, [an, on, mask] {
    an->ensure_grad();
    an->grad += on->grad * (*mask);
  });
  return out;
}

template <typename S>
TensorT<S> sum(const TensorT<S>& a) {
  TensorT<S> out = detail::make_result<S>({}, a.requires_grad());
  out.array()[0] = a.array().sum();
  auto an = a.node();
  auto on = out.node();
  detail::record_op(out, [an, on] {
    an->ensure_grad();
    an->grad += on->grad[0];
  });
  return out;
}

template <typename S>
TensorT<S> mean(const TensorT<S>& a) {
  TensorT<S> out = detail::make_result<S>({}, a.requires_grad());
  out.array()[0] = a.array().mean();
  auto an = a.node();
  auto on = out.node();
  S inv = S(1) / static_cast<S>(a.size());
  detail::record_op(out, [an, on, inv] {
    an->ensure_grad();
    an->grad += on->grad[0] * inv;
  });
  return out;
}

// Label-smoothed cross entropy, mean over non-ignored rows. The smoothing
// mass epsilon is spread over the V-1 non-target slots.
template <typename S>
TensorT<S> cross_entropy_smoothed(const TensorT<S>& logits,
                                  const std::vector<int>& targets, S epsilon,
                                  int ignore_id) {
  if (logits.rank() != 2)
    throw ShapeMismatch("cross_entropy: logits must be [N, V]");
  int n = logits.dim(0), v = logits.dim(1);
  if (static_cast<int>(targets.size()) != n)
    throw ShapeMismatch("cross_entropy: target count mismatch");
  for (int t : targets)
    if (t != ignore_id && (t < 0 || t >= v))
      throw TargetOutOfRange("target " + std::to_string(t) +
                             " outside vocabulary of " + std::to_string(v));

  int valid = 0;
  for (int t : targets)
    if (t != ignore_id) ++valid;

  TensorT<S> out = detail::make_result<S>({}, logits.requires_grad());
  if (valid == 0) {
    out.array()[0] = S(0);
    // Zero loss, zero gradient; nothing to record.
    out.node()->requires_grad = false;
    out.node()->backprop = nullptr;
    return out;
  }

  auto probs = std::make_shared<typename TensorT<S>::Matrix>(n, v);
  S off = epsilon / static_cast<S>(v - 1);
  S on_t = S(1) - epsilon;
  S total = S(0);
  auto x = logits.matrix();
  for (Eigen::Index i = 0; i < n; ++i) {
    int t = targets[static_cast<std::size_t>(i)];
    S mx = x.row(i).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> shifted = x.row(i).array() - mx;
    S lse = std::log(shifted.exp().sum());
    probs->row(i) = (shifted - lse).exp().matrix();
    if (t == ignore_id) continue;
    Eigen::Array<S, 1, Eigen::Dynamic> logp = shifted - lse;
    S row_loss = -off * logp.sum() - (on_t - off) * logp[t];
    total += row_loss;
  }
  out.array()[0] = total / static_cast<S>(valid);

  auto ln = logits.node();
  auto on = out.node();
  detail::record_op(out, [ln, on, probs, targets, n, v, off, on_t, valid,
                          ignore_id] {
    ln->ensure_grad();
    typename TensorT<S>::MatrixMap ga(ln->grad.data(), n, v);
    S g = on->grad[0] / static_cast<S>(valid);
    for (Eigen::Index i = 0; i < n; ++i) {
      int t = targets[static_cast<std::size_t>(i)];
      if (t == ignore_id) continue;
      ga.row(i).array() += g * (probs->row(i).array() - off);
      ga(i, t) -= g * (on_t - off);
    }
  });
  return out;
}

// Value-only helpers (never recorded).

template <typename S>
std::vector<int> argmax_rows(const TensorT<S>& a) {
  auto m = a.matrix();
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index best = 0;
    // Explicit scan so ties go to the lowest index on every platform.
    for (Eigen::Index j = 1; j < m.cols(); ++j)
      if (m(i, j) > m(i, best)) best = j;
    out.push_back(static_cast<int>(best));
  }
  return out;
}

template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
log_softmax_rows(const TensorT<S>& a) {
  auto x = a.matrix();
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(
      x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    S mx = x.row(i).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> shifted = x.row(i).array() - mx;
    S lse = std::log(shifted.exp().sum());
    out.row(i) = (shifted - lse).matrix();
  }
  return out;
}

}  // namespace pgen
