// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "cbenc/mask.hpp"
#include "cbenc/numerics.hpp"
#include "cbenc/types.hpp"

namespace cbenc {

template <class Scalar>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; owns nothing.
template <class Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const MatX<Scalar>& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

/// Reverse-mode accumulation over a fixed op vocabulary (matmul, add, relu,
/// masked softmax, layer norm, slice/concat/gather, row reductions, cross
/// entropy). Values are computed eagerly; backward closures replay in reverse
/// creation order. One tape per forward pass.
template <class Scalar>
class Tape {
 public:
  using M = MatX<Scalar>;
  using BackwardFn = std::function<void(Tape&, int)>;

  Var<Scalar> leaf(M value, bool needs_grad) {
    return push(std::move(value), needs_grad, nullptr);
  }

  Var<Scalar> constant(M value) { return push(std::move(value), false, nullptr); }

  const M& value_of(Var<Scalar> v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

  /// Gradient accumulated for v by the last backward(); zeros if untouched.
  M grad_of(Var<Scalar> v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.size() == 0) return M::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Seeds d(root)/d(root) = 1 and runs every recorded backward closure in
  /// reverse order. root must be 1x1.
  void backward(Var<Scalar> root) {
    Node& r = nodes_[static_cast<std::size_t>(root.id)];
    if (r.value.rows() != 1 || r.value.cols() != 1)
      throw DimensionError("backward: root must be a 1x1 scalar");
    r.grad = M::Constant(1, 1, Scalar(1));
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.grad.size() != 0 && n.backward) n.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // Plumbing for the op builders below.
  const M& value_at(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const M& grad_at(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool needs(Var<Scalar> v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

  template <class Expr>
  void accum(int id, Expr&& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = M::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
  }

  Var<Scalar> push(M value, bool needs_grad, BackwardFn bw) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

 private:
  struct Node {
    M value;
    M grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

template <class Scalar>
const MatX<Scalar>& Var<Scalar>::value() const {
  return tape->value_of(*this);
}

template <class Scalar>
const MatX<Scalar>& value(const Var<Scalar>& v) {
  return v.value();
}

// ---- tape ops ----

template <class Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  Tape<Scalar>& t = *a.tape;
  MatX<Scalar> v = matmul(a.value(), b.value());
  return t.push(std::move(v), t.needs(a) || t.needs(b),
                [ia = a.id, ib = b.id](Tape<Scalar>& tp, int self) {
                  const auto& g = tp.grad_at(self);
                  tp.accum(ia, g * tp.value_at(ib).transpose());
                  tp.accum(ib, tp.value_at(ia).transpose() * g);
                });
}

/// a * b^T
template <class Scalar>
Var<Scalar> matmul_nt(Var<Scalar> a, Var<Scalar> b) {
  Tape<Scalar>& t = *a.tape;
  if (a.cols() != b.cols()) throw DimensionError("matmul_nt: column counts differ");
  MatX<Scalar> v = a.value() * b.value().transpose();
  return t.push(std::move(v), t.needs(a) || t.needs(b),
                [ia = a.id, ib = b.id](Tape<Scalar>& tp, int self) {
                  const auto& g = tp.grad_at(self);
                  tp.accum(ia, g * tp.value_at(ib));
                  tp.accum(ib, g.transpose() * tp.value_at(ia));
                });
}

template <class Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  Tape<Scalar>& t = *a.tape;
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("add: shape mismatch");
  MatX<Scalar> v = a.value() + b.value();
  return t.push(std::move(v), t.needs(a) || t.needs(b),
                [ia = a.id, ib = b.id](Tape<Scalar>& tp, int self) {
                  const auto& g = tp.grad_at(self);
                  tp.accum(ia, g);
                  tp.accum(ib, g);
                });
}

/// x + broadcast of a 1xD row over every row of x.
template <class Scalar>
Var<Scalar> add_row(Var<Scalar> x, Var<Scalar> row) {
  Tape<Scalar>& t = *x.tape;
  if (row.rows() != 1 || row.cols() != x.cols())
    throw DimensionError("add_row: row must be 1 x cols(x)");
  MatX<Scalar> v = x.value().rowwise() + row.value().row(0);
  return t.push(std::move(v), t.needs(x) || t.needs(row),
                [ix = x.id, ir = row.id](Tape<Scalar>& tp, int self) {
                  const auto& g = tp.grad_at(self);
                  tp.accum(ix, g);
                  tp.accum(ir, g.colwise().sum());
                });
}

template <class Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  Tape<Scalar>& t = *a.tape;
  MatX<Scalar> v = a.value() * s;
  return t.push(std::move(v), t.needs(a), [ia = a.id, s](Tape<Scalar>& tp, int self) {
    tp.accum(ia, tp.grad_at(self) * s);
  });
}

template <class Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  MatX<Scalar> v = a.value().cwiseMax(Scalar(0));
  return t.push(std::move(v), t.needs(a), [ia = a.id](Tape<Scalar>& tp, int self) {
    const auto& g = tp.grad_at(self);
    const auto& x = tp.value_at(ia);
    tp.accum(ia, ((x.array() > Scalar(0)).template cast<Scalar>() * g.array()).matrix());
  });
}

template <class Scalar>
Var<Scalar> masked_softmax(Var<Scalar> scores, const AttentionMask& mask) {
  Tape<Scalar>& t = *scores.tape;
  MatX<Scalar> v = masked_softmax_rows(scores.value(), mask);
  return t.push(std::move(v), t.needs(scores),
                [is = scores.id, mask](Tape<Scalar>& tp, int self) {
                  const auto& g = tp.grad_at(self);
                  const auto& y = tp.value_at(self);
                  MatX<Scalar> ds = MatX<Scalar>::Zero(g.rows(), g.cols());
                  for (Index q = 0; q < g.rows(); ++q) {
                    Scalar dot = Scalar(0);
                    for (Index k = 0; k < g.cols(); ++k)
                      if (mask.admit(q, k)) dot += y(q, k) * g(q, k);
                    for (Index k = 0; k < g.cols(); ++k)
                      if (mask.admit(q, k)) ds(q, k) = y(q, k) * (g(q, k) - dot);
                  }
                  tp.accum(is, std::move(ds));
                });
}

template <class Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias, Scalar eps) {
  Tape<Scalar>& t = *x.tape;
  const MatX<Scalar>& xv = x.value();
  const Index d = xv.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
    throw DimensionError("layer_norm: gain/bias must be 1 x d");
  MatX<Scalar> xhat(xv.rows(), d);
  MatX<Scalar> inv(xv.rows(), 1);
  for (Index r = 0; r < xv.rows(); ++r) {
    const Scalar mean = xv.row(r).mean();
    const Scalar var = (xv.row(r).array() - mean).square().sum() / Scalar(d);
    inv(r, 0) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = ((xv.row(r).array() - mean) * inv(r, 0)).matrix();
  }
  MatX<Scalar> v = ((xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
                    bias.value().row(0).array())
                       .matrix();
  return t.push(
      std::move(v), t.needs(x) || t.needs(gain) || t.needs(bias),
      [ix = x.id, ig = gain.id, ib = bias.id, xhat = std::move(xhat),
       inv = std::move(inv)](Tape<Scalar>& tp, int self) {
        const auto& g = tp.grad_at(self);
        tp.accum(ig, (g.array() * xhat.array()).colwise().sum().matrix());
        tp.accum(ib, g.colwise().sum());
        const auto gainrow = tp.value_at(ig).row(0);
        MatX<Scalar> dx(g.rows(), g.cols());
        for (Index r = 0; r < g.rows(); ++r) {
          Eigen::Array<Scalar, 1, Eigen::Dynamic> gy = g.row(r).array() * gainrow.array();
          const Scalar m1 = gy.mean();
          const Scalar m2 = (gy * xhat.row(r).array()).mean();
          dx.row(r) = ((gy - m1 - xhat.row(r).array() * m2) * inv(r, 0)).matrix();
        }
        tp.accum(ix, std::move(dx));
      });
}

template <class Scalar>
Var<Scalar> gather_rows(Var<Scalar> a, std::vector<Index> idx) {
  Tape<Scalar>& t = *a.tape;
  MatX<Scalar> v = gather_rows(a.value(), idx);
  return t.push(std::move(v), t.needs(a),
                [ia = a.id, idx = std::move(idx)](Tape<Scalar>& tp, int self) {
                  const auto& g = tp.grad_at(self);
                  MatX<Scalar> da = MatX<Scalar>::Zero(tp.value_at(ia).rows(), g.cols());
                  for (Index i = 0; i < g.rows(); ++i)
                    da.row(idx[static_cast<std::size_t>(i)]) += g.row(i);
                  tp.accum(ia, std::move(da));
                });
}

template <class Scalar>
Var<Scalar> slice_rows(Var<Scalar> a, Index start, Index count) {
  Tape<Scalar>& t = *a.tape;
  if (start < 0 || count < 0 || start + count > a.rows())
    throw DimensionError("slice_rows: range out of bounds");
  MatX<Scalar> v = a.value().middleRows(start, count);
  return t.push(std::move(v), t.needs(a),
                [ia = a.id, start, count](Tape<Scalar>& tp, int self) {
                  const auto& g = tp.grad_at(self);
                  MatX<Scalar> da = MatX<Scalar>::Zero(tp.value_at(ia).rows(), g.cols());
                  da.middleRows(start, count) = g;
                  tp.accum(ia, std::move(da));
                });
}

template <class Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: empty input");
  Tape<Scalar>& t = *parts.front().tape;
  std::vector<MatX<Scalar>> vals;
  std::vector<int> ids;
  std::vector<Index> row_counts;
  bool needs = false;
  for (const auto& p : parts) {
    vals.push_back(p.value());
    ids.push_back(p.id);
    row_counts.push_back(p.rows());
    needs = needs || t.needs(p);
  }
  MatX<Scalar> v = concat_rows(vals);
  return t.push(std::move(v), needs,
                [ids = std::move(ids), row_counts = std::move(row_counts)](Tape<Scalar>& tp,
                                                                           int self) {
                  const auto& g = tp.grad_at(self);
                  Index at = 0;
                  for (std::size_t i = 0; i < ids.size(); ++i) {
                    tp.accum(ids[i], g.middleRows(at, row_counts[i]));
                    at += row_counts[i];
                  }
                });
}

/// Column-wise mean over rows -> 1xD.
template <class Scalar>
Var<Scalar> row_mean(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  const Index n = a.rows();
  if (n == 0) throw DimensionError("row_mean: empty input");
  MatX<Scalar> v = a.value().colwise().mean();
  return t.push(std::move(v), t.needs(a), [ia = a.id, n](Tape<Scalar>& tp, int self) {
    const auto& g = tp.grad_at(self);
    tp.accum(ia, (g.replicate(n, 1) / Scalar(n)).eval());
  });
}

/// Column-wise max over rows -> 1xD; gradient routes to the first argmax.
template <class Scalar>
Var<Scalar> row_max(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  const MatX<Scalar>& av = a.value();
  if (av.rows() == 0) throw DimensionError("row_max: empty input");
  MatX<Scalar> v(1, av.cols());
  std::vector<Index> arg(static_cast<std::size_t>(av.cols()));
  for (Index j = 0; j < av.cols(); ++j) {
    Index best = 0;
    for (Index i = 1; i < av.rows(); ++i)
      if (av(i, j) > av(best, j)) best = i;
    arg[static_cast<std::size_t>(j)] = best;
    v(0, j) = av(best, j);
  }
  return t.push(std::move(v), t.needs(a),
                [ia = a.id, arg = std::move(arg)](Tape<Scalar>& tp, int self) {
                  const auto& g = tp.grad_at(self);
                  MatX<Scalar> da = MatX<Scalar>::Zero(tp.value_at(ia).rows(), g.cols());
                  for (Index j = 0; j < g.cols(); ++j)
                    da(arg[static_cast<std::size_t>(j)], j) += g(0, j);
                  tp.accum(ia, std::move(da));
                });
}

/// Mean over rows of -log softmax(logits_row)[label_row] -> 1x1.
template <class Scalar>
Var<Scalar> cross_entropy_mean(Var<Scalar> logits, std::vector<int> labels) {
  Tape<Scalar>& t = *logits.tape;
  const MatX<Scalar>& z = logits.value();
  if (static_cast<Index>(labels.size()) != z.rows())
    throw DimensionError("cross_entropy_mean: one label per row required");
  MatX<Scalar> probs(z.rows(), z.cols());
  Scalar loss = Scalar(0);
  for (Index r = 0; r < z.rows(); ++r) {
    const Scalar mx = z.row(r).maxCoeff();
    const Scalar denom = (z.row(r).array() - mx).exp().sum();
    probs.row(r) = ((z.row(r).array() - mx).exp() / denom).matrix();
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || static_cast<Index>(y) >= z.cols())
      throw DimensionError("cross_entropy_mean: label out of range");
    loss -= z(r, y) - mx - std::log(denom);
  }
  loss /= Scalar(z.rows());
  MatX<Scalar> v(1, 1);
  v(0, 0) = loss;
  return t.push(std::move(v), t.needs(logits),
                [il = logits.id, probs = std::move(probs),
                 labels = std::move(labels)](Tape<Scalar>& tp, int self) {
                  const Scalar g = tp.grad_at(self)(0, 0);
                  MatX<Scalar> dz = probs;
                  for (Index r = 0; r < dz.rows(); ++r)
                    dz(r, labels[static_cast<std::size_t>(r)]) -= Scalar(1);
                  tp.accum(il, dz * (g / Scalar(dz.rows())));
                });
}

// ---- plain counterparts, so generic code works on raw matrices too ----

template <class Scalar>
MatX<Scalar> add(const MatX<Scalar>& a, const MatX<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("add: shape mismatch");
  return a + b;
}

template <class Scalar>
MatX<Scalar> add_row(const MatX<Scalar>& x, const MatX<Scalar>& row) {
  if (row.rows() != 1 || row.cols() != x.cols())
    throw DimensionError("add_row: row must be 1 x cols(x)");
  return x.rowwise() + row.row(0);
}

template <class Scalar>
MatX<Scalar> scale(const MatX<Scalar>& a, Scalar s) {
  return a * s;
}

template <class Scalar>
MatX<Scalar> slice_rows(const MatX<Scalar>& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw DimensionError("slice_rows: range out of bounds");
  return a.middleRows(start, count);
}

template <class Scalar>
MatX<Scalar> row_mean(const MatX<Scalar>& a) {
  if (a.rows() == 0) throw DimensionError("row_mean: empty input");
  return a.colwise().mean();
}

template <class Scalar>
MatX<Scalar> row_max(const MatX<Scalar>& a) {
  if (a.rows() == 0) throw DimensionError("row_max: empty input");
  return a.colwise().maxCoeff();
}

/// Maps either backend to its scalar type.
template <class M>
struct scalar_of;
template <class S>
struct scalar_of<MatX<S>> {
  using type = S;
};
template <class S>
struct scalar_of<Var<S>> {
  using type = S;
};

/// Lifts a plain matrix into the backend of `proto` (no-op for matrices,
/// non-differentiable constant for tape variables).
template <class S>
MatX<S> lift_const(const MatX<S>&, MatX<S> v) {
  return v;
}
template <class S>
Var<S> lift_const(const Var<S>& proto, MatX<S> v) {
  return proto.tape->constant(std::move(v));
}

}  // namespace cbenc
