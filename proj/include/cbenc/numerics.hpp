// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "cbenc/mask.hpp"
#include "cbenc/types.hpp"

namespace cbenc {

template <class Scalar>
MatX<Scalar> matmul(const MatX<Scalar>& a, const MatX<Scalar>& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + ")");
  return a * b;
}

template <class Scalar>
MatX<Scalar> relu(const MatX<Scalar>& x) {
  return x.cwiseMax(Scalar(0));
}

/// Row-wise softmax restricted to the admitted entries of each row.
/// Masked entries come out exactly zero; their input values are never read.
template <class Scalar>
MatX<Scalar> masked_softmax_rows(const MatX<Scalar>& scores, const AttentionMask& mask) {
  if (mask.rows() != scores.rows() || mask.cols() != scores.cols())
    throw DimensionError("masked_softmax_rows: mask shape does not match scores");
  MatX<Scalar> out = MatX<Scalar>::Zero(scores.rows(), scores.cols());
  for (Index q = 0; q < scores.rows(); ++q) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    Index admitted = 0;
    for (Index k = 0; k < scores.cols(); ++k) {
      if (!mask.admit(q, k)) continue;
      ++admitted;
      if (scores(q, k) > mx) mx = scores(q, k);
    }
    if (admitted == 0)
      throw DimensionError("masked_softmax_rows: fully-masked row " + std::to_string(q));
    Scalar denom = Scalar(0);
    for (Index k = 0; k < scores.cols(); ++k) {
      if (!mask.admit(q, k)) continue;
      const Scalar e = std::exp(scores(q, k) - mx);
      out(q, k) = e;
      denom += e;
    }
    for (Index k = 0; k < scores.cols(); ++k) {
      if (mask.admit(q, k)) out(q, k) /= denom;
    }
  }
  return out;
}

/// Per-frame normalization over the feature axis, then gain/bias. Rows never
/// couple: frame t's output is a function of frame t alone.
template <class Scalar>
MatX<Scalar> layer_norm(const MatX<Scalar>& x, const RowX<Scalar>& gain,
                        const RowX<Scalar>& bias, Scalar eps) {
  if (gain.cols() != x.cols() || bias.cols() != x.cols())
    throw DimensionError("layer_norm: gain/bias length must equal feature dim");
  const Index d = x.cols();
  MatX<Scalar> out(x.rows(), d);
  for (Index t = 0; t < x.rows(); ++t) {
    const Scalar mean = x.row(t).mean();
    const Scalar var = (x.row(t).array() - mean).square().sum() / Scalar(d);
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    out.row(t) = ((x.row(t).array() - mean) * inv) * gain.array() + bias.array();
  }
  return out;
}

template <class Scalar>
MatX<Scalar> layer_norm(const MatX<Scalar>& x, const MatX<Scalar>& gain, const MatX<Scalar>& bias,
                        Scalar eps) {
  if (gain.rows() != 1 || bias.rows() != 1)
    throw DimensionError("layer_norm: gain/bias must be 1 x d");
  RowX<Scalar> g = gain.row(0);
  RowX<Scalar> b = bias.row(0);
  return layer_norm<Scalar>(x, g, b, eps);
}

/// Position-wise feed-forward: max(0, x*W1 + v1)*W2 + v2.
template <class Scalar>
MatX<Scalar> ffn(const MatX<Scalar>& x, const MatX<Scalar>& w1, const RowX<Scalar>& v1,
                 const MatX<Scalar>& w2, const RowX<Scalar>& v2) {
  if (x.cols() != w1.rows() || w1.cols() != w2.rows() || v1.cols() != w1.cols() ||
      v2.cols() != w2.cols())
    throw DimensionError("ffn: shape chain d_model -> d_ff -> d_model violated");
  MatX<Scalar> hidden = (x * w1).rowwise() + v1;
  hidden = hidden.cwiseMax(Scalar(0));
  return (hidden * w2).rowwise() + v2;
}

template <class Scalar>
MatX<Scalar> ffn(const MatX<Scalar>& x, const MatX<Scalar>& w1, const MatX<Scalar>& v1,
                 const MatX<Scalar>& w2, const MatX<Scalar>& v2) {
  if (v1.rows() != 1 || v2.rows() != 1) throw DimensionError("ffn: biases must be 1 x d");
  RowX<Scalar> r1 = v1.row(0);
  RowX<Scalar> r2 = v2.row(0);
  return ffn<Scalar>(x, w1, r1, w2, r2);
}

template <class Scalar>
MatX<Scalar> gather_rows(const MatX<Scalar>& x, const std::vector<Index>& idx) {
  MatX<Scalar> out(static_cast<Index>(idx.size()), x.cols());
  for (Index i = 0; i < out.rows(); ++i) {
    const Index r = idx[static_cast<std::size_t>(i)];
    if (r < 0 || r >= x.rows()) throw DimensionError("gather_rows: index out of range");
    out.row(i) = x.row(r);
  }
  return out;
}

template <class Scalar>
MatX<Scalar> concat_rows(const std::vector<MatX<Scalar>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: empty input");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("concat_rows: column mismatch");
    rows += p.rows();
  }
  MatX<Scalar> out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  return out;
}

}  // namespace cbenc
