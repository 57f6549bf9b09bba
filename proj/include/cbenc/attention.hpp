// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cbenc/mask.hpp"
#include "cbenc/numerics.hpp"
#include "cbenc/tape.hpp"
#include "cbenc/types.hpp"

namespace cbenc {

/// Counts the score/softmax/value work actually executed inside attention.
/// Each admitted (query, key) pair costs 2d mul-adds for the score, 2d for
/// the value accumulation, and ~4 scalar ops in the softmax.
struct AttnProbe {
  std::uint64_t pairs = 0;
  std::uint64_t flops = 0;

  void record(Index admitted, Index d) {
    pairs += static_cast<std::uint64_t>(admitted);
    flops += static_cast<std::uint64_t>(admitted) * static_cast<std::uint64_t>(4 * d + 4);
  }
};

/// softmax(q k^T / sqrt(d), mask) v, computed per query row over the admitted
/// keys only. Masked keys are skipped outright, never multiplied by zero, so
/// perturbing them cannot change a single output bit.
template <class Scalar>
MatX<Scalar> scaled_dot_attention(const MatX<Scalar>& q, const MatX<Scalar>& k,
                                  const MatX<Scalar>& v, const AttentionMask& mask,
                                  MatX<Scalar>* weights_out = nullptr,
                                  AttnProbe* probe = nullptr) {
  if (q.cols() != k.cols()) throw DimensionError("scaled_dot_attention: q/k width mismatch");
  if (k.rows() != v.rows()) throw DimensionError("scaled_dot_attention: k/v row mismatch");
  if (mask.rows() != q.rows() || mask.cols() != k.rows())
    throw DimensionError("scaled_dot_attention: mask must be q.rows x k.rows");
  const Index d = q.cols();
  const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(d));

  MatX<Scalar> out = MatX<Scalar>::Zero(q.rows(), v.cols());
  if (weights_out) *weights_out = MatX<Scalar>::Zero(q.rows(), k.rows());

  std::vector<Index> keys;
  std::vector<Scalar> w;
  for (Index i = 0; i < q.rows(); ++i) {
    keys.clear();
    w.clear();
    for (Index j = 0; j < k.rows(); ++j)
      if (mask.admit(i, j)) keys.push_back(j);
    if (keys.empty())
      throw DimensionError("scaled_dot_attention: fully-masked query row " + std::to_string(i));

    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Index j : keys) {
      const Scalar s = q.row(i).dot(k.row(j)) * inv_sqrt_d;
      w.push_back(s);
      if (s > mx) mx = s;
    }
    Scalar denom = Scalar(0);
    for (auto& s : w) {
      s = std::exp(s - mx);
      denom += s;
    }
    for (std::size_t n = 0; n < keys.size(); ++n) {
      const Scalar weight = w[n] / denom;
      out.row(i) += weight * v.row(keys[n]);
      if (weights_out) (*weights_out)(i, keys[n]) = weight;
    }
    if (probe) probe->record(static_cast<Index>(keys.size()), d);
  }
  return out;
}

/// Per-head projections for one layer: w_q/w_k/w_v are d_model x d each,
/// w_o is (m*d) x d_model.
template <class M>
struct MhaParams {
  std::vector<M> wq, wk, wv;
  M wo;

  Index head_count() const { return static_cast<Index>(wq.size()); }
};

/// Multihead attention: heads run scaled_dot_attention on projected inputs,
/// the concatenation is projected by w_o. Optionally hands back every head's
/// post-softmax weight matrix.
template <class Scalar>
MatX<Scalar> multi_head(const MatX<Scalar>& q, const MatX<Scalar>& k, const MatX<Scalar>& v,
                        const MhaParams<MatX<Scalar>>& p, const AttentionMask& mask,
                        std::vector<MatX<Scalar>>* head_weights = nullptr,
                        AttnProbe* probe = nullptr) {
  const Index m = p.head_count();
  if (m == 0 || p.wk.size() != static_cast<std::size_t>(m) ||
      p.wv.size() != static_cast<std::size_t>(m))
    throw DimensionError("multi_head: inconsistent head parameter counts");
  const Index d = p.wq.front().cols();
  MatX<Scalar> heads(q.rows(), m * d);
  for (Index i = 0; i < m; ++i) {
    const std::size_t h = static_cast<std::size_t>(i);
    MatX<Scalar> qi = matmul(q, p.wq[h]);
    MatX<Scalar> ki = matmul(k, p.wk[h]);
    MatX<Scalar> vi = matmul(v, p.wv[h]);
    MatX<Scalar> w;
    heads.middleCols(i * d, d) =
        scaled_dot_attention(qi, ki, vi, mask, head_weights ? &w : nullptr, probe);
    if (head_weights) head_weights->push_back(std::move(w));
  }
  return matmul(heads, p.wo);
}

/// Tape version, composed from primitives. The probe and weight sink are
/// accepted for signature parity with the plain path and ignored.
template <class Scalar>
Var<Scalar> multi_head(const Var<Scalar>& q, const Var<Scalar>& k, const Var<Scalar>& v,
                       const MhaParams<Var<Scalar>>& p, const AttentionMask& mask,
                       std::vector<MatX<Scalar>>* = nullptr, AttnProbe* = nullptr) {
  const Index m = p.head_count();
  const Index d = p.wq.front().cols();
  const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
  Var<Scalar> out;
  for (Index i = 0; i < m; ++i) {
    const std::size_t h = static_cast<std::size_t>(i);
    Var<Scalar> qi = matmul(q, p.wq[h]);
    Var<Scalar> ki = matmul(k, p.wk[h]);
    Var<Scalar> vi = matmul(v, p.wv[h]);
    Var<Scalar> w = masked_softmax(scale(matmul_nt(qi, ki), inv_sqrt_d), mask);
    Var<Scalar> head = matmul(w, vi);
    Var<Scalar> proj = matmul(head, slice_rows(p.wo, i * d, d));
    out = (i == 0) ? proj : add(out, proj);
  }
  return out;
}

}  // namespace cbenc
