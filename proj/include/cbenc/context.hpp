// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "cbenc/attention.hpp"
#include "cbenc/frontend.hpp"
#include "cbenc/params.hpp"
#include "cbenc/types.hpp"

namespace cbenc {

enum class ContextInitMode { PE, AvgInput, MaxInput, PEAvg, PEMax };

inline const char* to_string(ContextInitMode m) {
  switch (m) {
    case ContextInitMode::PE: return "pe";
    case ContextInitMode::AvgInput: return "avg";
    case ContextInitMode::MaxInput: return "max";
    case ContextInitMode::PEAvg: return "pe_avg";
    case ContextInitMode::PEMax: return "pe_max";
  }
  return "?";
}

/// Initial context vector c_b^0 for block b (0-based, so the PE position is
/// exactly b). Avg/Max are temporal statistics of the block's input rows.
template <class Scalar>
MatX<Scalar> init_context(const MatX<Scalar>& u_b, Index b, ContextInitMode mode,
                          Index d_model) {
  const bool needs_input = mode != ContextInitMode::PE;
  if (needs_input && u_b.rows() == 0)
    throw DimensionError("init_context: empty block for input-statistic mode");
  MatX<Scalar> c;
  switch (mode) {
    case ContextInitMode::PE: c = MatX<Scalar>::Zero(1, d_model); break;
    case ContextInitMode::AvgInput:
    case ContextInitMode::PEAvg: c = row_mean(u_b); break;
    case ContextInitMode::MaxInput:
    case ContextInitMode::PEMax: c = row_max(u_b); break;
  }
  if (mode == ContextInitMode::PE || mode == ContextInitMode::PEAvg ||
      mode == ContextInitMode::PEMax)
    c.row(0) += positional_encoding<Scalar>(b, d_model);
  return c;
}

/// Q/K/V for one block layer, augmented with context rows:
/// q = [z; c_query], kv = [z; c_kv] or [z] when the predecessor is absent.
template <class Scalar>
struct Augmented {
  MatX<Scalar> q;
  MatX<Scalar> kv;
  bool has_pred = false;
};

template <class Scalar>
Augmented<Scalar> augment(const MatX<Scalar>& z_prev, const MatX<Scalar>& c_query,
                          const MatX<Scalar>* c_kv) {
  if (c_query.rows() != 1 || c_query.cols() != z_prev.cols())
    throw DimensionError("augment: context vector must be 1 x d_model");
  if (c_kv && (c_kv->rows() != 1 || c_kv->cols() != z_prev.cols()))
    throw DimensionError("augment: predecessor context must be 1 x d_model");
  Augmented<Scalar> a;
  a.q = concat_rows<Scalar>({z_prev, c_query});
  a.kv = c_kv ? concat_rows<Scalar>({z_prev, *c_kv}) : z_prev;
  a.has_pred = c_kv != nullptr;
  return a;
}

template <class Scalar>
struct LayerResult {
  MatX<Scalar> z;  // block rows
  MatX<Scalar> c;  // new context vector, 1 x d_model
};

/// One pre-norm encoder layer of one block with context inheritance:
///
///   zi = MHD(LN(q), LN(kv), LN(kv)) + kv_residual
///   zo = FFN(LN(zi)) + zi
///
/// where kv_residual stacks the unnormalized block rows with the
/// (unnormalized) predecessor context, or the query context when no
/// predecessor exists. The last row of zo is the new context vector.
template <class Scalar>
LayerResult<Scalar> layer_forward(const MatX<Scalar>& z_prev, const MatX<Scalar>& c_query,
                                  const MatX<Scalar>* c_kv, const LayerParams<MatX<Scalar>>& p,
                                  Scalar eps, AttnProbe* probe = nullptr) {
  Augmented<Scalar> a = augment(z_prev, c_query, c_kv);
  MatX<Scalar> qn = layer_norm(a.q, p.ln1_g, p.ln1_b, eps);
  MatX<Scalar> kvn = layer_norm(a.kv, p.ln1_g, p.ln1_b, eps);
  const AttentionMask full = AttentionMask::all(qn.rows(), kvn.rows());
  MatX<Scalar> att =
      multi_head(qn, kvn, kvn, p.mha, full, static_cast<std::vector<MatX<Scalar>>*>(nullptr),
                 probe);

  MatX<Scalar> residual(att.rows(), att.cols());
  residual.topRows(z_prev.rows()) = z_prev;
  residual.bottomRows(1) = a.has_pred ? *c_kv : c_query;

  MatX<Scalar> zi = att + residual;
  MatX<Scalar> zo = ffn(layer_norm(zi, p.ln2_g, p.ln2_b, eps), p.w1, p.v1, p.w2, p.v2) + zi;
  return {zo.topRows(z_prev.rows()), zo.bottomRows(1)};
}

/// Per-layer ring of the last `delta` blocks' context vectors, owned by one
/// streaming session. Level n holds c^n (n = 0 is the initial context).
template <class Scalar>
class ContextState {
 public:
  ContextState(Index levels, Index delta) : delta_(delta) {
    rings_.resize(static_cast<std::size_t>(levels));
  }

  Index delta() const { return delta_; }
  Index blocks_seen() const { return blocks_seen_; }

  /// Context of block (blocks_seen - delta) at the given level, or null when
  /// that block does not exist yet.
  const MatX<Scalar>* predecessor(Index level) const {
    const auto& ring = rings_[static_cast<std::size_t>(level)];
    if (blocks_seen_ < delta_) return nullptr;
    return &ring.front();
  }

  /// Record all levels of the block just processed.
  void push_block(const std::vector<MatX<Scalar>>& levels) {
    if (levels.size() != rings_.size())
      throw DimensionError("ContextState: wrong number of context levels");
    for (std::size_t n = 0; n < rings_.size(); ++n) {
      rings_[n].push_back(levels[n]);
      if (static_cast<Index>(rings_[n].size()) > delta_) rings_[n].pop_front();
    }
    ++blocks_seen_;
  }

  /// Test hook: perturbs every stored vector (negative control for the
  /// stream/batch comparison). The bump is asymmetric so pre-norm layers
  /// cannot cancel it.
  void corrupt() {
    for (auto& ring : rings_)
      for (auto& c : ring) c(0, 0) += Scalar(1);
  }

 private:
  Index delta_ = 1;
  Index blocks_seen_ = 0;
  std::vector<std::deque<MatX<Scalar>>> rings_;
};

}  // namespace cbenc
