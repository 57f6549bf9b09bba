// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <vector>

#include "cbenc/blocking.hpp"
#include "cbenc/mask.hpp"
#include "cbenc/types.hpp"

namespace cbenc {

/// Predecessor gap for contextual processing: 1 for non-overlapping blocks,
/// 2 for half-overlap (context of two blocks earlier, since consecutive
/// blocks live in different interleaved masks).
inline Index context_delta(const BlockLayout& layout) {
  if (layout.hop_len() == layout.block_len()) return 1;
  if (2 * layout.hop_len() == layout.block_len()) return 2;
  throw DimensionError("context_delta: contextual mode needs L_hop = L_block or L_block/2");
}

/// Block-diagonal masks for naive block processing, one per interleave
/// class. Class p covers blocks {p, p+K, p+2K, ...} (0-based, K classes),
/// which never overlap, so each pass is an independent per-block
/// computation. Rows not covered by any class-p block admit only themselves;
/// nothing covered ever attends to them.
inline std::vector<AttentionMask> naive_block_masks(const BlockLayout& layout) {
  const Index k_classes = layout.mask_classes();
  const Index t = layout.t_prime();
  std::vector<AttentionMask> masks;
  masks.reserve(static_cast<std::size_t>(k_classes));
  for (Index p = 0; p < k_classes; ++p) {
    AttentionMask m(t, t);
    std::vector<bool> covered(static_cast<std::size_t>(t), false);
    for (Index b = p; b < layout.num_blocks(); b += k_classes) {
      const Span s = layout.span(b);
      for (Index q = s.begin; q < s.end; ++q) {
        m.admit_range(q, s.begin, s.end);
        covered[static_cast<std::size_t>(q)] = true;
      }
    }
    for (Index q = 0; q < t; ++q)
      if (!covered[static_cast<std::size_t>(q)]) m.set(q, q);
    masks.push_back(std::move(m));
  }
  return masks;
}

/// Mask over the extended sequence (T' frame rows + B context rows) for one
/// layer of one interleave class. Layer numbering is 1-based.
///
/// For a covered block b: at layer 1 its frame rows and its own context row
/// admit {block-b frames, slot b}; at deeper layers they admit
/// {block-b frames, slot b-delta}, or the frames alone when b-delta does not
/// exist. Uncovered rows admit only themselves.
inline AttentionMask contextual_mask(const BlockLayout& layout, Index layer, Index delta,
                                     Index pass = 0) {
  if (layer < 1) throw DimensionError("contextual_mask: layer is 1-based");
  if (delta < 1 || pass < 0 || pass >= delta)
    throw DimensionError("contextual_mask: bad delta/pass");
  const Index t = layout.t_prime();
  const Index b_count = layout.num_blocks();
  const Index ext = t + b_count;
  AttentionMask m(ext, ext);
  std::vector<bool> covered(static_cast<std::size_t>(ext), false);
  for (Index b = pass; b < b_count; b += delta) {
    const Span s = layout.span(b);
    const Index slot_self = t + b;
    const Index slot_pred = t + b - delta;  // valid only when b >= delta
    const bool has_pred = layer > 1 && b >= delta;
    const Index ctx_col = (layer == 1) ? slot_self : (has_pred ? slot_pred : -1);

    auto admit_block_keys = [&](Index q) {
      m.admit_range(q, s.begin, s.end);
      if (ctx_col >= 0) m.set(q, ctx_col);
      covered[static_cast<std::size_t>(q)] = true;
    };
    for (Index q = s.begin; q < s.end; ++q) admit_block_keys(q);
    admit_block_keys(slot_self);
  }
  for (Index q = 0; q < ext; ++q)
    if (!covered[static_cast<std::size_t>(q)]) m.set(q, q);
  return m;
}

/// Residual source for every extended row at one layer of one interleave
/// class. The attention residual adds the key/value matrix, whose context row
/// is the predecessor context, so a covered context row b draws its residual
/// from slot b-delta at layers n > 1 (falling back to itself when the
/// predecessor does not exist). Frame rows and uncovered rows are their own
/// residual.
inline std::vector<Index> residual_route(const BlockLayout& layout, Index layer, Index delta,
                                         Index pass = 0) {
  const Index t = layout.t_prime();
  const Index b_count = layout.num_blocks();
  std::vector<Index> route(static_cast<std::size_t>(t + b_count));
  for (std::size_t i = 0; i < route.size(); ++i) route[i] = static_cast<Index>(i);
  if (layer <= 1) return route;
  for (Index b = pass; b < b_count; b += delta)
    if (b >= delta) route[static_cast<std::size_t>(t + b)] = t + b - delta;
  return route;
}

/// Extends a frames-only mask with B self-admitting context rows. Used to
/// ablate the context path: the extended rows stay inert and no frame row
/// ever attends to them.
inline AttentionMask extend_with_self_rows(const AttentionMask& frames, Index extra) {
  const Index t = frames.rows();
  AttentionMask m(t + extra, t + extra);
  for (Index q = 0; q < t; ++q)
    for (Index k = 0; k < t; ++k)
      if (frames.admit(q, k)) m.set(q, k);
  for (Index q = t; q < t + extra; ++q) m.set(q, q);
  return m;
}

}  // namespace cbenc
