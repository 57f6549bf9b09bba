// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "cbenc/tape.hpp"
#include "cbenc/types.hpp"

namespace cbenc {

/// Half-open frame range, 0-based.
struct Span {
  Index begin = 0;
  Index end = 0;

  Index size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(Index t) const { return t >= begin && t < end; }
  bool operator==(const Span& o) const { return begin == o.begin && end == o.end; }
};

/// Partition of a T'-frame sequence into B possibly-overlapping blocks.
/// Block b (0-based) spans [b*hop, b*hop + block) truncated at T'. Each
/// block owns the central `hop` frames of its span for output assembly; the
/// first block also owns everything before its central window and the last
/// block owns everything after.
class BlockLayout {
 public:
  static BlockLayout make(Index t_prime, Index block_len, Index hop_len) {
    if (t_prime < 1) throw DimensionError("BlockLayout: T' must be >= 1");
    if (block_len < 1 || hop_len < 1 || hop_len > block_len)
      throw DimensionError("BlockLayout: need 1 <= L_hop <= L_block");
    BlockLayout lo;
    lo.t_prime_ = t_prime;
    lo.block_len_ = block_len;
    lo.hop_len_ = hop_len;
    lo.num_blocks_ = (t_prime + hop_len - 1) / hop_len;

    const Index offset = (block_len - hop_len) / 2;
    lo.owned_.resize(static_cast<std::size_t>(lo.num_blocks_));
    Index boundary = 0;
    for (Index b = 0; b < lo.num_blocks_; ++b) {
      const Index next =
          (b + 1 < lo.num_blocks_) ? std::min((b + 1) * hop_len + offset, t_prime) : t_prime;
      lo.owned_[static_cast<std::size_t>(b)] = Span{boundary, std::max(boundary, next)};
      boundary = std::max(boundary, next);
    }
    return lo;
  }

  Index t_prime() const { return t_prime_; }
  Index block_len() const { return block_len_; }
  Index hop_len() const { return hop_len_; }
  Index num_blocks() const { return num_blocks_; }

  Span span(Index b) const {
    check_block(b);
    return Span{b * hop_len_, std::min(b * hop_len_ + block_len_, t_prime_)};
  }

  Span owned(Index b) const {
    check_block(b);
    return owned_[static_cast<std::size_t>(b)];
  }

  /// Which block owns output frame t.
  Index owner(Index t) const {
    for (Index b = 0; b < num_blocks_; ++b)
      if (owned_[static_cast<std::size_t>(b)].contains(t)) return b;
    throw DimensionError("BlockLayout: frame outside [0, T')");
  }

  /// Number of interleaved mask classes needed so same-class blocks never
  /// overlap: ceil(L_block / L_hop).
  Index mask_classes() const { return (block_len_ + hop_len_ - 1) / hop_len_; }

 private:
  void check_block(Index b) const {
    if (b < 0 || b >= num_blocks_) throw DimensionError("BlockLayout: block index out of range");
  }

  Index t_prime_ = 0, block_len_ = 0, hop_len_ = 0, num_blocks_ = 0;
  std::vector<Span> owned_;
};

inline BlockLayout make_layout(Index t_prime, Index block_len, Index hop_len) {
  return BlockLayout::make(t_prime, block_len, hop_len);
}

inline std::vector<Span> contribution_spans(const BlockLayout& layout) {
  std::vector<Span> spans;
  spans.reserve(static_cast<std::size_t>(layout.num_blocks()));
  for (Index b = 0; b < layout.num_blocks(); ++b) spans.push_back(layout.owned(b));
  return spans;
}

/// Appends the B initial context rows after the frame rows:
/// u_ext = (u_1, ..., u_T', c_1, ..., c_B). c0 must be B x d_model.
template <class M>
M build_extended(const M& u, const M& c0) {
  return concat_rows<typename scalar_of<M>::type>({u, c0});
}

template <class Scalar>
MatX<Scalar> build_extended(const MatX<Scalar>& u, const MatX<Scalar>& c0) {
  if (u.cols() != c0.cols()) throw DimensionError("build_extended: feature dim mismatch");
  return concat_rows<Scalar>({u, c0});
}

/// Inverse of build_extended.
template <class Scalar>
std::pair<MatX<Scalar>, MatX<Scalar>> split_extended(const MatX<Scalar>& ext, Index t_prime) {
  if (t_prime < 0 || t_prime > ext.rows())
    throw DimensionError("split_extended: bad frame count");
  return {ext.topRows(t_prime), ext.bottomRows(ext.rows() - t_prime)};
}

}  // namespace cbenc
