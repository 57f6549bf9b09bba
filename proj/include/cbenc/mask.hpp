// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <sstream>
#include <string>

#include "cbenc/types.hpp"

namespace cbenc {

/// Boolean key-admissibility matrix: admit(q, k) says whether query row q may
/// attend to key row k. Softmax support is exactly the admitted set.
class AttentionMask {
 public:
  AttentionMask(Index rows, Index cols, bool admit_all = false)
      : bits_(Bits::Constant(rows, cols, admit_all)) {}

  static AttentionMask all(Index rows, Index cols) { return AttentionMask(rows, cols, true); }

  Index rows() const { return bits_.rows(); }
  Index cols() const { return bits_.cols(); }

  bool admit(Index q, Index k) const { return bits_(q, k); }
  void set(Index q, Index k, bool v = true) { bits_(q, k) = v; }

  void admit_range(Index q, Index k_begin, Index k_end, bool v = true) {
    for (Index k = k_begin; k < k_end; ++k) bits_(q, k) = v;
  }

  bool row_nonempty(Index q) const {
    for (Index k = 0; k < cols(); ++k)
      if (bits_(q, k)) return true;
    return false;
  }

  bool all_rows_nonempty() const {
    for (Index q = 0; q < rows(); ++q)
      if (!row_nonempty(q)) return false;
    return true;
  }

  Index admitted_count() const { return bits_.count(); }

  bool operator==(const AttentionMask& o) const {
    return rows() == o.rows() && cols() == o.cols() && (bits_ == o.bits_).all();
  }

  /// Plain PBM (P1) bitmap, 1 = admissible.
  std::string to_pbm() const {
    std::ostringstream out;
    out << "P1\n" << cols() << " " << rows() << "\n";
    for (Index q = 0; q < rows(); ++q) {
      for (Index k = 0; k < cols(); ++k) {
        if (k) out << ' ';
        out << (bits_(q, k) ? '1' : '0');
      }
      out << '\n';
    }
    return out.str();
  }

 private:
  using Bits = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Bits bits_;
};

}  // namespace cbenc
