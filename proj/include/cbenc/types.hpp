// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace cbenc {

using Index = Eigen::Index;

/// Dense row-major matrix, rows = frames, cols = features.
template <class Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A single feature vector, kept as a 1xD row so it concatenates with frame matrices.
template <class Scalar>
using RowX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matd = MatX<double>;
using Matf = MatX<float>;

enum class Precision { F64, F32 };

/// Shape or argument contract violations.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed files, configs, or misuse of a stateful protocol.
class BadInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf reached a point where all values must be finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A verification step (equivalence run, separation verdict, ...) failed.
class CheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class Scalar>
inline void require_finite(const MatX<Scalar>& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite values");
}

/// Layer-norm variance guard; chosen per precision.
template <class Scalar>
constexpr Scalar layer_norm_eps() {
  if constexpr (sizeof(Scalar) == 8) {
    return Scalar(1e-12);
  } else {
    return Scalar(1e-5);
  }
}

}  // namespace cbenc
