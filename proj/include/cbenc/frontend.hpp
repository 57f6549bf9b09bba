// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cbenc/numerics.hpp"
#include "cbenc/rng.hpp"
#include "cbenc/tape.hpp"
#include "cbenc/types.hpp"

namespace cbenc {

enum class FrontendKind {
  Identity,          // per-frame linear projection, no downsampling (test mode)
  SubsampleProject,  // keep every 4th frame, then project
  Conv2d,            // two 3x3 stride-2 conv layers over (time, freq), flatten, project
};

inline const char* to_string(FrontendKind k) {
  switch (k) {
    case FrontendKind::Identity: return "identity";
    case FrontendKind::SubsampleProject: return "subsample";
    case FrontendKind::Conv2d: return "conv2d";
  }
  return "?";
}

inline Index frontend_factor(FrontendKind k) {
  return k == FrontendKind::Identity ? 1 : 4;
}

/// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(...); pos is
/// 0-based.
template <class Scalar>
RowX<Scalar> positional_encoding(Index pos, Index d_model) {
  if (pos < 0) throw DimensionError("positional_encoding: pos must be >= 0");
  if (d_model <= 0 || d_model % 2 != 0)
    throw DimensionError("positional_encoding: d_model must be positive and even");
  RowX<Scalar> pe(d_model);
  for (Index i = 0; 2 * i < d_model; ++i) {
    const double angle =
        static_cast<double>(pos) /
        std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
    pe(2 * i) = static_cast<Scalar>(std::sin(angle));
    pe(2 * i + 1) = static_cast<Scalar>(std::cos(angle));
  }
  return pe;
}

template <class Scalar>
MatX<Scalar> positional_encoding_table(Index count, Index d_model) {
  MatX<Scalar> t(count, d_model);
  for (Index p = 0; p < count; ++p) t.row(p) = positional_encoding<Scalar>(p, d_model);
  return t;
}

/// Trainable front-end parameters. `proj` maps the flattened per-frame
/// features to d_model; conv kernels are only populated for Conv2d.
/// Kernels are stored flattened: conv1 is channels x 9 (3x3 over one input
/// channel), conv2 is channels x (9 * channels).
template <class M>
struct FrontendParams {
  FrontendKind kind = FrontendKind::Identity;
  Index d_in = 0;
  Index d_model = 0;
  Index channels = 0;  // Conv2d only
  M proj;
  M conv1;
  M conv2;
};

inline Index downsampled_len(FrontendKind kind, Index t_raw) {
  if (kind == FrontendKind::Identity) return t_raw;
  return (t_raw + 3) / 4;
}

/// Raw frames required before downsampled frame j (0-based) is computable
/// without knowing the end of the stream.
inline Index raw_frames_needed(FrontendKind kind, Index j) {
  switch (kind) {
    case FrontendKind::Identity: return j + 1;
    case FrontendKind::SubsampleProject: return 4 * j + 1;
    case FrontendKind::Conv2d: return 4 * (j + 1);
  }
  return j + 1;
}

namespace detail {

// One output frame of the two stride-2 'same'-padded 3x3 conv stack.
// t2 is 0-based; x rows outside [0, T) read as zeros, as do the final-frame
// windows once the true T is known.
template <class Scalar>
RowX<Scalar> conv2d_frame(const MatX<Scalar>& x, Index t_raw_total, Index t2,
                          const FrontendParams<MatX<Scalar>>& p) {
  const Index c = p.channels;
  const Index f_in = p.d_in;
  const Index f1 = (f_in + 1) / 2;
  const Index f2 = (f1 + 1) / 2;

  auto raw_at = [&](Index t, Index f) -> Scalar {
    if (t < 0 || t >= t_raw_total || f < 0 || f >= f_in) return Scalar(0);
    return x(t, f);
  };

  // First layer evaluated lazily on the three time rows the second layer needs.
  // layer1(t1, f1idx, ch), centered at raw (2*t1, 2*f1idx).
  auto layer1_at = [&](Index t1, Index fi, Index ch) -> Scalar {
    const Index t1_count = (t_raw_total + 1) / 2;
    if (t1 < 0 || t1 >= t1_count || fi < 0 || fi >= f1) return Scalar(0);
    Scalar acc = Scalar(0);
    for (Index dt = -1; dt <= 1; ++dt)
      for (Index df = -1; df <= 1; ++df)
        acc += raw_at(2 * t1 + dt, 2 * fi + df) * p.conv1(ch, (dt + 1) * 3 + (df + 1));
    return acc > Scalar(0) ? acc : Scalar(0);
  };

  RowX<Scalar> flat(f2 * c);
  for (Index fi = 0; fi < f2; ++fi) {
    for (Index ch = 0; ch < c; ++ch) {
      Scalar acc = Scalar(0);
      for (Index dt = -1; dt <= 1; ++dt) {
        for (Index df = -1; df <= 1; ++df) {
          for (Index ci = 0; ci < c; ++ci) {
            const Scalar w = p.conv2(ch, ci * 9 + (dt + 1) * 3 + (df + 1));
            acc += layer1_at(2 * t2 + dt, 2 * fi + df, ci) * w;
          }
        }
      }
      flat(fi * c + ch) = acc > Scalar(0) ? acc : Scalar(0);
    }
  }
  return flat;
}

}  // namespace detail

/// Rows of the flattened pre-projection features for frames [t_begin, t_end).
template <class Scalar>
MatX<Scalar> downsample_flat(const MatX<Scalar>& x, Index t_raw_total,
                             const FrontendParams<MatX<Scalar>>& p, Index t_begin, Index t_end) {
  const Index n = t_end - t_begin;
  switch (p.kind) {
    case FrontendKind::Identity: {
      return x.middleRows(t_begin, n);
    }
    case FrontendKind::SubsampleProject: {
      MatX<Scalar> out(n, p.d_in);
      for (Index j = 0; j < n; ++j) out.row(j) = x.row(4 * (t_begin + j));
      return out;
    }
    case FrontendKind::Conv2d: {
      const Index f2 = ((p.d_in + 1) / 2 + 1) / 2;
      MatX<Scalar> out(n, f2 * p.channels);
      for (Index j = 0; j < n; ++j)
        out.row(j) = detail::conv2d_frame(x, t_raw_total, t_begin + j, p);
      return out;
    }
  }
  throw DimensionError("downsample_flat: unknown frontend kind");
}

/// Full downsampling pass: T x d_in raw features -> ceil(T/4) x d_model
/// (T x d_model for Identity).
template <class Scalar>
MatX<Scalar> downsample(const MatX<Scalar>& x, const FrontendParams<MatX<Scalar>>& p) {
  if (x.cols() != p.d_in) throw DimensionError("downsample: input feature dim mismatch");
  if (p.kind != FrontendKind::Identity && x.rows() < 4)
    throw DimensionError("downsample: need at least 4 raw frames");
  if (x.rows() < 1) throw DimensionError("downsample: empty input");
  const Index t_prime = downsampled_len(p.kind, x.rows());
  MatX<Scalar> flat = downsample_flat(x, x.rows(), p, 0, t_prime);
  return matmul(flat, p.proj);
}

/// u_t += PE(t-1) with 0-based positions over the downsampled sequence.
template <class Scalar>
MatX<Scalar> add_positional(const MatX<Scalar>& u) {
  if (u.cols() % 2 != 0) throw DimensionError("add_positional: d_model must be even");
  MatX<Scalar> out = u;
  for (Index t = 0; t < u.rows(); ++t)
    out.row(t) += positional_encoding<Scalar>(t, u.cols());
  return out;
}

template <class Scalar>
FrontendParams<MatX<Scalar>> init_frontend(FrontendKind kind, Index d_in, Index d_model,
                                           Rng& rng) {
  FrontendParams<MatX<Scalar>> p;
  p.kind = kind;
  p.d_in = d_in;
  p.d_model = d_model;
  switch (kind) {
    case FrontendKind::Identity:
    case FrontendKind::SubsampleProject:
      p.proj = glorot_uniform<Scalar>(d_in, d_model, rng);
      break;
    case FrontendKind::Conv2d: {
      p.channels = d_model;
      p.conv1 = glorot_uniform<Scalar>(p.channels, 9, rng);
      p.conv2 = glorot_uniform<Scalar>(p.channels, 9 * p.channels, rng);
      const Index f2 = ((d_in + 1) / 2 + 1) / 2;
      p.proj = glorot_uniform<Scalar>(f2 * p.channels, d_model, rng);
      break;
    }
  }
  return p;
}

}  // namespace cbenc
