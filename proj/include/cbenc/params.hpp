// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "cbenc/attention.hpp"
#include "cbenc/frontend.hpp"
#include "cbenc/rng.hpp"
#include "cbenc/tape.hpp"
#include "cbenc/types.hpp"

namespace cbenc {

/// One encoder layer: pre-norm gains/biases, the attention projections, and
/// the position-wise feed-forward weights.
template <class M>
struct LayerParams {
  M ln1_g, ln1_b;
  MhaParams<M> mha;
  M ln2_g, ln2_b;
  M w1, v1, w2, v2;
};

template <class M>
struct EncoderParams {
  FrontendParams<M> frontend;
  std::vector<LayerParams<M>> layers;
  M lnf_g, lnf_b;  // final normalization after the last layer
};

/// Linear classifier head used by the toy task.
template <class M>
struct ClassifierParams {
  M w, b;
};

template <class Scalar>
EncoderParams<MatX<Scalar>> init_encoder_params(Index layers, Index d_model, Index heads,
                                                Index d_ff, FrontendKind frontend, Index d_in,
                                                Rng& rng) {
  if (d_model % heads != 0)
    throw DimensionError("init_encoder_params: d_model must be divisible by head count");
  const Index d = d_model / heads;
  EncoderParams<MatX<Scalar>> p;
  p.frontend = init_frontend<Scalar>(frontend, d_in, d_model, rng);
  p.layers.resize(static_cast<std::size_t>(layers));
  for (auto& lp : p.layers) {
    lp.ln1_g = MatX<Scalar>::Ones(1, d_model);
    lp.ln1_b = MatX<Scalar>::Zero(1, d_model);
    for (Index h = 0; h < heads; ++h) {
      lp.mha.wq.push_back(glorot_uniform<Scalar>(d_model, d, rng));
      lp.mha.wk.push_back(glorot_uniform<Scalar>(d_model, d, rng));
      lp.mha.wv.push_back(glorot_uniform<Scalar>(d_model, d, rng));
    }
    lp.mha.wo = glorot_uniform<Scalar>(heads * d, d_model, rng);
    lp.ln2_g = MatX<Scalar>::Ones(1, d_model);
    lp.ln2_b = MatX<Scalar>::Zero(1, d_model);
    lp.w1 = glorot_uniform<Scalar>(d_model, d_ff, rng);
    lp.v1 = MatX<Scalar>::Zero(1, d_ff);
    lp.w2 = glorot_uniform<Scalar>(d_ff, d_model, rng);
    lp.v2 = MatX<Scalar>::Zero(1, d_model);
  }
  p.lnf_g = MatX<Scalar>::Ones(1, d_model);
  p.lnf_b = MatX<Scalar>::Zero(1, d_model);
  return p;
}

template <class Scalar>
ClassifierParams<MatX<Scalar>> init_classifier_params(Index d_model, Index classes, Rng& rng) {
  return {glorot_uniform<Scalar>(d_model, classes, rng), MatX<Scalar>::Zero(1, classes)};
}

/// Calls f(name, tensor&) for every tensor, in a fixed deterministic order.
template <class M, class F>
void visit_params(EncoderParams<M>& p, F&& f) {
  switch (p.frontend.kind) {
    case FrontendKind::Conv2d:
      f("frontend.conv1", p.frontend.conv1);
      f("frontend.conv2", p.frontend.conv2);
      f("frontend.proj", p.frontend.proj);
      break;
    default:
      f("frontend.proj", p.frontend.proj);
      break;
  }
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const std::string base = "layer" + std::to_string(i) + ".";
    auto& lp = p.layers[i];
    f(base + "ln1_g", lp.ln1_g);
    f(base + "ln1_b", lp.ln1_b);
    for (std::size_t h = 0; h < lp.mha.wq.size(); ++h) {
      const std::string head = base + "head" + std::to_string(h) + ".";
      f(head + "wq", lp.mha.wq[h]);
      f(head + "wk", lp.mha.wk[h]);
      f(head + "wv", lp.mha.wv[h]);
    }
    f(base + "wo", lp.mha.wo);
    f(base + "ln2_g", lp.ln2_g);
    f(base + "ln2_b", lp.ln2_b);
    f(base + "w1", lp.w1);
    f(base + "v1", lp.v1);
    f(base + "w2", lp.w2);
    f(base + "v2", lp.v2);
  }
  f("final.ln_g", p.lnf_g);
  f("final.ln_b", p.lnf_b);
}

template <class M, class F>
void visit_params(ClassifierParams<M>& p, F&& f) {
  f("head.w", p.w);
  f("head.b", p.b);
}

/// Mirrors a plain parameter set onto a tape as differentiable leaves.
template <class Scalar>
EncoderParams<Var<Scalar>> lift_params(Tape<Scalar>& tape,
                                       const EncoderParams<MatX<Scalar>>& p,
                                       bool needs_grad = true) {
  EncoderParams<Var<Scalar>> out;
  out.frontend.kind = p.frontend.kind;
  out.frontend.d_in = p.frontend.d_in;
  out.frontend.d_model = p.frontend.d_model;
  out.frontend.channels = p.frontend.channels;
  auto lift = [&](const MatX<Scalar>& m) { return tape.leaf(m, needs_grad); };
  out.frontend.proj = lift(p.frontend.proj);
  if (p.frontend.kind == FrontendKind::Conv2d) {
    out.frontend.conv1 = lift(p.frontend.conv1);
    out.frontend.conv2 = lift(p.frontend.conv2);
  }
  out.layers.reserve(p.layers.size());
  for (const auto& lp : p.layers) {
    LayerParams<Var<Scalar>> lo;
    lo.ln1_g = lift(lp.ln1_g);
    lo.ln1_b = lift(lp.ln1_b);
    for (std::size_t h = 0; h < lp.mha.wq.size(); ++h) {
      lo.mha.wq.push_back(lift(lp.mha.wq[h]));
      lo.mha.wk.push_back(lift(lp.mha.wk[h]));
      lo.mha.wv.push_back(lift(lp.mha.wv[h]));
    }
    lo.mha.wo = lift(lp.mha.wo);
    lo.ln2_g = lift(lp.ln2_g);
    lo.ln2_b = lift(lp.ln2_b);
    lo.w1 = lift(lp.w1);
    lo.v1 = lift(lp.v1);
    lo.w2 = lift(lp.w2);
    lo.v2 = lift(lp.v2);
    out.layers.push_back(std::move(lo));
  }
  out.lnf_g = lift(p.lnf_g);
  out.lnf_b = lift(p.lnf_b);
  return out;
}

template <class Scalar>
ClassifierParams<Var<Scalar>> lift_params(Tape<Scalar>& tape,
                                          const ClassifierParams<MatX<Scalar>>& p,
                                          bool needs_grad = true) {
  return {tape.leaf(p.w, needs_grad), tape.leaf(p.b, needs_grad)};
}

}  // namespace cbenc
