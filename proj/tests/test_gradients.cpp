// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cbenc/encoder.hpp"
#include "cbenc/gradcheck.hpp"
#include "cbenc/rng.hpp"

using namespace cbenc;

namespace {

constexpr double kEps = 1e-5;

Matd random_mat(Index r, Index c, Rng& rng) {
  Matd m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

// Reduces a matrix output to a scalar through fixed random linear maps so
// every entry's gradient is exercised.
Var<double> reduce(Tape<double>& tape, Var<double> y, std::uint64_t seed) {
  Rng rng(seed);
  Var<double> left = tape.constant(random_mat(1, y.rows(), rng));
  Var<double> right = tape.constant(random_mat(y.cols(), 1, rng));
  return matmul(matmul(left, y), right);
}

// Rebuilds an encoder parameter skeleton from a flat list of lifted vars,
// in visit_params order.
EncoderParams<Var<double>> params_from_vars(const EncoderParams<Matd>& shape,
                                            const std::vector<Var<double>>& vars,
                                            std::size_t& at) {
  EncoderParams<Var<double>> vp;
  vp.frontend.kind = shape.frontend.kind;
  vp.frontend.d_in = shape.frontend.d_in;
  vp.frontend.d_model = shape.frontend.d_model;
  vp.frontend.channels = shape.frontend.channels;
  vp.layers.resize(shape.layers.size());
  for (std::size_t i = 0; i < shape.layers.size(); ++i) {
    vp.layers[i].mha.wq.resize(shape.layers[i].mha.wq.size());
    vp.layers[i].mha.wk.resize(shape.layers[i].mha.wk.size());
    vp.layers[i].mha.wv.resize(shape.layers[i].mha.wv.size());
  }
  visit_params(vp, [&](const std::string&, Var<double>& v) { v = vars[at++]; });
  return vp;
}

}  // namespace

TEST_CASE("linear layer gradient vs central differences") {
  Rng rng(1);
  std::vector<Matd> inputs = {random_mat(3, 4, rng), random_mat(4, 5, rng),
                              random_mat(1, 5, rng)};
  auto report = grad_check<double>(
      [](Tape<double>& t, const std::vector<Var<double>>& v) {
        return reduce(t, add_row(matmul(v[0], v[1]), v[2]), 77);
      },
      inputs, kEps);
  CHECK(report.max_rel_err <= 1e-7);
}

TEST_CASE("masked softmax composed with sum loss") {
  Rng rng(2);
  AttentionMask m(4, 5);
  for (Index q = 0; q < 4; ++q) {
    m.set(q, q);
    for (Index k = 0; k < 5; ++k)
      if (rng.uniform01() < 0.6) m.set(q, k);
  }
  std::vector<Matd> inputs = {random_mat(4, 5, rng)};
  auto report = grad_check<double>(
      [&m](Tape<double>& t, const std::vector<Var<double>>& v) {
        return reduce(t, masked_softmax(v[0], m), 78);
      },
      inputs, kEps);
  CHECK(report.max_rel_err <= 1e-6);
}

TEST_CASE("layer norm gradient") {
  Rng rng(3);
  std::vector<Matd> inputs = {random_mat(4, 6, rng), random_mat(1, 6, rng),
                              random_mat(1, 6, rng)};
  auto report = grad_check<double>(
      [](Tape<double>& t, const std::vector<Var<double>>& v) {
        return reduce(t, layer_norm(v[0], v[1], v[2], 1e-12), 79);
      },
      inputs, kEps);
  CHECK(report.max_rel_err <= 1e-6);
}

TEST_CASE("relu, scale, add gradients") {
  Rng rng(4);
  std::vector<Matd> inputs = {random_mat(3, 3, rng), random_mat(3, 3, rng)};
  // Keep entries away from the ReLU kink.
  for (auto& m : inputs)
    for (Index i = 0; i < m.size(); ++i)
      if (std::abs(m.data()[i]) < 1e-2) m.data()[i] += 0.5;
  auto report = grad_check<double>(
      [](Tape<double>& t, const std::vector<Var<double>>& v) {
        return reduce(t, relu(scale(add(v[0], v[1]), 1.7)), 80);
      },
      inputs, kEps);
  CHECK(report.max_rel_err <= 1e-7);
}

TEST_CASE("matmul_nt gradient") {
  Rng rng(5);
  std::vector<Matd> inputs = {random_mat(3, 4, rng), random_mat(5, 4, rng)};
  auto report = grad_check<double>(
      [](Tape<double>& t, const std::vector<Var<double>>& v) {
        return reduce(t, matmul_nt(v[0], v[1]), 81);
      },
      inputs, kEps);
  CHECK(report.max_rel_err <= 1e-7);
}

TEST_CASE("gather, slice, concat gradients accumulate duplicates") {
  Rng rng(6);
  std::vector<Matd> inputs = {random_mat(4, 3, rng)};
  auto report = grad_check<double>(
      [](Tape<double>& t, const std::vector<Var<double>>& v) {
        Var<double> g = gather_rows(v[0], std::vector<Index>{0, 2, 2, 3, 0});
        Var<double> s = slice_rows(v[0], 1, 2);
        return add(reduce(t, concat_rows<double>({g, s}), 82),
                   reduce(t, g, 83));
      },
      inputs, kEps);
  CHECK(report.max_rel_err <= 1e-7);
}

TEST_CASE("row_mean and row_max gradients") {
  Rng rng(7);
  std::vector<Matd> inputs = {random_mat(5, 4, rng)};
  auto report = grad_check<double>(
      [](Tape<double>& t, const std::vector<Var<double>>& v) {
        return add(reduce(t, row_mean(v[0]), 84), reduce(t, row_max(v[0]), 85));
      },
      inputs, kEps);
  CHECK(report.max_rel_err <= 1e-6);
}

TEST_CASE("cross entropy gradient") {
  Rng rng(8);
  std::vector<Matd> inputs = {random_mat(6, 4, rng)};
  std::vector<int> labels = {0, 3, 1, 2, 2, 0};
  auto report = grad_check<double>(
      [&labels](Tape<double>&, const std::vector<Var<double>>& v) {
        return cross_entropy_mean(v[0], labels);
      },
      inputs, kEps);
  CHECK(report.max_rel_err <= 1e-7);
}

TEST_CASE("multihead attention block gradient") {
  Rng rng(9);
  const Index d_model = 8, heads = 2, d = 4, rows = 5;
  AttentionMask m(rows, rows);
  for (Index q = 0; q < rows; ++q) {
    m.set(q, q);
    for (Index k = 0; k < rows; ++k)
      if (rng.uniform01() < 0.5) m.set(q, k);
  }
  std::vector<Matd> inputs;
  inputs.push_back(random_mat(rows, d_model, rng));  // x
  for (int i = 0; i < 3 * heads; ++i) inputs.push_back(random_mat(d_model, d, rng));
  inputs.push_back(random_mat(heads * d, d_model, rng));  // wo
  auto report = grad_check<double>(
      [&](Tape<double>& t, const std::vector<Var<double>>& v) {
        MhaParams<Var<double>> p;
        std::size_t at = 1;
        for (Index h = 0; h < heads; ++h) {
          p.wq.push_back(v[at++]);
          p.wk.push_back(v[at++]);
          p.wv.push_back(v[at++]);
        }
        p.wo = v[at++];
        return reduce(t, multi_head(v[0], v[0], v[0], p, m), 86);
      },
      inputs, kEps);
  CHECK(report.max_rel_err <= 1e-6);
}

TEST_CASE("full 2-layer toy encoder gradient") {
  EncoderConfig cfg;
  cfg.layers = 2;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.d_ff = 12;
  cfg.block_len = 4;
  cfg.hop_len = 4;
  cfg.mode = EncoderMode::Contextual;
  cfg.context_init = ContextInitMode::PEAvg;
  cfg.frontend = FrontendKind::Identity;
  Rng rng(10);
  EncoderParams<Matd> shape =
      init_encoder_params<double>(cfg.layers, cfg.d_model, cfg.heads, cfg.d_ff, cfg.frontend,
                                  /*d_in=*/6, rng);
  const Index t_prime = 8;
  const BlockLayout layout = make_layout(t_prime, cfg.block_len, cfg.hop_len);
  const MaskPlan plan = MaskPlan::make(layout, cfg);
  std::vector<int> labels;
  for (Index t = 0; t < t_prime; ++t) labels.push_back(static_cast<int>(t % 3));

  std::vector<Matd> inputs;
  visit_params(shape, [&](const std::string&, Matd& t) { inputs.push_back(t); });
  inputs.push_back(random_mat(cfg.d_model, 3, rng));  // head w
  inputs.push_back(random_mat(1, 3, rng));            // head b
  inputs.push_back(random_mat(t_prime, 6, rng));      // x

  auto report = grad_check<double>(
      [&](Tape<double>&, const std::vector<Var<double>>& v) {
        std::size_t at = 0;
        EncoderParams<Var<double>> vp = params_from_vars(shape, v, at);
        Var<double> hw = v[at++];
        Var<double> hb = v[at++];
        Var<double> vx = v[at++];
        Var<double> u = frontend_forward(vx, cfg, vp);
        NullSink<double> sink;
        Var<double> h = encode_masked_core(u, cfg, vp, layout, plan, sink);
        return cross_entropy_mean(add_row(matmul(h, hw), hb), labels);
      },
      inputs, kEps);
  CHECK(report.max_rel_err <= 1e-4);
}
