// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0
//
// End-to-end acceptance suite. Each criterion prints exactly one PASS/FAIL
// line; the process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <vector>

#include "cbenc/encoder.hpp"
#include "cbenc/gradcheck.hpp"
#include "cbenc/masks.hpp"
#include "cbenc/rng.hpp"
#include "cbenc/toytrain.hpp"

using namespace cbenc;

namespace {

struct Criterion {
  int id;
  const char* name;
  bool pass;
  std::string detail;
};

std::vector<Criterion> g_results;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int id, const char* name, bool pass, const std::string& detail, double secs) {
  std::printf("[%s] criterion %d: %s (%s; %.1fs)\n", pass ? "PASS" : "FAIL", id, name,
              detail.c_str(), secs);
  std::fflush(stdout);
  g_results.push_back({id, name, pass, detail});
}

Matd random_mat(Index r, Index c, Rng& rng) {
  Matd m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

// ---------------------------------------------------------------------------
// 1. Stream/batch equivalence over randomized configurations.
// ---------------------------------------------------------------------------
void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20260810);
  const ContextInitMode inits[] = {ContextInitMode::PE, ContextInitMode::AvgInput,
                                   ContextInitMode::MaxInput, ContextInitMode::PEAvg,
                                   ContextInitMode::PEMax};
  const FrontendKind fronts[] = {FrontendKind::Identity, FrontendKind::SubsampleProject,
                                 FrontendKind::Conv2d};
  double worst = 0;
  int configs = 0;
  for (int iter = 0; iter < 120; ++iter) {
    EncoderConfig cfg;
    cfg.layers = 1 + static_cast<Index>(rng.below(4));          // <= 4
    cfg.heads = Index(1) << static_cast<Index>(rng.below(3));   // 1, 2, 4
    cfg.d_model = cfg.heads * 2 * (1 + static_cast<Index>(rng.below(4)));
    while (cfg.d_model > 32) cfg.d_model -= cfg.heads * 2;
    cfg.d_ff = 8 + static_cast<Index>(rng.below(24));
    const Index delta = 1 + static_cast<Index>(rng.below(2));   // 1 or 2
    cfg.hop_len = 1 + static_cast<Index>(rng.below(6));
    cfg.block_len = cfg.hop_len * delta;
    cfg.mode = iter % 2 ? EncoderMode::Contextual : EncoderMode::Block;
    cfg.context_init = inits[iter % 5];
    cfg.frontend = fronts[iter % 3];
    cfg.seed = 1000 + static_cast<std::uint64_t>(iter);

    const Index t_prime = 1 + static_cast<Index>(rng.below(48));
    Index t_raw = t_prime * frontend_factor(cfg.frontend);
    if (cfg.frontend != FrontendKind::Identity) {
      t_raw -= static_cast<Index>(rng.below(4));  // exercise ceil(T/4)
      if (t_raw < 4) t_raw = 4;
    }
    const Index d_in = 3 + static_cast<Index>(rng.below(8));

    Rng prng(cfg.seed);
    EncoderParams<Matd> params = init_encoder_params<double>(
        cfg.layers, cfg.d_model, cfg.heads, cfg.d_ff, cfg.frontend, d_in, prng);
    Matd x = random_mat(t_raw, d_in, rng);
    EncoderOutput<double> ref = encode_masked_block(x, cfg, params);
    for (Index chunk : {Index(1), Index(7), Index(0)}) {
      Matd got = encode_streaming(x, cfg, params, chunk);
      if (got.rows() != ref.h.rows()) {
        report(1, "stream/batch equivalence", false, "row count mismatch", seconds_since(t0));
        return;
      }
      worst = std::max(worst, (got - ref.h).cwiseAbs().maxCoeff());
    }
    ++configs;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d configs x chunks {1,7,whole}, max|diff|=%.3g (tol 1e-10)",
                configs, worst);
  report(1, "stream/batch equivalence", worst <= 1e-10 && configs >= 100, buf,
         seconds_since(t0));
}

// ---------------------------------------------------------------------------
// 2. Mode collapse.
// ---------------------------------------------------------------------------
void criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2);
  double worst_collapse = 0, worst_ablate = 0;
  for (int iter = 0; iter < 10; ++iter) {
    EncoderConfig cfg;
    cfg.layers = 3;
    cfg.d_model = 16;
    cfg.heads = 4;
    cfg.d_ff = 24;
    cfg.frontend = FrontendKind::Identity;
    cfg.seed = 50 + static_cast<std::uint64_t>(iter);
    const Index t_prime = 5 + static_cast<Index>(rng.below(20));
    Rng prng(cfg.seed);
    EncoderParams<Matd> params = init_encoder_params<double>(
        cfg.layers, cfg.d_model, cfg.heads, cfg.d_ff, cfg.frontend, 6, prng);
    Matd x = random_mat(t_prime, 6, rng);

    // Single covering block vs batch.
    EncoderConfig one = cfg;
    one.mode = EncoderMode::Block;
    one.block_len = one.hop_len = t_prime + static_cast<Index>(rng.below(4));
    EncoderConfig batch = cfg;
    batch.mode = EncoderMode::Batch;
    batch.block_len = batch.hop_len = one.block_len;
    worst_collapse = std::max(worst_collapse,
                              (encode_masked_block(x, one, params).h -
                               encode_batch(x, batch, params).h)
                                  .cwiseAbs()
                                  .maxCoeff());

    // Contextual with the context path ablated vs naive block.
    EncoderConfig ctx = cfg;
    ctx.mode = EncoderMode::Contextual;
    ctx.block_len = ctx.hop_len = 4;
    ctx.ablate_context = true;
    EncoderConfig blk = ctx;
    blk.mode = EncoderMode::Block;
    blk.ablate_context = false;
    worst_ablate = std::max(worst_ablate, (encode_masked_block(x, ctx, params).h -
                                           encode_masked_block(x, blk, params).h)
                                              .cwiseAbs()
                                              .maxCoeff());
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "block-covers-T'=%.3g, ablated-context=%.3g (tol 1e-12)",
                worst_collapse, worst_ablate);
  report(2, "mode collapse", worst_collapse <= 1e-12 && worst_ablate <= 1e-12, buf,
         seconds_since(t0));
}

// ---------------------------------------------------------------------------
// 3. Receptive-field exactness.
// ---------------------------------------------------------------------------
void criterion3() {
  const auto t0 = std::chrono::steady_clock::now();

  // Exhaustive boolean reachability for all layouts with T' <= 32, n <= 6.
  bool reach_ok = true;
  long checked = 0;
  for (Index t = 1; t <= 32 && reach_ok; ++t) {
    for (Index block = 1; block <= t + 2 && reach_ok; ++block) {
      for (Index hop : {block, block / 2}) {
        if (hop < 1 || (hop != block && 2 * hop != block)) continue;
        const BlockLayout lo = make_layout(t, block, hop);
        const Index delta = context_delta(lo);
        const Index ext = t + lo.num_blocks();
        for (Index n = 1; n <= 6 && reach_ok; ++n) {
          for (Index p = 0; p < delta; ++p) {
            // reach[q][k]: can row q (after n layers) see input row k?
            std::vector<std::vector<bool>> reach(static_cast<std::size_t>(ext),
                                                 std::vector<bool>(static_cast<std::size_t>(ext), false));
            for (Index q = 0; q < ext; ++q) reach[static_cast<std::size_t>(q)][static_cast<std::size_t>(q)] = true;
            for (Index layer = 1; layer <= n; ++layer) {
              const AttentionMask m = contextual_mask(lo, layer, delta, p);
              std::vector<std::vector<bool>> next(static_cast<std::size_t>(ext),
                                                  std::vector<bool>(static_cast<std::size_t>(ext), false));
              for (Index q = 0; q < ext; ++q)
                for (Index k = 0; k < ext; ++k)
                  if (m.admit(q, k))
                    for (Index l = 0; l < ext; ++l)
                      if (reach[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)])
                        next[static_cast<std::size_t>(q)][static_cast<std::size_t>(l)] = true;
              reach = std::move(next);
            }
            for (Index b = p; b < lo.num_blocks(); b += delta) {
              Index first = b - delta * (n - 1);
              while (first < 0) first += delta;
              const Index f_lo = lo.span(first).begin;
              const Index f_hi = lo.span(b).end;
              const Span own = lo.owned(b);
              for (Index q = own.begin; q < own.end; ++q)
                for (Index f = 0; f < t; ++f) {
                  const bool expect = f >= f_lo && f < f_hi;
                  if (reach[static_cast<std::size_t>(q)][static_cast<std::size_t>(f)] != expect)
                    reach_ok = false;
                }
              ++checked;
            }
          }
        }
      }
    }
  }

  // Perturbation outside the reach leaves outputs bit-unchanged.
  Rng rng(3);
  int bit_cases = 0;
  bool bits_ok = true;
  for (int iter = 0; iter < 24; ++iter) {
    EncoderConfig cfg;
    cfg.layers = 1 + static_cast<Index>(rng.below(4));
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.d_ff = 12;
    const Index delta = 1 + static_cast<Index>(rng.below(2));
    cfg.hop_len = 2 + static_cast<Index>(rng.below(3));
    cfg.block_len = cfg.hop_len * delta;
    cfg.mode = EncoderMode::Contextual;
    cfg.context_init = ContextInitMode::PEAvg;
    cfg.frontend = FrontendKind::Identity;
    cfg.seed = 80 + static_cast<std::uint64_t>(iter);
    const Index t_prime = cfg.block_len * (3 + static_cast<Index>(rng.below(3))) +
                          static_cast<Index>(rng.below(3));
    Rng prng(cfg.seed);
    EncoderParams<Matd> params = init_encoder_params<double>(
        cfg.layers, cfg.d_model, cfg.heads, cfg.d_ff, cfg.frontend, 6, prng);
    Matd x = random_mat(t_prime, 6, rng);
    EncoderOutput<double> base = encode_masked_block(x, cfg, params);

    const BlockLayout lo = make_layout(t_prime, cfg.block_len, cfg.hop_len);
    const Index b = lo.num_blocks() - 1;
    Index first = b - delta * (cfg.layers - 1);
    while (first < 0) first += delta;
    const Index f_lo = lo.span(first).begin;
    if (f_lo == 0) continue;  // whole sequence reachable, nothing to perturb
    Matd x2 = x;
    for (Index f = 0; f < f_lo; ++f) x2.row(f).array() += 1.0 + rng.uniform01();
    EncoderOutput<double> out = encode_masked_block(x2, cfg, params);
    const Span own = lo.owned(b);
    for (Index q = own.begin; q < own.end; ++q)
      if (std::memcmp(base.h.row(q).data(), out.h.row(q).data(),
                      sizeof(double) * static_cast<std::size_t>(base.h.cols())) != 0)
        bits_ok = false;
    ++bit_cases;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%ld reach windows exact, %d/24 perturbation cases bit-exact",
                checked, bit_cases);
  report(3, "receptive-field exactness", reach_ok && bits_ok && bit_cases >= 20, buf,
         seconds_since(t0));
}

// ---------------------------------------------------------------------------
// 4. Gradient correctness.
// ---------------------------------------------------------------------------
void criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  const double eps = 1e-5;
  double worst = 0;
  std::string worst_op = "none";
  auto note = [&](const char* op, double err) {
    if (err > worst) {
      worst = err;
      worst_op = op;
    }
  };
  Rng rng(4);
  auto reduce = [](Tape<double>& tape, Var<double> y, std::uint64_t seed) {
    Rng r(seed);
    Matd left(1, y.rows()), right(y.cols(), 1);
    for (Index i = 0; i < left.size(); ++i) left.data()[i] = r.normal();
    for (Index i = 0; i < right.size(); ++i) right.data()[i] = r.normal();
    return matmul(matmul(tape.constant(left), y), tape.constant(right));
  };

  note("linear",
       grad_check<double>(
           [&](Tape<double>& t, const std::vector<Var<double>>& v) {
             return reduce(t, add_row(matmul(v[0], v[1]), v[2]), 1);
           },
           {random_mat(3, 4, rng), random_mat(4, 5, rng), random_mat(1, 5, rng)}, eps)
           .max_rel_err);

  AttentionMask m(4, 5);
  for (Index q = 0; q < 4; ++q) {
    m.set(q, q);
    for (Index k = 0; k < 5; ++k)
      if (rng.uniform01() < 0.6) m.set(q, k);
  }
  note("masked_softmax",
       grad_check<double>(
           [&](Tape<double>& t, const std::vector<Var<double>>& v) {
             return reduce(t, masked_softmax(v[0], m), 2);
           },
           {random_mat(4, 5, rng)}, eps)
           .max_rel_err);

  note("layer_norm",
       grad_check<double>(
           [&](Tape<double>& t, const std::vector<Var<double>>& v) {
             return reduce(t, layer_norm(v[0], v[1], v[2], 1e-12), 3);
           },
           {random_mat(4, 6, rng), random_mat(1, 6, rng), random_mat(1, 6, rng)}, eps)
           .max_rel_err);

  {
    Matd a = random_mat(3, 3, rng);
    for (Index i = 0; i < a.size(); ++i)
      if (std::abs(a.data()[i]) < 1e-2) a.data()[i] += 0.5;
    note("relu",
         grad_check<double>(
             [&](Tape<double>& t, const std::vector<Var<double>>& v) {
               return reduce(t, relu(v[0]), 4);
             },
             {a}, eps)
             .max_rel_err);
  }

  note("gather/concat",
       grad_check<double>(
           [&](Tape<double>& t, const std::vector<Var<double>>& v) {
             Var<double> g = gather_rows(v[0], std::vector<Index>{0, 2, 2, 3});
             return reduce(t, concat_rows<double>({g, slice_rows(v[0], 1, 2)}), 5);
           },
           {random_mat(4, 3, rng)}, eps)
           .max_rel_err);

  note("reductions",
       grad_check<double>(
           [&](Tape<double>& t, const std::vector<Var<double>>& v) {
             return add(reduce(t, row_mean(v[0]), 6), reduce(t, row_max(v[0]), 7));
           },
           {random_mat(5, 4, rng)}, eps)
           .max_rel_err);

  note("cross_entropy",
       grad_check<double>(
           [&](Tape<double>&, const std::vector<Var<double>>& v) {
             return cross_entropy_mean(v[0], std::vector<int>{0, 3, 1, 2, 2, 0});
           },
           {random_mat(6, 4, rng)}, eps)
           .max_rel_err);

  // Full toy encoder, contextual mode with half-overlap.
  {
    EncoderConfig cfg;
    cfg.layers = 2;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.d_ff = 12;
    cfg.block_len = 4;
    cfg.hop_len = 2;
    cfg.mode = EncoderMode::Contextual;
    cfg.context_init = ContextInitMode::PEAvg;
    cfg.frontend = FrontendKind::Identity;
    Rng prng(5);
    EncoderParams<Matd> shape = init_encoder_params<double>(
        cfg.layers, cfg.d_model, cfg.heads, cfg.d_ff, cfg.frontend, 6, prng);
    const Index t_prime = 8;
    const BlockLayout layout = make_layout(t_prime, cfg.block_len, cfg.hop_len);
    const MaskPlan plan = MaskPlan::make(layout, cfg);
    std::vector<int> labels;
    for (Index t = 0; t < t_prime; ++t) labels.push_back(static_cast<int>(t % 3));
    std::vector<Matd> inputs;
    visit_params(shape, [&](const std::string&, Matd& t) { inputs.push_back(t); });
    inputs.push_back(random_mat(cfg.d_model, 3, rng));
    inputs.push_back(random_mat(1, 3, rng));
    inputs.push_back(random_mat(t_prime, 6, rng));
    auto rep = grad_check<double>(
        [&](Tape<double>&, const std::vector<Var<double>>& v) {
          std::size_t at = 0;
          EncoderParams<Var<double>> vp;
          vp.frontend.kind = shape.frontend.kind;
          vp.frontend.d_in = shape.frontend.d_in;
          vp.frontend.d_model = shape.frontend.d_model;
          vp.layers.resize(shape.layers.size());
          for (std::size_t i = 0; i < shape.layers.size(); ++i) {
            vp.layers[i].mha.wq.resize(shape.layers[i].mha.wq.size());
            vp.layers[i].mha.wk.resize(shape.layers[i].mha.wk.size());
            vp.layers[i].mha.wv.resize(shape.layers[i].mha.wv.size());
          }
          visit_params(vp, [&](const std::string&, Var<double>& var) { var = v[at++]; });
          Var<double> hw = v[at++];
          Var<double> hb = v[at++];
          Var<double> vx = v[at++];
          Var<double> u = frontend_forward(vx, cfg, vp);
          NullSink<double> sink;
          Var<double> h = encode_masked_core(u, cfg, vp, layout, plan, sink);
          return cross_entropy_mean(add_row(matmul(h, hw), hb), labels);
        },
        inputs, eps);
    note("full_encoder", rep.max_rel_err);
  }

  char buf[160];
  std::snprintf(buf, sizeof(buf), "max rel err %.3g in %s (tol 1e-4)", worst, worst_op.c_str());
  report(4, "gradient correctness", worst <= 1e-4, buf, seconds_since(t0));
}

// ---------------------------------------------------------------------------
// 5 + 6. Separation experiment and attention-mass trend.
// ---------------------------------------------------------------------------
void criteria5and6() {
  auto t0 = std::chrono::steady_clock::now();

  SyntheticTask task;
  task.frames = 32;
  task.d_in = 8;
  task.patterns = 4;
  task.flag_frames = 8;
  task.noise = 0.15;
  task.flag_scale = 1.5;

  EncoderConfig enc;
  enc.layers = 4;
  enc.d_model = 32;
  enc.heads = 4;
  enc.d_ff = 64;
  enc.block_len = 8;
  enc.hop_len = 8;
  enc.context_init = ContextInitMode::PEAvg;
  enc.frontend = FrontendKind::Identity;

  TrainConfig tc;
  tc.sequences = 2000;
  tc.val_sequences = 100;
  tc.eval_sequences = 400;
  tc.batch_size = 16;
  tc.epochs = 8;
  tc.warmup_steps = 250;
  tc.peak_scale = 1.2;

  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  SeparationOutcome out = run_separation(
      tc, enc, task, seeds, [&](const SeparationRun& run) {
        std::printf("  %s seed %llu: %s later-blocks acc %.3f (%.0fs)\n", to_string(run.mode),
                    static_cast<unsigned long long>(run.seed),
                    run.diverged ? "DIVERGED" : "ok", run.eval.later_blocks,
                    seconds_since(t0));
        std::fflush(stdout);
      });

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "median later-blocks acc: batch=%.3f block=%.3f contextual=%.3f "
                "(need ctx-block>=0.25, block in [0.4,0.6])",
                out.median_batch, out.median_block, out.median_contextual);
  report(5, "separation experiment", out.pass_gap && out.pass_block_band && out.pass_vs_batch,
         buf, seconds_since(t0));

  // Criterion 6: context mass at the deepest layer vs layer 1 on the trained
  // contextual models.
  t0 = std::chrono::steady_clock::now();
  int hits = 0, total = 0;
  for (const auto& run : out.runs) {
    if (run.mode != EncoderMode::Contextual || run.diverged) continue;
    ++total;
    EncoderConfig cfg = enc;
    cfg.mode = EncoderMode::Contextual;
    cfg.seed = run.seed;
    cfg.capture_attention = true;
    Dataset sample = gen_synthetic(run.seed * 1000 + 3, task, 16);
    double first = 0, deepest = 0;
    for (const auto& seq : sample) {
      AttentionStats stats = attention_stats(seq.x, cfg, run.result.encoder);
      for (Index head = 0; head < cfg.heads; ++head) {
        first += stats.context_mass[stats.cell(0, head)];
        deepest += stats.context_mass[stats.cell(cfg.layers - 1, head)];
      }
    }
    if (deepest > first) ++hits;
  }
  std::snprintf(buf, sizeof(buf), "deepest-layer context mass > layer 1 for %d/%d seeds", hits,
                total);
  report(6, "attention-mass trend", total >= 5 && hits >= 4, buf, seconds_since(t0));
}

// ---------------------------------------------------------------------------
// 7. Cost scaling.
// ---------------------------------------------------------------------------
void criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  EncoderConfig base;
  base.layers = 4;
  base.d_model = 32;
  base.heads = 4;
  base.d_ff = 64;
  base.block_len = 8;
  base.hop_len = 8;
  base.frontend = FrontendKind::Identity;
  const Index d_in = 8;

  auto measure = [&](EncoderMode mode, Index t_prime) {
    EncoderConfig cfg = base;
    cfg.mode = mode;
    Rng prng(7);
    EncoderParams<Matd> params = init_encoder_params<double>(
        cfg.layers, cfg.d_model, cfg.heads, cfg.d_ff, cfg.frontend, d_in, prng);
    Rng rng(70 + static_cast<std::uint64_t>(t_prime));
    Matd x = random_mat(t_prime, d_in, rng);
    AttnProbe probe;
    if (mode == EncoderMode::Batch)
      encode_batch(x, cfg, params, &probe);
    else
      encode_masked_block(x, cfg, params, &probe);
    const std::uint64_t analytic = analytic_attention_flops(cfg, t_prime);
    const double rel = std::abs(static_cast<double>(probe.flops) - static_cast<double>(analytic)) /
                       static_cast<double>(analytic);
    return std::pair<std::uint64_t, double>(probe.flops, rel);
  };

  bool ok = true;
  double worst_rel = 0;
  auto [b64, r1] = measure(EncoderMode::Batch, 64);
  auto [b128, r2] = measure(EncoderMode::Batch, 128);
  auto [k64, r3] = measure(EncoderMode::Block, 64);
  auto [k128, r4] = measure(EncoderMode::Block, 128);
  auto [c64, r5] = measure(EncoderMode::Contextual, 64);
  auto [c128, r6] = measure(EncoderMode::Contextual, 128);
  for (double r : {r1, r2, r3, r4, r5, r6}) worst_rel = std::max(worst_rel, r);
  ok = ok && worst_rel <= 0.10;

  const double batch_ratio = static_cast<double>(b128) / static_cast<double>(b64);
  const double block_ratio = static_cast<double>(k128) / static_cast<double>(k64);
  const double ctx_ratio = static_cast<double>(c128) / static_cast<double>(c64);
  ok = ok && std::abs(batch_ratio - 4.0) <= 0.4;  // quadratic in T'
  ok = ok && std::abs(block_ratio - 2.0) <= 0.2;  // linear in T'
  ok = ok && std::abs(ctx_ratio - 2.0) <= 0.2;

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "measured-vs-analytic rel err %.3g; T' 64->128 ratios: batch %.2fx, "
                "block %.2fx, contextual %.2fx",
                worst_rel, batch_ratio, block_ratio, ctx_ratio);
  report(7, "cost scaling", ok, buf, seconds_since(t0));
}

// ---------------------------------------------------------------------------
// 8. Softmax/mask invariants.
// ---------------------------------------------------------------------------
void criterion8() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(8);
  bool ok = true;
  for (int iter = 0; iter < 1000 && ok; ++iter) {
    const Index rows = 1 + static_cast<Index>(rng.below(6));
    const Index cols = 1 + static_cast<Index>(rng.below(8));
    Matd s = random_mat(rows, cols, rng) * 2.0;
    AttentionMask m(rows, cols);
    for (Index q = 0; q < rows; ++q) {
      m.set(q, static_cast<Index>(rng.below(static_cast<std::uint64_t>(cols))));
      for (Index k = 0; k < cols; ++k)
        if (rng.uniform01() < 0.5) m.set(q, k);
    }
    Matd y = masked_softmax_rows(s, m);
    for (Index q = 0; q < rows; ++q) {
      double sum = 0;
      for (Index k = 0; k < cols; ++k) {
        if (!m.admit(q, k) && y(q, k) != 0.0) ok = false;
        if (m.admit(q, k)) sum += y(q, k);
      }
      if (std::abs(sum - 1.0) > 1e-12) ok = false;
    }

    // Zero influence at the attention level: perturb masked key/value rows.
    const Index d = 4;
    Matd q = random_mat(rows, d, rng), k = random_mat(cols, d, rng), v = random_mat(cols, d, rng);
    Matd base = scaled_dot_attention(q, k, v, m);
    Matd k2 = k, v2 = v;
    for (Index kk = 0; kk < cols; ++kk) {
      bool masked_everywhere = true;
      for (Index qq = 0; qq < rows; ++qq)
        if (m.admit(qq, kk)) masked_everywhere = false;
      if (masked_everywhere) {
        k2.row(kk).array() += 100.0 * rng.normal();
        v2.row(kk).array() += 100.0 * rng.normal();
      }
    }
    Matd out = scaled_dot_attention(q, k2, v2, m);
    if ((out - base).cwiseAbs().maxCoeff() != 0.0) ok = false;
  }
  report(8, "softmax/mask invariants", ok, "1000 randomized cases", seconds_since(t0));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criteria5and6();
  criterion7();
  criterion8();

  int failed = 0;
  for (const auto& c : g_results)
    if (!c.pass) ++failed;
  std::printf("%zu criteria, %d failed (total %.1fs)\n", g_results.size(), failed,
              seconds_since(t0));
  return failed == 0 ? 0 : 1;
}
