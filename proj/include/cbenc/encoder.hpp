// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cbenc/attention.hpp"
#include "cbenc/blocking.hpp"
#include "cbenc/context.hpp"
#include "cbenc/frontend.hpp"
#include "cbenc/masks.hpp"
#include "cbenc/params.hpp"
#include "cbenc/types.hpp"

namespace cbenc {

enum class EncoderMode { Batch, Block, Contextual };

inline const char* to_string(EncoderMode m) {
  switch (m) {
    case EncoderMode::Batch: return "batch";
    case EncoderMode::Block: return "block";
    case EncoderMode::Contextual: return "contextual";
  }
  return "?";
}

struct EncoderConfig {
  Index layers = 4;
  Index d_model = 32;
  Index heads = 4;
  Index d_ff = 64;
  Index block_len = 8;
  Index hop_len = 8;
  EncoderMode mode = EncoderMode::Batch;
  ContextInitMode context_init = ContextInitMode::PEAvg;
  FrontendKind frontend = FrontendKind::Identity;
  Precision precision = Precision::F64;
  std::uint64_t seed = 1;
  bool capture_attention = false;
  bool ablate_context = false;  // drop context keys from every mask (test/ablation)

  void validate() const {
    if (layers < 0) throw BadInput("config: layers must be >= 0");
    if (d_model < 2 || d_model % 2 != 0) throw BadInput("config: d_model must be even and >= 2");
    if (heads < 1 || d_model % heads != 0)
      throw BadInput("config: d_model must be divisible by heads");
    if (d_ff < 1) throw BadInput("config: d_ff must be >= 1");
    if (block_len < 1 || hop_len < 1 || hop_len > block_len)
      throw BadInput("config: need 1 <= hop_len <= block_len");
    if (mode == EncoderMode::Contextual && hop_len != block_len && 2 * hop_len != block_len)
      throw BadInput("config: contextual mode needs hop_len = block_len or block_len/2");
  }
};

/// Per-layer/head attention-mass statistics over the owned frame queries:
/// softmax mass on frame keys bucketed by relative key position, and mass on
/// the context key (split out per block as well).
struct AttentionStats {
  Index layers = 0;
  Index heads = 0;
  Index block_len = 0;
  Index t_prime = 0;
  Index num_blocks = 0;

  // [layer * heads + head][relpos + block_len - 1], mean over owned queries.
  std::vector<std::vector<double>> frame_mass;
  // [layer * heads + head], mean over owned queries.
  std::vector<double> context_mass;
  // [layer * heads + head][block], mean over that block's owned queries.
  std::vector<std::vector<double>> context_mass_by_block;

  Index rel_count() const { return 2 * block_len - 1; }
  Index rel_to_col(Index relpos) const { return relpos + block_len - 1; }
  std::size_t cell(Index layer, Index head) const {
    return static_cast<std::size_t>(layer * heads + head);
  }
};

template <class Scalar>
struct EncoderOutput {
  MatX<Scalar> h;
  std::optional<AttentionStats> stats;
};

/// Masks plus residual routing for every (interleave class, layer) of the
/// parallel path. Contextual plans run over the extended T'+B sequence.
struct MaskPlan {
  Index passes = 1;
  bool extended = false;
  std::vector<std::vector<AttentionMask>> masks;        // [pass][layer]
  std::vector<std::vector<std::vector<Index>>> routes;  // [pass][layer]; empty = identity

  static MaskPlan make(const BlockLayout& layout, const EncoderConfig& cfg) {
    MaskPlan plan;
    const std::size_t n_layers = static_cast<std::size_t>(cfg.layers);
    if (cfg.mode == EncoderMode::Batch) {
      plan.passes = 1;
      plan.masks.push_back(std::vector<AttentionMask>(
          n_layers, AttentionMask::all(layout.t_prime(), layout.t_prime())));
      plan.routes.push_back(std::vector<std::vector<Index>>(n_layers));
      return plan;
    }
    if (cfg.mode == EncoderMode::Block) {
      auto base = naive_block_masks(layout);
      plan.passes = static_cast<Index>(base.size());
      for (auto& m : base) {
        plan.masks.push_back(std::vector<AttentionMask>(n_layers, m));
        plan.routes.push_back(std::vector<std::vector<Index>>(n_layers));
      }
      return plan;
    }
    // Contextual.
    const Index delta = context_delta(layout);
    plan.extended = true;
    plan.passes = delta;
    if (cfg.ablate_context) {
      auto base = naive_block_masks(layout);
      for (Index p = 0; p < delta; ++p) {
        plan.masks.push_back(std::vector<AttentionMask>(
            n_layers, extend_with_self_rows(base[static_cast<std::size_t>(p)],
                                            layout.num_blocks())));
        plan.routes.push_back(std::vector<std::vector<Index>>(n_layers));
      }
      return plan;
    }
    for (Index p = 0; p < delta; ++p) {
      std::vector<AttentionMask> ms;
      std::vector<std::vector<Index>> rs;
      for (Index n = 1; n <= cfg.layers; ++n) {
        ms.push_back(contextual_mask(layout, n, delta, p));
        rs.push_back(residual_route(layout, n, delta, p));
      }
      plan.masks.push_back(std::move(ms));
      plan.routes.push_back(std::move(rs));
    }
    return plan;
  }
};

// ---- sinks: instrumentation hooks threaded through the generic core ----

/// No-op sink for the training (tape) path.
template <class Scalar>
struct NullSink {
  AttnProbe* probe = nullptr;
  std::vector<MatX<Scalar>>* want_heads(Index, Index) { return nullptr; }
  void done_heads(Index, Index) {}
  template <class M>
  void on_state(const M&) {}
};

/// Plain-path sink: finiteness checks, optional FLOP probe, optional
/// attention-mass aggregation.
template <class Scalar>
struct PlainSink {
  AttnProbe* probe = nullptr;
  AttentionStats* stats = nullptr;
  const BlockLayout* layout = nullptr;
  Index delta = 1;

  std::vector<MatX<Scalar>> heads_buf;

  std::vector<MatX<Scalar>>* want_heads(Index, Index) {
    if (!stats) return nullptr;
    heads_buf.clear();
    return &heads_buf;
  }

  void done_heads(Index pass, Index layer) {
    if (!stats) return;
    const Index t = layout->t_prime();
    for (std::size_t h = 0; h < heads_buf.size(); ++h) {
      const MatX<Scalar>& w = heads_buf[h];
      auto& frame = stats->frame_mass[stats->cell(layer - 1, static_cast<Index>(h))];
      auto& ctx = stats->context_mass[stats->cell(layer - 1, static_cast<Index>(h))];
      auto& ctx_by_block =
          stats->context_mass_by_block[stats->cell(layer - 1, static_cast<Index>(h))];
      for (Index b = pass; b < layout->num_blocks(); b += delta) {
        const Span own = layout->owned(b);
        for (Index q = own.begin; q < own.end; ++q) {
          for (Index k = 0; k < w.cols(); ++k) {
            const double mass = static_cast<double>(w(q, k));
            if (mass == 0.0) continue;
            if (k < t) {
              frame[static_cast<std::size_t>(stats->rel_to_col(k - q))] += mass;
            } else {
              ctx += mass;
              ctx_by_block[static_cast<std::size_t>(b)] += mass;
            }
          }
        }
      }
    }
  }

  void on_state(const MatX<Scalar>& x) { require_finite(x, "encoder state"); }
};

// ---- generic building blocks (M is MatX<S> or Var<S>) ----

template <class M>
M ffn_generic(const M& x, const LayerParams<M>& p) {
  M hidden = relu(add_row(matmul(x, p.w1), p.v1));
  return add_row(matmul(hidden, p.w2), p.v2);
}

/// One pre-norm layer under a mask:
///   zi = MHD(LN1(x), ., .; mask) + route(x)
///   out = FFN(LN2(zi)) + zi
template <class M, class Sink>
M encoder_layer_masked(const M& x, const LayerParams<M>& p, const AttentionMask& mask,
                       const std::vector<Index>& route,
                       typename scalar_of<M>::type eps, Sink& sink, Index pass, Index layer) {
  M y = layer_norm(x, p.ln1_g, p.ln1_b, eps);
  M att = multi_head(y, y, y, p.mha, mask, sink.want_heads(pass, layer), sink.probe);
  sink.done_heads(pass, layer);
  M res = route.empty() ? x : gather_rows(x, route);
  M zi = add(att, res);
  M out = add(ffn_generic(layer_norm(zi, p.ln2_g, p.ln2_b, eps), p), zi);
  sink.on_state(out);
  return out;
}

inline std::vector<Index> span_indices(Span s) {
  std::vector<Index> idx;
  idx.reserve(static_cast<std::size_t>(s.size()));
  for (Index t = s.begin; t < s.end; ++t) idx.push_back(t);
  return idx;
}

/// Initial context rows c_1^0 ... c_B^0 stacked as a B x d_model matrix.
template <class M>
M build_c0(const M& u, const BlockLayout& layout, ContextInitMode mode, Index d_model) {
  using S = typename scalar_of<M>::type;
  std::vector<M> rows;
  rows.reserve(static_cast<std::size_t>(layout.num_blocks()));
  for (Index b = 0; b < layout.num_blocks(); ++b) {
    const bool with_pe = mode == ContextInitMode::PE || mode == ContextInitMode::PEAvg ||
                         mode == ContextInitMode::PEMax;
    std::optional<M> c;
    if (mode == ContextInitMode::AvgInput || mode == ContextInitMode::PEAvg)
      c = row_mean(gather_rows(u, span_indices(layout.span(b))));
    else if (mode == ContextInitMode::MaxInput || mode == ContextInitMode::PEMax)
      c = row_max(gather_rows(u, span_indices(layout.span(b))));
    if (with_pe) {
      MatX<S> pe(1, d_model);
      pe.row(0) = positional_encoding<S>(b, d_model);
      M pe_m = lift_const(u, std::move(pe));
      c = c ? add(*c, pe_m) : pe_m;
    }
    rows.push_back(*c);
  }
  return concat_rows(rows);
}

/// Parallel masked path over one or two interleave classes; assembles h from
/// each block's owned rows, taken from the class that covers the block.
template <class M, class Sink>
M encode_masked_core(const M& u, const EncoderConfig& cfg, const EncoderParams<M>& params,
                     const BlockLayout& layout, const MaskPlan& plan, Sink& sink) {
  using S = typename scalar_of<M>::type;
  const S eps = layer_norm_eps<S>();
  std::vector<M> pass_out;
  pass_out.reserve(static_cast<std::size_t>(plan.passes));
  for (Index p = 0; p < plan.passes; ++p) {
    M x = u;
    if (plan.extended)
      x = build_extended(u, build_c0(u, layout, cfg.context_init, cfg.d_model));
    for (Index n = 0; n < cfg.layers; ++n) {
      const auto& layer = params.layers[static_cast<std::size_t>(n)];
      x = encoder_layer_masked(x, layer, plan.masks[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)],
                               plan.routes[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)],
                               eps, sink, p, n + 1);
    }
    x = layer_norm(x, params.lnf_g, params.lnf_b, eps);
    sink.on_state(x);
    pass_out.push_back(std::move(x));
  }
  std::vector<M> parts;
  for (Index b = 0; b < layout.num_blocks(); ++b) {
    const Span own = layout.owned(b);
    if (own.empty()) continue;
    const Index p = b % plan.passes;
    parts.push_back(gather_rows(pass_out[static_cast<std::size_t>(p)], span_indices(own)));
  }
  return concat_rows(parts);
}

/// Whole-utterance path: every layer sees the full sequence.
template <class M, class Sink>
M encode_batch_core(const M& u, const EncoderConfig& cfg, const EncoderParams<M>& params,
                    Sink& sink) {
  using S = typename scalar_of<M>::type;
  const S eps = layer_norm_eps<S>();
  const AttentionMask full = AttentionMask::all(u.rows(), u.rows());
  const std::vector<Index> identity;
  M x = u;
  for (Index n = 0; n < cfg.layers; ++n) {
    const auto& layer = params.layers[static_cast<std::size_t>(n)];
    x = encoder_layer_masked(x, layer, full, identity, eps, sink, 0, n + 1);
  }
  x = layer_norm(x, params.lnf_g, params.lnf_b, eps);
  sink.on_state(x);
  return x;
}

/// Front-end plus positional encoding, generic over the backend. Conv2d is
/// available on the plain path only (it is not part of the differentiable op
/// vocabulary).
template <class M>
M frontend_forward(const M& x_raw, const EncoderConfig& cfg, const EncoderParams<M>& params) {
  using S = typename scalar_of<M>::type;
  M u;
  if constexpr (std::is_same_v<M, MatX<S>>) {
    u = downsample(x_raw, params.frontend);
  } else {
    switch (cfg.frontend) {
      case FrontendKind::Identity:
        u = matmul(x_raw, params.frontend.proj);
        break;
      case FrontendKind::SubsampleProject: {
        if (x_raw.rows() < 4) throw DimensionError("downsample: need at least 4 raw frames");
        std::vector<Index> keep;
        for (Index j = 0; 4 * j < x_raw.rows(); ++j) keep.push_back(4 * j);
        u = matmul(gather_rows(x_raw, keep), params.frontend.proj);
        break;
      }
      case FrontendKind::Conv2d:
        throw BadInput("conv2d frontend is not differentiable; use identity or subsample");
    }
  }
  MatX<S> pe = positional_encoding_table<S>(u.rows(), cfg.d_model);
  return add(u, lift_const(u, std::move(pe)));
}

// ---- plain entry points ----

template <class Scalar>
EncoderOutput<Scalar> encode_batch(const MatX<Scalar>& x, const EncoderConfig& cfg,
                                   const EncoderParams<MatX<Scalar>>& params,
                                   AttnProbe* probe = nullptr) {
  cfg.validate();
  if (cfg.mode != EncoderMode::Batch) throw BadInput("encode_batch: mode must be batch");
  PlainSink<Scalar> sink;
  sink.probe = probe;
  MatX<Scalar> u = frontend_forward(x, cfg, params);
  require_finite(u, "frontend output");
  return {encode_batch_core(u, cfg, params, sink), std::nullopt};
}

template <class Scalar>
EncoderOutput<Scalar> encode_masked_block(const MatX<Scalar>& x, const EncoderConfig& cfg,
                                          const EncoderParams<MatX<Scalar>>& params,
                                          AttnProbe* probe = nullptr) {
  cfg.validate();
  if (cfg.mode == EncoderMode::Batch)
    throw BadInput("encode_masked_block: mode must be block or contextual");
  MatX<Scalar> u = frontend_forward(x, cfg, params);
  require_finite(u, "frontend output");
  const BlockLayout layout = make_layout(u.rows(), cfg.block_len, cfg.hop_len);
  const MaskPlan plan = MaskPlan::make(layout, cfg);

  PlainSink<Scalar> sink;
  sink.probe = probe;
  sink.layout = &layout;
  AttentionStats stats;
  if (cfg.capture_attention && cfg.mode == EncoderMode::Contextual) {
    stats.layers = cfg.layers;
    stats.heads = cfg.heads;
    stats.block_len = cfg.block_len;
    stats.t_prime = layout.t_prime();
    stats.num_blocks = layout.num_blocks();
    stats.frame_mass.assign(static_cast<std::size_t>(cfg.layers * cfg.heads),
                            std::vector<double>(static_cast<std::size_t>(stats.rel_count()), 0.0));
    stats.context_mass.assign(static_cast<std::size_t>(cfg.layers * cfg.heads), 0.0);
    stats.context_mass_by_block.assign(
        static_cast<std::size_t>(cfg.layers * cfg.heads),
        std::vector<double>(static_cast<std::size_t>(layout.num_blocks()), 0.0));
    sink.stats = &stats;
    sink.delta = plan.passes;
  }

  EncoderOutput<Scalar> out;
  out.h = encode_masked_core(u, cfg, params, layout, plan, sink);
  if (sink.stats) {
    // Convert accumulated sums to means over the owned queries.
    const double total_q = static_cast<double>(layout.t_prime());
    for (auto& v : stats.frame_mass)
      for (auto& e : v) e /= total_q;
    for (auto& e : stats.context_mass) e /= total_q;
    for (std::size_t c = 0; c < stats.context_mass_by_block.size(); ++c)
      for (Index b = 0; b < layout.num_blocks(); ++b) {
        const double nq = static_cast<double>(layout.owned(b).size());
        if (nq > 0) stats.context_mass_by_block[c][static_cast<std::size_t>(b)] /= nq;
      }
    out.stats = std::move(stats);
  }
  return out;
}

/// Fig.-4-style per-(layer, head) mass summary on one utterance.
template <class Scalar>
AttentionStats attention_stats(const MatX<Scalar>& x, const EncoderConfig& cfg,
                               const EncoderParams<MatX<Scalar>>& params) {
  if (!cfg.capture_attention) throw BadInput("attention_stats: capture_attention is disabled");
  if (cfg.mode != EncoderMode::Contextual)
    throw BadInput("attention_stats: mode must be contextual");
  EncoderOutput<Scalar> out = encode_masked_block(x, cfg, params);
  return *out.stats;
}

/// Raw frames that must arrive before the first block's output can be
/// emitted: the whole first block through the front-end window.
inline Index first_emit_raw_frames(const EncoderConfig& cfg) {
  return raw_frames_needed(cfg.frontend, cfg.block_len - 1);
}

/// Incremental path: identical numbers to encode_masked_block, emitted block
/// by block as soon as the raw stream covers each block. Single-owner,
/// in-order; parameters are shared read-only.
template <class Scalar>
class StreamingSession {
 public:
  StreamingSession(const EncoderConfig& cfg, const EncoderParams<MatX<Scalar>>& params)
      : cfg_(cfg),
        params_(params),
        state_(cfg.layers + 1,
               cfg.mode == EncoderMode::Contextual && cfg.hop_len != cfg.block_len ? 2 : 1) {
    cfg_.validate();
    if (cfg_.mode == EncoderMode::Batch)
      throw BadInput("streaming: mode must be block or contextual");
    raw_.resize(0, 0);
    u_.resize(0, cfg_.d_model);
  }

  bool finished() const { return finished_; }
  Index raw_frames_seen() const { return raw_.rows(); }
  Index raw_frames_at_first_emit() const { return first_emit_raw_; }

  /// Test hook (negative control): corrupts the inherited context state.
  void corrupt_context() { state_.corrupt(); }

  void set_probe(AttnProbe* probe) { probe_ = probe; }

  MatX<Scalar> feed(const MatX<Scalar>& chunk) {
    if (finished_) throw BadInput("streaming: feed after end of stream");
    if (chunk.cols() != expected_d_in())
      throw DimensionError("streaming: chunk feature dim mismatch");
    append_raw(chunk);
    advance_downsample(false);
    return process_ready_blocks(false);
  }

  MatX<Scalar> finish() {
    if (finished_) throw BadInput("streaming: finish called twice");
    finished_ = true;
    if (raw_.rows() < 1) throw BadInput("streaming: empty stream");
    if (cfg_.frontend != FrontendKind::Identity && raw_.rows() < 4)
      throw BadInput("streaming: need at least 4 raw frames");
    advance_downsample(true);
    return process_ready_blocks(true);
  }

 private:
  Index expected_d_in() const { return params_.frontend.d_in; }

  void append_raw(const MatX<Scalar>& chunk) {
    const Index old = raw_.rows();
    raw_.conservativeResize(old + chunk.rows(), chunk.cols() == 0 ? expected_d_in() : chunk.cols());
    if (chunk.rows() > 0) raw_.bottomRows(chunk.rows()) = chunk;
  }

  // Downsampled frames computable from the raw prefix alone.
  Index computable_frames(bool eos) const {
    const Index t_raw = raw_.rows();
    if (eos) return downsampled_len(cfg_.frontend, t_raw);
    switch (cfg_.frontend) {
      case FrontendKind::Identity: return t_raw;
      case FrontendKind::SubsampleProject: return (t_raw + 3) / 4;
      case FrontendKind::Conv2d: return t_raw / 4;
    }
    return 0;
  }

  void advance_downsample(bool eos) {
    const Index target = computable_frames(eos);
    if (target <= u_.rows()) return;
    const Index old = u_.rows();
    MatX<Scalar> flat = downsample_flat(raw_, raw_.rows(), params_.frontend, old, target);
    MatX<Scalar> fresh = flat * params_.frontend.proj;
    u_.conservativeResize(target, cfg_.d_model);
    for (Index j = old; j < target; ++j)
      u_.row(j) = fresh.row(j - old) + positional_encoding<Scalar>(j, cfg_.d_model);
  }

  MatX<Scalar> process_ready_blocks(bool eos) {
    std::vector<MatX<Scalar>> emitted;
    const Index offset = (cfg_.block_len - cfg_.hop_len) / 2;
    while (true) {
      const Index start = next_block_ * cfg_.hop_len;
      const Index untrunc_end = start + cfg_.block_len;
      Span span;
      if (!eos) {
        if (u_.rows() < untrunc_end) break;
        span = Span{start, untrunc_end};
      } else {
        if (start >= u_.rows()) break;
        span = Span{start, std::min(untrunc_end, u_.rows())};
      }
      // Ownership boundaries; at EOS the final layout decides.
      Index own_begin = emit_boundary_;
      Index own_end;
      if (eos && (next_block_ + 1) * cfg_.hop_len >= u_.rows()) {
        own_end = u_.rows();  // last block owns everything to T'
      } else {
        own_end = std::min((next_block_ + 1) * cfg_.hop_len + offset,
                           eos ? u_.rows() : untrunc_end);
        own_end = std::max(own_end, own_begin);
      }
      MatX<Scalar> z = compute_block(next_block_, span);
      if (own_end > own_begin)
        emitted.push_back(z.middleRows(own_begin - span.begin, own_end - own_begin));
      emit_boundary_ = own_end;
      ++next_block_;
    }
    if (emitted.empty()) return MatX<Scalar>(0, cfg_.d_model);
    MatX<Scalar> out = concat_rows(emitted);
    if (first_emit_raw_ < 0 && out.rows() > 0) first_emit_raw_ = raw_.rows();
    emitted_ += out.rows();
    return out;
  }

  // Runs one block through all layers; returns the final-normalized rows.
  MatX<Scalar> compute_block(Index b, Span span) {
    const Scalar eps = layer_norm_eps<Scalar>();
    MatX<Scalar> z = u_.middleRows(span.begin, span.size());
    if (cfg_.mode == EncoderMode::Block || cfg_.ablate_context) {
      // Plain per-block stack; ablated contextual collapses to this.
      PlainSink<Scalar> sink;
      sink.probe = probe_;
      return encode_batch_core(z, cfg_, params_, sink);
    }
    std::vector<MatX<Scalar>> levels(static_cast<std::size_t>(cfg_.layers + 1));
    levels[0] = init_context(z, b, cfg_.context_init, cfg_.d_model);
    MatX<Scalar> c_query = levels[0];
    for (Index n = 1; n <= cfg_.layers; ++n) {
      // Layer 1 keys use the block's own initial context; deeper layers use
      // the inherited predecessor context when it exists.
      const MatX<Scalar>* kv = (n == 1) ? &levels[0] : state_.predecessor(n - 1);
      LayerResult<Scalar> r = layer_forward(
          z, c_query, kv, params_.layers[static_cast<std::size_t>(n - 1)], eps, probe_);
      z = std::move(r.z);
      c_query = r.c;
      levels[static_cast<std::size_t>(n)] = std::move(r.c);
    }
    state_.push_block(levels);
    MatX<Scalar> out = layer_norm(z, params_.lnf_g, params_.lnf_b, eps);
    require_finite(out, "streaming block output");
    return out;
  }

  EncoderConfig cfg_;
  const EncoderParams<MatX<Scalar>>& params_;
  ContextState<Scalar> state_;
  MatX<Scalar> raw_;
  MatX<Scalar> u_;
  Index next_block_ = 0;
  Index emit_boundary_ = 0;
  Index emitted_ = 0;
  Index first_emit_raw_ = -1;
  bool finished_ = false;
  AttnProbe* probe_ = nullptr;
};

/// Feeds x in fixed-size raw-frame chunks and concatenates the emissions.
/// chunk_rows <= 0 means the whole utterance at once.
template <class Scalar>
MatX<Scalar> encode_streaming(const MatX<Scalar>& x, const EncoderConfig& cfg,
                              const EncoderParams<MatX<Scalar>>& params, Index chunk_rows) {
  StreamingSession<Scalar> session(cfg, params);
  std::vector<MatX<Scalar>> parts;
  if (chunk_rows <= 0) chunk_rows = x.rows();
  for (Index at = 0; at < x.rows(); at += chunk_rows) {
    const Index n = std::min(chunk_rows, x.rows() - at);
    MatX<Scalar> got = session.feed(x.middleRows(at, n));
    if (got.rows() > 0) parts.push_back(std::move(got));
  }
  MatX<Scalar> tail = session.finish();
  if (tail.rows() > 0) parts.push_back(std::move(tail));
  if (parts.empty()) return MatX<Scalar>(0, cfg.d_model);
  return concat_rows(parts);
}

/// Closed-form count of the score/softmax/value flops the attention kernel
/// executes, derived from layout arithmetic alone (never from mask objects).
inline std::uint64_t analytic_attention_flops(const EncoderConfig& cfg, Index t_prime) {
  const Index d = cfg.d_model / cfg.heads;
  const std::uint64_t per_pair = static_cast<std::uint64_t>(4 * d + 4);
  std::uint64_t pairs_per_layer = 0;
  if (cfg.mode == EncoderMode::Batch) {
    pairs_per_layer = static_cast<std::uint64_t>(t_prime) * static_cast<std::uint64_t>(t_prime);
    return pairs_per_layer * per_pair * static_cast<std::uint64_t>(cfg.heads) *
           static_cast<std::uint64_t>(cfg.layers);
  }
  const BlockLayout layout = make_layout(t_prime, cfg.block_len, cfg.hop_len);
  const Index classes = cfg.mode == EncoderMode::Contextual ? context_delta(layout)
                                                            : layout.mask_classes();
  std::uint64_t total_pairs = 0;  // summed over layers
  for (Index n = 1; n <= cfg.layers; ++n) {
    for (Index p = 0; p < classes; ++p) {
      Index covered_rows = 0;
      std::uint64_t pairs = 0;
      for (Index b = p; b < layout.num_blocks(); b += classes) {
        const Index len = layout.span(b).size();
        if (cfg.mode == EncoderMode::Block) {
          pairs += static_cast<std::uint64_t>(len) * static_cast<std::uint64_t>(len);
          covered_rows += len;
        } else {
          const bool has_ctx =
              !cfg.ablate_context && (n == 1 || b >= classes);
          const Index keys = len + (has_ctx ? 1 : 0);
          pairs += static_cast<std::uint64_t>(len + 1) * static_cast<std::uint64_t>(keys);
          covered_rows += len + 1;
        }
      }
      const Index total_rows =
          cfg.mode == EncoderMode::Block ? t_prime : t_prime + layout.num_blocks();
      pairs += static_cast<std::uint64_t>(total_rows - covered_rows);  // self-only rows
      total_pairs += pairs;
    }
  }
  return total_pairs * per_pair * static_cast<std::uint64_t>(cfg.heads);
}

}  // namespace cbenc
