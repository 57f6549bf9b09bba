// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "cbenc/encoder.hpp"
#include "cbenc/gradcheck.hpp"
#include "cbenc/rng.hpp"
#include "cbenc/types.hpp"

namespace cbenc {

/// Frame-classification task with one global bit. Every frame carries one of
/// P local patterns; a global flag, encoded as an additive offset on the
/// leading `flag_frames` frames only, XOR-shifts every label by P/2. A model
/// confined to one block can recover the pattern but not the flag, so labels
/// outside the first block cap at 50% accuracy unless context flows between
/// blocks.
struct SyntheticTask {
  Index frames = 32;
  Index d_in = 8;
  Index patterns = 4;
  Index flag_frames = 8;
  double noise = 0.15;
  double flag_scale = 1.5;
  std::uint64_t pattern_seed = 1234;

  void validate() const {
    if (frames < 1 || d_in < 1) throw BadInput("task: frames and d_in must be >= 1");
    // patterns = 1 is a degenerate sanity mode (constant label, flag inert).
    if (patterns < 1 || (patterns & (patterns - 1)) != 0)
      throw BadInput("task: patterns must be a power of two");
    if (flag_frames < 1 || flag_frames > frames)
      throw BadInput("task: flag_frames must be in [1, frames]");
    if (noise < 0) throw BadInput("task: noise must be >= 0");
  }

  /// Fixed pattern embedding table (patterns x d_in), shared by every dataset
  /// drawn from this task.
  MatX<double> pattern_embeddings() const {
    Rng rng = derive_rng(pattern_seed, "patterns");
    MatX<double> e(patterns, d_in);
    for (Index i = 0; i < patterns; ++i)
      for (Index j = 0; j < d_in; ++j) e(i, j) = rng.normal();
    return e;
  }

  /// Offset added to the leading frames when the flag is set.
  MatX<double> flag_offset() const {
    Rng rng = derive_rng(pattern_seed, "flag");
    MatX<double> f(1, d_in);
    for (Index j = 0; j < d_in; ++j) f(0, j) = flag_scale * rng.normal();
    return f;
  }

  int label_for(int pattern, int flag) const {
    return flag ? (pattern ^ static_cast<int>(patterns / 2)) : pattern;
  }
};

struct LabeledSeq {
  MatX<double> x;
  std::vector<int> labels;
  int flag = 0;
};

using Dataset = std::vector<LabeledSeq>;

/// Deterministic per seed. Patterns and noise are drawn before the flag is
/// applied, so two datasets generated with the same seed but different
/// forced flags differ only in the flagged frames and in the labels.
inline Dataset gen_synthetic(std::uint64_t seed, const SyntheticTask& task, Index n,
                             int forced_flag = -1) {
  task.validate();
  const MatX<double> emb = task.pattern_embeddings();
  const MatX<double> off = task.flag_offset();
  Rng rng = derive_rng(seed, "data");
  Dataset data;
  data.reserve(static_cast<std::size_t>(n));
  for (Index s = 0; s < n; ++s) {
    LabeledSeq seq;
    seq.x.resize(task.frames, task.d_in);
    seq.labels.resize(static_cast<std::size_t>(task.frames));
    std::vector<int> pattern(static_cast<std::size_t>(task.frames));
    for (Index t = 0; t < task.frames; ++t) {
      pattern[static_cast<std::size_t>(t)] =
          static_cast<int>(rng.below(static_cast<std::uint64_t>(task.patterns)));
      seq.x.row(t) = emb.row(pattern[static_cast<std::size_t>(t)]);
      for (Index j = 0; j < task.d_in; ++j) seq.x(t, j) += task.noise * rng.normal();
    }
    seq.flag = forced_flag >= 0 ? (forced_flag ? 1 : 0)
                                : static_cast<int>(rng.below(2));
    if (seq.flag)
      for (Index t = 0; t < task.flag_frames; ++t) seq.x.row(t) += off.row(0);
    for (Index t = 0; t < task.frames; ++t)
      seq.labels[static_cast<std::size_t>(t)] =
          task.label_for(pattern[static_cast<std::size_t>(t)], seq.flag);
    data.push_back(std::move(seq));
  }
  return data;
}

struct TrainConfig {
  Index warmup_steps = 200;
  double peak_scale = 1.0;
  Index batch_size = 16;
  Index epochs = 12;
  Index sequences = 2000;
  Index val_sequences = 200;
  Index eval_sequences = 400;
  std::uint64_t seed = 1;

  void validate() const {
    if (warmup_steps < 1) throw BadInput("train: warmup_steps must be >= 1");
    if (batch_size < 1 || epochs < 0) throw BadInput("train: bad batch_size/epochs");
    if (sequences < 1) throw BadInput("train: sequences must be >= 1");
  }
};

/// Warmup then inverse-sqrt decay; peaks at step == warmup.
inline double noam_lr(Index step, Index d_model, Index warmup, double peak_scale) {
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return peak_scale / std::sqrt(static_cast<double>(d_model)) *
         std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

/// Adam over a flat list of tensors.
class Adam {
 public:
  explicit Adam(const std::vector<MatX<double>*>& params, double beta1 = 0.9,
                double beta2 = 0.98, double eps = 1e-9)
      : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.push_back(MatX<double>::Zero(p->rows(), p->cols()));
      v_.push_back(MatX<double>::Zero(p->rows(), p->cols()));
    }
  }

  void step(const std::vector<MatX<double>>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
      v_[i] = (beta2_ * v_[i].array() + (1.0 - beta2_) * grads[i].array().square()).matrix();
      auto mhat = m_[i].array() / bc1;
      auto vhat = v_[i].array() / bc2;
      params_[i]->array() -= lr * mhat / (vhat.sqrt() + eps_);
    }
  }

 private:
  std::vector<MatX<double>*> params_;
  std::vector<MatX<double>> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

struct TrainResult {
  EncoderParams<MatX<double>> encoder;
  ClassifierParams<MatX<double>> head;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch
};

namespace detail {

inline double plain_cross_entropy(const MatX<double>& logits, const std::vector<int>& labels) {
  double loss = 0;
  for (Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double denom = (logits.row(r).array() - mx).exp().sum();
    loss -= logits(r, labels[static_cast<std::size_t>(r)]) - mx - std::log(denom);
  }
  return loss / static_cast<double>(logits.rows());
}

template <class M, class Sink>
M encode_for_mode(const M& u, const EncoderConfig& cfg, const EncoderParams<M>& params,
                  const BlockLayout& layout, const MaskPlan& plan, Sink& sink) {
  if (cfg.mode == EncoderMode::Batch) return encode_batch_core(u, cfg, params, sink);
  return encode_masked_core(u, cfg, params, layout, plan, sink);
}

}  // namespace detail

/// Plain forward pass to logits, shared by validation and evaluation.
inline MatX<double> forward_logits(const MatX<double>& x, const EncoderConfig& cfg,
                                   const EncoderParams<MatX<double>>& enc,
                                   const ClassifierParams<MatX<double>>& head,
                                   const BlockLayout& layout, const MaskPlan& plan) {
  PlainSink<double> sink;
  MatX<double> u = frontend_forward(x, cfg, enc);
  MatX<double> h = detail::encode_for_mode(u, cfg, enc, layout, plan, sink);
  return add_row(matmul(h, head.w), head.b);
}

/// Trains the frame classifier with Adam under the warmup/inverse-sqrt
/// schedule. Deterministic given (cfg.seed, enc_cfg.seed, dataset).
/// Divergence (non-finite loss) throws NumericError.
inline TrainResult train(const TrainConfig& cfg, const EncoderConfig& enc_cfg,
                         const SyntheticTask& task, const Dataset& train_data,
                         const Dataset& val_data) {
  cfg.validate();
  enc_cfg.validate();
  task.validate();
  if (enc_cfg.frontend != FrontendKind::Identity)
    throw BadInput("train: toy training requires the identity frontend");
  if (train_data.empty()) throw BadInput("train: empty dataset");

  TrainResult result;
  Rng init_rng = derive_rng(enc_cfg.seed, "init");
  result.encoder = init_encoder_params<double>(enc_cfg.layers, enc_cfg.d_model, enc_cfg.heads,
                                               enc_cfg.d_ff, enc_cfg.frontend, task.d_in,
                                               init_rng);
  result.head = init_classifier_params<double>(enc_cfg.d_model, task.patterns, init_rng);

  const BlockLayout layout = make_layout(task.frames, enc_cfg.block_len, enc_cfg.hop_len);
  const MaskPlan plan = MaskPlan::make(layout, enc_cfg);

  // Flat views for the optimizer; order matches visit_params.
  std::vector<MatX<double>*> tensors;
  visit_params(result.encoder, [&](const std::string&, MatX<double>& t) { tensors.push_back(&t); });
  visit_params(result.head, [&](const std::string&, MatX<double>& t) { tensors.push_back(&t); });
  Adam adam(tensors);

  Rng shuffle_rng = derive_rng(cfg.seed, "shuffle");
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<MatX<double>> grads;
  for (auto* t : tensors) grads.push_back(MatX<double>::Zero(t->rows(), t->cols()));

  Index step = 0;
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the portable generator.
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.below(i))]);

    double epoch_loss = 0;
    Index batches = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t batch_end =
          std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(batch_end - at);
      for (auto& g : grads) g.setZero();
      double batch_loss = 0;
      for (std::size_t i = at; i < batch_end; ++i) {
        const LabeledSeq& seq = train_data[order[i]];
        Tape<double> tape;
        EncoderParams<Var<double>> ve = lift_params(tape, result.encoder);
        ClassifierParams<Var<double>> vh = lift_params(tape, result.head);
        std::vector<Var<double>> vars;
        visit_params(ve, [&](const std::string&, Var<double>& t) { vars.push_back(t); });
        visit_params(vh, [&](const std::string&, Var<double>& t) { vars.push_back(t); });

        Var<double> vx = tape.leaf(seq.x, false);
        Var<double> u = frontend_forward(vx, enc_cfg, ve);
        NullSink<double> sink;
        Var<double> h = detail::encode_for_mode(u, enc_cfg, ve, layout, plan, sink);
        Var<double> logits = add_row(matmul(h, vh.w), vh.b);
        Var<double> loss = cross_entropy_mean(logits, seq.labels);
        const double lv = loss.value()(0, 0);
        if (!std::isfinite(lv))
          throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
        batch_loss += lv;
        tape.backward(loss);
        for (std::size_t t = 0; t < vars.size(); ++t)
          grads[t] += tape.grad_of(vars[t]) * inv_batch;
      }
      ++step;
      adam.step(grads, noam_lr(step, enc_cfg.d_model, cfg.warmup_steps, cfg.peak_scale));
      epoch_loss += batch_loss * inv_batch;
      ++batches;
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(std::max<Index>(batches, 1)));

    double val_loss = 0;
    for (const auto& seq : val_data)
      val_loss += detail::plain_cross_entropy(
          forward_logits(seq.x, enc_cfg, result.encoder, result.head, layout, plan), seq.labels);
    result.val_loss.push_back(
        val_data.empty() ? 0.0 : val_loss / static_cast<double>(val_data.size()));
  }
  return result;
}

/// Accuracy split by block index, plus the aggregate over blocks >= 2 whose
/// labels depend on the (remotely encoded) flag and the first block where the
/// flag is locally visible.
struct EvalReport {
  double overall = 0;
  std::vector<double> per_block;
  double first_block = 0;
  double later_blocks = 0;  // the flag-dependent component
  Index frames_total = 0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline EvalReport evaluate(const EncoderParams<MatX<double>>& enc,
                           const ClassifierParams<MatX<double>>& head,
                           const EncoderConfig& enc_cfg, const SyntheticTask& task,
                           const Dataset& data) {
  const BlockLayout layout = make_layout(task.frames, enc_cfg.block_len, enc_cfg.hop_len);
  const MaskPlan plan = MaskPlan::make(layout, enc_cfg);
  const Index b_count = layout.num_blocks();
  std::vector<Index> hit(static_cast<std::size_t>(b_count), 0);
  std::vector<Index> tot(static_cast<std::size_t>(b_count), 0);
  for (const auto& seq : data) {
    MatX<double> logits = forward_logits(seq.x, enc_cfg, enc, head, layout, plan);
    for (Index t = 0; t < logits.rows(); ++t) {
      Index arg = 0;
      logits.row(t).maxCoeff(&arg);
      const Index b = layout.owner(t);
      ++tot[static_cast<std::size_t>(b)];
      if (static_cast<int>(arg) == seq.labels[static_cast<std::size_t>(t)])
        ++hit[static_cast<std::size_t>(b)];
    }
  }
  EvalReport r;
  Index hit_all = 0, tot_all = 0, hit_later = 0, tot_later = 0;
  r.per_block.resize(static_cast<std::size_t>(b_count), 0.0);
  for (Index b = 0; b < b_count; ++b) {
    const auto bi = static_cast<std::size_t>(b);
    r.per_block[bi] = tot[bi] ? static_cast<double>(hit[bi]) / static_cast<double>(tot[bi]) : 0.0;
    hit_all += hit[bi];
    tot_all += tot[bi];
    if (b >= 1) {
      hit_later += hit[bi];
      tot_later += tot[bi];
    }
  }
  r.overall = tot_all ? static_cast<double>(hit_all) / static_cast<double>(tot_all) : 0.0;
  r.first_block = r.per_block.empty() ? 0.0 : r.per_block[0];
  r.later_blocks = tot_later ? static_cast<double>(hit_later) / static_cast<double>(tot_later) : 0.0;
  r.frames_total = tot_all;
  return r;
}

/// One trained run of the separation experiment.
struct SeparationRun {
  EncoderMode mode = EncoderMode::Batch;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string error;
  TrainResult result;
  EvalReport eval;
};

/// Batch vs naive-block vs contextual on the global-flag task. The verdict
/// compares median flag-dependent accuracy (frames in blocks >= 2) across
/// seeds: contextual must beat naive block by >= 0.25, naive block must sit
/// at its 0.5 information ceiling (+-0.1), and contextual must stay within
/// 0.1 of batch.
struct SeparationOutcome {
  std::vector<SeparationRun> runs;
  double median_batch = 0, median_block = 0, median_contextual = 0;
  bool pass_gap = false;
  bool pass_block_band = false;
  bool pass_vs_batch = false;

  bool pass() const { return pass_gap && pass_block_band; }
};

template <class Progress>
SeparationOutcome run_separation(const TrainConfig& tc, EncoderConfig base,
                                 const SyntheticTask& task,
                                 const std::vector<std::uint64_t>& seeds, Progress&& progress) {
  SeparationOutcome out;
  std::vector<double> acc_batch, acc_block, acc_ctx;
  for (EncoderMode mode : {EncoderMode::Batch, EncoderMode::Block, EncoderMode::Contextual}) {
    for (std::uint64_t seed : seeds) {
      SeparationRun run;
      run.mode = mode;
      run.seed = seed;
      EncoderConfig enc = base;
      enc.mode = mode;
      enc.seed = seed;
      TrainConfig cfg = tc;
      cfg.seed = seed;
      Dataset train_data = gen_synthetic(seed * 1000 + 1, task, cfg.sequences);
      Dataset val_data = gen_synthetic(seed * 1000 + 2, task, cfg.val_sequences);
      Dataset eval_data = gen_synthetic(seed * 1000 + 3, task, cfg.eval_sequences);
      try {
        run.result = train(cfg, enc, task, train_data, val_data);
        run.eval = evaluate(run.result.encoder, run.result.head, enc, task, eval_data);
        switch (mode) {
          case EncoderMode::Batch: acc_batch.push_back(run.eval.later_blocks); break;
          case EncoderMode::Block: acc_block.push_back(run.eval.later_blocks); break;
          case EncoderMode::Contextual: acc_ctx.push_back(run.eval.later_blocks); break;
        }
      } catch (const NumericError& e) {
        run.diverged = true;
        run.error = e.what();
      }
      progress(run);
      out.runs.push_back(std::move(run));
    }
  }
  out.median_batch = median(acc_batch);
  out.median_block = median(acc_block);
  out.median_contextual = median(acc_ctx);
  out.pass_gap = out.median_contextual - out.median_block >= 0.25;
  out.pass_block_band = out.median_block >= 0.4 && out.median_block <= 0.6;
  out.pass_vs_batch = out.median_contextual >= out.median_batch - 0.1;
  return out;
}

}  // namespace cbenc
