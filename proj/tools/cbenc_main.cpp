// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0
//
// Command-line surface: encode utterances, compare the streaming path against
// the masked parallel path, benchmark block sizes, export attention-mass
// statistics, run the toy training experiment, and dump masks as PBM.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cbenc/config.hpp"
#include "cbenc/encoder.hpp"
#include "cbenc/io.hpp"
#include "cbenc/toytrain.hpp"

namespace {

using namespace cbenc;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitNumeric = 3;

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <class Scalar>
MatX<Scalar> to_scalar(const Matf& m) {
  return m.cast<Scalar>();
}

std::vector<Index> parse_index_list(const std::string& csv) {
  std::vector<Index> out;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(static_cast<Index>(std::stol(item)));
    } catch (const std::exception&) {
      throw BadInput("bad integer list: '" + csv + "'");
    }
  }
  if (out.empty()) throw BadInput("empty integer list");
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> out;
  for (Index v : parse_index_list(csv)) {
    if (v < 0) throw BadInput("seeds must be non-negative");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

template <class Scalar>
EncoderParams<MatX<Scalar>> obtain_params(const EncoderConfig& cfg, Index d_in,
                                          const std::string& params_path) {
  if (!params_path.empty()) {
    EncoderConfig shape = cfg;
    Rng rng(cfg.seed);
    EncoderParams<Matd> p = init_encoder_params<double>(cfg.layers, cfg.d_model, cfg.heads,
                                                        cfg.d_ff, cfg.frontend, d_in, rng);
    load_named_tensors(params_path, named_tensor_ptrs(p), encoder_config_hash(shape, d_in));
    if constexpr (std::is_same_v<Scalar, double>) {
      return p;
    } else {
      EncoderParams<MatX<Scalar>> out;
      out.frontend.kind = p.frontend.kind;
      out.frontend.d_in = p.frontend.d_in;
      out.frontend.d_model = p.frontend.d_model;
      out.frontend.channels = p.frontend.channels;
      out.frontend.proj = p.frontend.proj.cast<Scalar>();
      if (p.frontend.kind == FrontendKind::Conv2d) {
        out.frontend.conv1 = p.frontend.conv1.cast<Scalar>();
        out.frontend.conv2 = p.frontend.conv2.cast<Scalar>();
      }
      for (const auto& lp : p.layers) {
        LayerParams<MatX<Scalar>> lo;
        lo.ln1_g = lp.ln1_g.cast<Scalar>();
        lo.ln1_b = lp.ln1_b.cast<Scalar>();
        for (std::size_t h = 0; h < lp.mha.wq.size(); ++h) {
          lo.mha.wq.push_back(lp.mha.wq[h].cast<Scalar>());
          lo.mha.wk.push_back(lp.mha.wk[h].cast<Scalar>());
          lo.mha.wv.push_back(lp.mha.wv[h].cast<Scalar>());
        }
        lo.mha.wo = lp.mha.wo.cast<Scalar>();
        lo.ln2_g = lp.ln2_g.cast<Scalar>();
        lo.ln2_b = lp.ln2_b.cast<Scalar>();
        lo.w1 = lp.w1.cast<Scalar>();
        lo.v1 = lp.v1.cast<Scalar>();
        lo.w2 = lp.w2.cast<Scalar>();
        lo.v2 = lp.v2.cast<Scalar>();
        out.layers.push_back(std::move(lo));
      }
      out.lnf_g = p.lnf_g.cast<Scalar>();
      out.lnf_b = p.lnf_b.cast<Scalar>();
      return out;
    }
  }
  Rng rng(cfg.seed);
  return init_encoder_params<Scalar>(cfg.layers, cfg.d_model, cfg.heads, cfg.d_ff, cfg.frontend,
                                     d_in, rng);
}

template <class Scalar>
int run_encode(const EncoderConfig& cfg, const std::string& features, const std::string& out,
               const std::string& params_path) {
  Matf xf = load_features(features);
  MatX<Scalar> x = to_scalar<Scalar>(xf);
  EncoderParams<MatX<Scalar>> params = obtain_params<Scalar>(cfg, x.cols(), params_path);
  const double t0 = now_ms();
  EncoderOutput<Scalar> enc = cfg.mode == EncoderMode::Batch
                                  ? encode_batch(x, cfg, params)
                                  : encode_masked_block(x, cfg, params);
  const double t1 = now_ms();
  save_features(out, enc.h.template cast<float>());
  std::cout << "L=" << enc.h.rows() << " d_model=" << enc.h.cols() << " wall_ms=" << (t1 - t0)
            << "\n";
  return kExitOk;
}

template <class Scalar>
int run_compare(const EncoderConfig& cfg, const std::string& features,
                const std::string& chunks_csv, bool inject_fault, double tolerance) {
  if (cfg.mode == EncoderMode::Batch)
    throw BadInput("compare: mode must be block or contextual");
  Matf xf = load_features(features);
  MatX<Scalar> x = to_scalar<Scalar>(xf);
  EncoderParams<MatX<Scalar>> params = obtain_params<Scalar>(cfg, x.cols(), "");
  EncoderOutput<Scalar> ref = encode_masked_block(x, cfg, params);

  bool ok = true;
  for (Index chunk : parse_index_list(chunks_csv)) {
    MatX<Scalar> got;
    if (inject_fault) {
      StreamingSession<Scalar> session(cfg, params);
      std::vector<MatX<Scalar>> parts;
      const Index half = std::max<Index>(1, x.rows() / 2);
      parts.push_back(session.feed(x.topRows(half)));
      session.corrupt_context();
      parts.push_back(session.feed(x.bottomRows(x.rows() - half)));
      parts.push_back(session.finish());
      got = concat_rows(parts);
    } else {
      got = encode_streaming(x, cfg, params, chunk);
    }
    const double diff =
        (got - ref.h).template cast<double>().cwiseAbs().maxCoeff();
    const bool pass = diff <= tolerance;
    std::cout << "chunk=" << (chunk <= 0 ? std::string("whole") : std::to_string(chunk))
              << " max_abs_diff=" << diff << (pass ? " PASS" : " FAIL") << "\n";
    ok = ok && pass;
  }
  return ok ? kExitOk : kExitCheckFailed;
}

template <class Scalar>
int run_bench(const EncoderConfig& base, const std::string& block_sizes, Index t_prime,
              const std::string& out_csv) {
  std::ostringstream csv;
  csv << "mode,path,block_len,hop_len,t_prime,wall_ms,peak_live_bytes,"
         "attn_flops_measured,attn_flops_analytic,latency_raw_frames\n";
  Rng data_rng(base.seed + 17);
  const Index d_in = 16;
  MatX<Scalar> x(t_prime * frontend_factor(base.frontend), d_in);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < d_in; ++j) x(i, j) = static_cast<Scalar>(data_rng.normal());

  auto live_bytes = [&](const EncoderConfig& cfg, bool streaming) {
    const Index rows = streaming ? cfg.block_len + 1
                                 : t_prime + (cfg.mode == EncoderMode::Contextual
                                                  ? (t_prime + cfg.hop_len - 1) / cfg.hop_len
                                                  : 0);
    const Index d = cfg.d_model / cfg.heads;
    // State + norm + head concat + per-head q/k/v + FFN hidden, plus the
    // retained downsampled sequence.
    const Index per_row = 4 * cfg.d_model + 3 * d + cfg.d_ff;
    return static_cast<std::uint64_t>(sizeof(Scalar)) *
           static_cast<std::uint64_t>(rows * per_row + t_prime * cfg.d_model);
  };

  auto emit = [&](const EncoderConfig& cfg, const char* path, double wall,
                  std::uint64_t measured, Index latency) {
    csv << to_string(cfg.mode) << "," << path << "," << cfg.block_len << "," << cfg.hop_len
        << "," << t_prime << "," << wall << "," << live_bytes(cfg, std::string(path) == "stream")
        << "," << measured << "," << analytic_attention_flops(cfg, t_prime) << ",";
    if (latency >= 0) csv << latency;
    csv << "\n";
  };

  {
    EncoderConfig cfg = base;
    cfg.mode = EncoderMode::Batch;
    EncoderParams<MatX<Scalar>> params = obtain_params<Scalar>(cfg, d_in, "");
    AttnProbe probe;
    const double t0 = now_ms();
    encode_batch(x, cfg, params, &probe);
    emit(cfg, "masked", now_ms() - t0, probe.flops, -1);
  }
  for (Index block : parse_index_list(block_sizes)) {
    for (EncoderMode mode : {EncoderMode::Block, EncoderMode::Contextual}) {
      EncoderConfig cfg = base;
      cfg.mode = mode;
      cfg.block_len = block;
      cfg.hop_len = base.hop_len == base.block_len ? block : std::max<Index>(1, block / 2);
      if (mode == EncoderMode::Contextual && cfg.hop_len != block && 2 * cfg.hop_len != block)
        continue;
      EncoderParams<MatX<Scalar>> params = obtain_params<Scalar>(cfg, d_in, "");
      {
        AttnProbe probe;
        const double t0 = now_ms();
        encode_masked_block(x, cfg, params, &probe);
        emit(cfg, "masked", now_ms() - t0, probe.flops, -1);
      }
      {
        AttnProbe probe;
        StreamingSession<Scalar> session(cfg, params);
        session.set_probe(&probe);
        const double t0 = now_ms();
        session.feed(x);
        session.finish();
        emit(cfg, "stream", now_ms() - t0, probe.flops, first_emit_raw_frames(cfg));
      }
    }
  }
  if (out_csv.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(out_csv);
    if (!f) throw BadInput("cannot open " + out_csv + " for writing");
    f << csv.str();
    std::cout << "wrote " << out_csv << "\n";
  }
  return kExitOk;
}

int run_attn_stats(EncoderConfig cfg, const std::string& features, const std::string& params_path,
                   const std::string& out_csv) {
  cfg.capture_attention = true;
  if (cfg.mode != EncoderMode::Contextual)
    throw BadInput("attn-stats: mode must be contextual");
  Matf xf = load_features(features);
  Matd x = to_scalar<double>(xf);
  EncoderParams<Matd> params = obtain_params<double>(cfg, x.cols(), params_path);
  AttentionStats stats = attention_stats(x, cfg, params);

  std::ofstream f(out_csv);
  if (!f) throw BadInput("cannot open " + out_csv + " for writing");
  f << "kind,layer,head,relpos,mass\n";
  for (Index layer = 0; layer < stats.layers; ++layer)
    for (Index head = 0; head < stats.heads; ++head) {
      const auto c = stats.cell(layer, head);
      for (Index r = 0; r < stats.rel_count(); ++r)
        f << "frame," << layer + 1 << "," << head + 1 << "," << r - (stats.block_len - 1) << ","
          << stats.frame_mass[c][static_cast<std::size_t>(r)] << "\n";
      f << "context," << layer + 1 << "," << head + 1 << ",," << stats.context_mass[c] << "\n";
    }
  std::cout << "wrote " << out_csv << "\n";
  return kExitOk;
}

int run_toy_train(const RunConfig& rc, const std::string& seeds_csv, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::vector<std::uint64_t> seeds = parse_seed_list(seeds_csv);

  bool any_diverged = false;
  auto progress = [&](const SeparationRun& run) {
    const std::string tag =
        std::string(to_string(run.mode)) + "_seed" + std::to_string(run.seed);
    if (run.diverged) {
      any_diverged = true;
      std::cout << tag << ": DIVERGED (" << run.error << ")\n";
      return;
    }
    std::ofstream curve(out_dir + "/loss_" + tag + ".csv");
    curve << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < run.result.train_loss.size(); ++e)
      curve << e + 1 << "," << run.result.train_loss[e] << "," << run.result.val_loss[e] << "\n";
    std::cout << tag << ": acc_overall=" << run.eval.overall
              << " acc_first_block=" << run.eval.first_block
              << " acc_later_blocks=" << run.eval.later_blocks << "\n";
  };

  SeparationOutcome out =
      run_separation(rc.train, rc.encoder, rc.task, seeds, progress);

  std::ofstream acc(out_dir + "/accuracy.csv");
  acc << "mode,seed,overall,first_block,later_blocks";
  Index max_blocks = 0;
  for (const auto& run : out.runs)
    max_blocks = std::max(max_blocks, static_cast<Index>(run.eval.per_block.size()));
  for (Index b = 0; b < max_blocks; ++b) acc << ",block" << b + 1;
  acc << "\n";
  for (const auto& run : out.runs) {
    if (run.diverged) continue;
    acc << to_string(run.mode) << "," << run.seed << "," << run.eval.overall << ","
        << run.eval.first_block << "," << run.eval.later_blocks;
    for (double a : run.eval.per_block) acc << "," << a;
    acc << "\n";
  }

  std::ofstream verdict(out_dir + "/verdict.txt");
  auto line = [&](const std::string& s) {
    verdict << s << "\n";
    std::cout << s << "\n";
  };
  line("median_later_blocks batch=" + std::to_string(out.median_batch) +
       " block=" + std::to_string(out.median_block) +
       " contextual=" + std::to_string(out.median_contextual));
  line(std::string("separation contextual-block>=0.25: ") + (out.pass_gap ? "PASS" : "FAIL"));
  line(std::string("naive block in 0.5+-0.1: ") + (out.pass_block_band ? "PASS" : "FAIL"));
  line(std::string("contextual >= batch-0.1: ") + (out.pass_vs_batch ? "PASS" : "FAIL"));
  line(std::string("verdict: ") + (out.pass() ? "PASS" : "FAIL"));

  if (any_diverged) return kExitNumeric;
  return out.pass() ? kExitOk : kExitCheckFailed;
}

int run_dump_masks(const EncoderConfig& cfg, Index t_prime, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const BlockLayout layout = make_layout(t_prime, cfg.block_len, cfg.hop_len);
  const MaskPlan plan = MaskPlan::make(layout, cfg);
  for (Index p = 0; p < plan.passes; ++p)
    for (Index n = 0; n < cfg.layers; ++n) {
      const std::string path = out_dir + "/mask_pass" + std::to_string(p) + "_layer" +
                               std::to_string(n + 1) + ".pbm";
      std::ofstream f(path);
      if (!f) throw BadInput("cannot open " + path + " for writing");
      f << plan.masks[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)].to_pbm();
    }
  std::cout << "wrote " << plan.passes * cfg.layers << " masks to " << out_dir << "\n";
  return kExitOk;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"contextual block transformer encoder"};
  app.require_subcommand(1);

  std::string features, config_path, out, params_path, mode_override;
  std::string chunk_sizes = "1,7,0";
  std::string block_sizes = "4,8,16,32";
  std::string seeds = "1,2,3,4,5";
  Index t_prime = 128;
  long seed_override = -1;
  bool inject_fault = false;
  double tolerance = 1e-10;

  auto* enc = app.add_subcommand("encode", "encode a feature file, write h");
  enc->add_option("--features", features)->required();
  enc->add_option("--config", config_path)->required();
  enc->add_option("--mode", mode_override, "override the config's mode");
  enc->add_option("--out", out)->required();
  enc->add_option("--params", params_path, "load parameters instead of seeding");
  enc->add_option("--seed", seed_override, "override the config's seed");

  auto* cmp = app.add_subcommand("compare",
                                 "run the masked and streaming paths, print max-abs-diff");
  cmp->add_option("--features", features)->required();
  cmp->add_option("--config", config_path)->required();
  cmp->add_option("--mode", mode_override);
  cmp->add_option("--chunk-sizes", chunk_sizes, "raw-frame chunk sizes; 0 = whole utterance");
  cmp->add_option("--tolerance", tolerance);
  cmp->add_flag("--inject-fault", inject_fault,
                "corrupt the context state mid-stream (negative control)");

  auto* bench = app.add_subcommand("bench", "wall time / memory / flops per block size");
  bench->add_option("--config", config_path)->required();
  bench->add_option("--block-sizes", block_sizes);
  bench->add_option("--t-prime", t_prime, "downsampled sequence length to benchmark");
  bench->add_option("--out", out, "write CSV here instead of stdout");

  auto* stats = app.add_subcommand("attn-stats", "per-(layer,head) attention-mass CSV");
  stats->add_option("--features", features)->required();
  stats->add_option("--config", config_path)->required();
  stats->add_option("--params", params_path)->required();
  stats->add_option("--out", out)->required();

  auto* toy = app.add_subcommand("toy-train", "train batch/block/contextual on the flag task");
  toy->add_option("--config", config_path)->required();
  toy->add_option("--seeds", seeds);
  toy->add_option("--out", out)->required();

  auto* masks = app.add_subcommand("dump-masks", "write the layer masks as PBM bitmaps");
  masks->add_option("--config", config_path)->required();
  masks->add_option("--t-prime", t_prime);
  masks->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadInput;
  }

  RunConfig rc = load_run_config(config_path);
  if (!mode_override.empty()) rc.encoder.mode = parse_mode(mode_override);
  if (seed_override >= 0) rc.encoder.seed = static_cast<std::uint64_t>(seed_override);
  rc.encoder.validate();
  const bool f32 = rc.encoder.precision == Precision::F32;

  if (enc->parsed())
    return f32 ? run_encode<float>(rc.encoder, features, out, params_path)
               : run_encode<double>(rc.encoder, features, out, params_path);
  if (cmp->parsed()) {
    const double tol = f32 && tolerance < 1e-4 ? 1e-3 : tolerance;
    return f32 ? run_compare<float>(rc.encoder, features, chunk_sizes, inject_fault, tol)
               : run_compare<double>(rc.encoder, features, chunk_sizes, inject_fault, tol);
  }
  if (bench->parsed())
    return f32 ? run_bench<float>(rc.encoder, block_sizes, t_prime, out)
               : run_bench<double>(rc.encoder, block_sizes, t_prime, out);
  if (stats->parsed()) return run_attn_stats(rc.encoder, features, params_path, out);
  if (toy->parsed()) return run_toy_train(rc, seeds, out);
  if (masks->parsed()) return run_dump_masks(rc.encoder, t_prime, out);
  return kExitBadInput;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const BadInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const CheckFailed& e) {
    std::cerr << "check failed: " << e.what() << "\n";
    return kExitCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  }
}
