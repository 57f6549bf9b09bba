// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#include "cbenc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "cbenc/rng.hpp"
#include "json.hpp"

namespace cbenc {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key))
      throw BadInput("config: unknown key '" + key + "' in " + where);
}

template <class T>
void get_int(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer())
    throw BadInput(std::string("config: '") + key + "' must be an integer");
  out = v.get<T>();
}

void get_num(const json& obj, const char* key, double& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw BadInput(std::string("config: '") + key + "' must be a number");
  out = v.get<double>();
}

void get_bool(const json& obj, const char* key, bool& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) throw BadInput(std::string("config: '") + key + "' must be a boolean");
  out = v.get<bool>();
}

std::string get_str(const json& obj, const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_string()) throw BadInput(std::string("config: '") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

EncoderMode parse_mode(const std::string& s) {
  if (s == "batch") return EncoderMode::Batch;
  if (s == "block") return EncoderMode::Block;
  if (s == "contextual") return EncoderMode::Contextual;
  throw BadInput("config: mode must be batch|block|contextual, got '" + s + "'");
}

ContextInitMode parse_context_init(const std::string& s) {
  if (s == "pe") return ContextInitMode::PE;
  if (s == "avg") return ContextInitMode::AvgInput;
  if (s == "max") return ContextInitMode::MaxInput;
  if (s == "pe_avg") return ContextInitMode::PEAvg;
  if (s == "pe_max") return ContextInitMode::PEMax;
  throw BadInput("config: context_init must be pe|avg|max|pe_avg|pe_max, got '" + s + "'");
}

FrontendKind parse_frontend(const std::string& s) {
  if (s == "identity") return FrontendKind::Identity;
  if (s == "subsample") return FrontendKind::SubsampleProject;
  if (s == "conv2d") return FrontendKind::Conv2d;
  throw BadInput("config: frontend must be identity|subsample|conv2d, got '" + s + "'");
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw BadInput(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw BadInput("config: top level must be an object");
  reject_unknown(doc, {"encoder", "train", "task"}, "top level");

  RunConfig rc;
  if (doc.contains("encoder")) {
    const json& e = doc.at("encoder");
    if (!e.is_object()) throw BadInput("config: 'encoder' must be an object");
    reject_unknown(e,
                   {"layers", "d_model", "heads", "d_ff", "block_len", "hop_len", "mode",
                    "context_init", "frontend", "precision", "seed", "capture_attention",
                    "ablate_context"},
                   "encoder");
    get_int(e, "layers", rc.encoder.layers);
    get_int(e, "d_model", rc.encoder.d_model);
    get_int(e, "heads", rc.encoder.heads);
    get_int(e, "d_ff", rc.encoder.d_ff);
    get_int(e, "block_len", rc.encoder.block_len);
    get_int(e, "hop_len", rc.encoder.hop_len);
    rc.encoder.mode = parse_mode(get_str(e, "mode", "batch"));
    rc.encoder.context_init = parse_context_init(get_str(e, "context_init", "pe_avg"));
    rc.encoder.frontend = parse_frontend(get_str(e, "frontend", "identity"));
    const std::string prec = get_str(e, "precision", "f64");
    if (prec == "f64")
      rc.encoder.precision = Precision::F64;
    else if (prec == "f32")
      rc.encoder.precision = Precision::F32;
    else
      throw BadInput("config: precision must be f64|f32, got '" + prec + "'");
    get_int(e, "seed", rc.encoder.seed);
    get_bool(e, "capture_attention", rc.encoder.capture_attention);
    get_bool(e, "ablate_context", rc.encoder.ablate_context);
  }
  if (doc.contains("train")) {
    const json& t = doc.at("train");
    if (!t.is_object()) throw BadInput("config: 'train' must be an object");
    reject_unknown(t,
                   {"warmup_steps", "peak_scale", "batch_size", "epochs", "sequences",
                    "val_sequences", "eval_sequences", "seed"},
                   "train");
    get_int(t, "warmup_steps", rc.train.warmup_steps);
    get_num(t, "peak_scale", rc.train.peak_scale);
    get_int(t, "batch_size", rc.train.batch_size);
    get_int(t, "epochs", rc.train.epochs);
    get_int(t, "sequences", rc.train.sequences);
    get_int(t, "val_sequences", rc.train.val_sequences);
    get_int(t, "eval_sequences", rc.train.eval_sequences);
    get_int(t, "seed", rc.train.seed);
  }
  if (doc.contains("task")) {
    const json& t = doc.at("task");
    if (!t.is_object()) throw BadInput("config: 'task' must be an object");
    reject_unknown(
        t, {"frames", "d_in", "patterns", "flag_frames", "noise", "flag_scale", "pattern_seed"},
        "task");
    get_int(t, "frames", rc.task.frames);
    get_int(t, "d_in", rc.task.d_in);
    get_int(t, "patterns", rc.task.patterns);
    get_int(t, "flag_frames", rc.task.flag_frames);
    get_num(t, "noise", rc.task.noise);
    get_num(t, "flag_scale", rc.task.flag_scale);
    get_int(t, "pattern_seed", rc.task.pattern_seed);
  }
  rc.encoder.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw BadInput("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string canonical_config(const EncoderConfig& cfg, Index d_in) {
  std::ostringstream s;
  s << "layers=" << cfg.layers << ";d_model=" << cfg.d_model << ";heads=" << cfg.heads
    << ";d_ff=" << cfg.d_ff << ";frontend=" << to_string(cfg.frontend) << ";d_in=" << d_in;
  return s.str();
}

std::uint64_t encoder_config_hash(const EncoderConfig& cfg, Index d_in) {
  return fnv1a(canonical_config(cfg, d_in));
}

}  // namespace cbenc
