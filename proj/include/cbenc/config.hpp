// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>

#include "cbenc/encoder.hpp"
#include "cbenc/toytrain.hpp"
#include "cbenc/types.hpp"

namespace cbenc {

/// Everything a run needs, parsed from one JSON document. Unknown keys are
/// rejected; values are validated before any compute happens.
struct RunConfig {
  EncoderConfig encoder;
  TrainConfig train;
  SyntheticTask task;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Canonical string of the shape-relevant fields; hashed into parameter
/// files so mismatched loads fail fast. Mode and block geometry are
/// deliberately excluded: the same parameters are valid across modes.
std::string canonical_config(const EncoderConfig& cfg, Index d_in);
std::uint64_t encoder_config_hash(const EncoderConfig& cfg, Index d_in);

EncoderMode parse_mode(const std::string& s);
ContextInitMode parse_context_init(const std::string& s);
FrontendKind parse_frontend(const std::string& s);

}  // namespace cbenc
