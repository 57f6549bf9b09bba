// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cbenc/params.hpp"
#include "cbenc/types.hpp"

namespace cbenc {

// Feature file layout (all integers little-endian):
//   u32 magic = 0x46454154, u32 version = 1, u32 T, u32 d,
//   then exactly T*d float32, row-major. Anything else is rejected.
constexpr std::uint32_t kFeatureMagic = 0x46454154u;
constexpr std::uint32_t kFeatureVersion = 1u;

// Named-tensor container for parameters:
//   u32 magic, u32 version, u64 config_hash, u32 count,
//   then per tensor: u32 name_len, name bytes, u32 rows, u32 cols,
//   rows*cols float64.
constexpr std::uint32_t kParamsMagic = 0x534D5250u;  // "PRMS"
constexpr std::uint32_t kParamsVersion = 1u;

Matf load_features_bin(const std::string& path);
void save_features_bin(const std::string& path, const Matf& m);

// Text form: first line "T,d", then T comma-separated rows.
Matf load_features_csv(const std::string& path);
void save_features_csv(const std::string& path, const Matf& m);

/// Dispatches on the ".csv" extension; binary is the canonical format.
Matf load_features(const std::string& path);
void save_features(const std::string& path, const Matf& m);

void save_named_tensors(const std::string& path,
                        const std::vector<std::pair<std::string, const Matd*>>& tensors,
                        std::uint64_t config_hash);

/// Loads into preallocated tensors; names, shapes, and the config hash must
/// all match.
void load_named_tensors(const std::string& path,
                        const std::vector<std::pair<std::string, Matd*>>& tensors,
                        std::uint64_t expected_hash);

template <class P>
std::vector<std::pair<std::string, Matd*>> named_tensor_ptrs(P& params) {
  std::vector<std::pair<std::string, Matd*>> out;
  visit_params(params, [&](const std::string& n, Matd& t) { out.emplace_back(n, &t); });
  return out;
}

template <class P>
std::vector<std::pair<std::string, const Matd*>> named_tensor_cptrs(const P& params) {
  std::vector<std::pair<std::string, const Matd*>> out;
  visit_params(const_cast<P&>(params),
               [&](const std::string& n, Matd& t) { out.emplace_back(n, &t); });
  return out;
}

}  // namespace cbenc
