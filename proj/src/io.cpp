// Copyright 2026 cbenc authors
//
// Licensed under the Apache License, Version 2.0

#include "cbenc/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace cbenc {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  write_u32(out, static_cast<std::uint32_t>(v));
  write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw BadInput(std::string("unexpected end of file reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& in, const char* what) {
  const std::uint64_t lo = read_u32(in, what);
  const std::uint64_t hi = read_u32(in, what);
  return lo | (hi << 32);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BadInput("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw BadInput("cannot open " + path + " for writing");
  return out;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Matf load_features_bin(const std::string& path) {
  std::ifstream in = open_in(path);
  const std::uint32_t magic = read_u32(in, "magic");
  if (magic != kFeatureMagic) throw BadInput(path + ": bad magic (not a feature file)");
  const std::uint32_t version = read_u32(in, "version");
  if (version != kFeatureVersion)
    throw BadInput(path + ": unsupported version " + std::to_string(version));
  const std::uint32_t t = read_u32(in, "T");
  const std::uint32_t d = read_u32(in, "d");
  if (t == 0 || d == 0) throw BadInput(path + ": empty feature matrix");
  const std::streamsize expect = static_cast<std::streamsize>(4ull * t * d);
  Matf m(static_cast<Index>(t), static_cast<Index>(d));
  in.read(reinterpret_cast<char*>(m.data()), expect);
  const std::streamsize got = in.gcount();
  if (got < expect)
    throw BadInput(path + ": feature file truncated: expected " + std::to_string(expect) +
                   " payload bytes, got " + std::to_string(got) + " (missing " +
                   std::to_string(expect - got) + ")");
  char extra;
  if (in.read(&extra, 1))
    throw BadInput(path + ": trailing bytes after " + std::to_string(expect) +
                   "-byte payload");
  return m;
}

void save_features_bin(const std::string& path, const Matf& m) {
  std::ofstream out = open_out(path);
  write_u32(out, kFeatureMagic);
  write_u32(out, kFeatureVersion);
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float)) * m.size());
  if (!out) throw BadInput("failed writing " + path);
}

Matf load_features_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw BadInput(path + ": empty CSV");
  Index t = 0, d = 0;
  {
    std::istringstream hdr(line);
    char comma = 0;
    if (!(hdr >> t >> comma >> d) || comma != ',' || t < 1 || d < 1)
      throw BadInput(path + ": CSV header must be 'T,d'");
  }
  Matf m(t, d);
  for (Index r = 0; r < t; ++r) {
    if (!std::getline(in, line))
      throw BadInput(path + ": CSV truncated at row " + std::to_string(r));
    std::istringstream row(line);
    std::string cell;
    for (Index c = 0; c < d; ++c) {
      if (!std::getline(row, cell, ','))
        throw BadInput(path + ": CSV row " + std::to_string(r) + " has fewer than " +
                       std::to_string(d) + " columns");
      try {
        m(r, c) = std::stof(cell);
      } catch (const std::exception&) {
        throw BadInput(path + ": CSV cell (" + std::to_string(r) + "," + std::to_string(c) +
                       ") is not a number");
      }
    }
  }
  return m;
}

void save_features_csv(const std::string& path, const Matf& m) {
  std::ofstream out = open_out(path);
  out << m.rows() << "," << m.cols() << "\n";
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) out << ",";
      out << m(r, c);
    }
    out << "\n";
  }
  if (!out) throw BadInput("failed writing " + path);
}

Matf load_features(const std::string& path) {
  return has_suffix(path, ".csv") ? load_features_csv(path) : load_features_bin(path);
}

void save_features(const std::string& path, const Matf& m) {
  if (has_suffix(path, ".csv"))
    save_features_csv(path, m);
  else
    save_features_bin(path, m);
}

void save_named_tensors(const std::string& path,
                        const std::vector<std::pair<std::string, const Matd*>>& tensors,
                        std::uint64_t config_hash) {
  std::ofstream out = open_out(path);
  write_u32(out, kParamsMagic);
  write_u32(out, kParamsVersion);
  write_u64(out, config_hash);
  write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, mat] : tensors) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(mat->rows()));
    write_u32(out, static_cast<std::uint32_t>(mat->cols()));
    out.write(reinterpret_cast<const char*>(mat->data()),
              static_cast<std::streamsize>(sizeof(double)) * mat->size());
  }
  if (!out) throw BadInput("failed writing " + path);
}

void load_named_tensors(const std::string& path,
                        const std::vector<std::pair<std::string, Matd*>>& tensors,
                        std::uint64_t expected_hash) {
  std::ifstream in = open_in(path);
  if (read_u32(in, "magic") != kParamsMagic)
    throw BadInput(path + ": bad magic (not a parameter file)");
  if (read_u32(in, "version") != kParamsVersion) throw BadInput(path + ": unsupported version");
  const std::uint64_t hash = read_u64(in, "config hash");
  if (hash != expected_hash)
    throw BadInput(path + ": parameter file was built for a different configuration (hash " +
                   std::to_string(hash) + " vs expected " + std::to_string(expected_hash) + ")");
  const std::uint32_t count = read_u32(in, "tensor count");
  if (count != tensors.size())
    throw BadInput(path + ": tensor count mismatch (" + std::to_string(count) + " vs " +
                   std::to_string(tensors.size()) + ")");
  for (const auto& [name, mat] : tensors) {
    const std::uint32_t name_len = read_u32(in, "name length");
    std::string got(name_len, '\0');
    in.read(got.data(), name_len);
    if (!in || got != name)
      throw BadInput(path + ": expected tensor '" + name + "', found '" + got + "'");
    const std::uint32_t rows = read_u32(in, "rows");
    const std::uint32_t cols = read_u32(in, "cols");
    if (static_cast<Index>(rows) != mat->rows() || static_cast<Index>(cols) != mat->cols())
      throw BadInput(path + ": shape mismatch for '" + name + "'");
    in.read(reinterpret_cast<char*>(mat->data()),
            static_cast<std::streamsize>(sizeof(double)) * mat->size());
    if (!in) throw BadInput(path + ": truncated payload for '" + name + "'");
  }
}

}  // namespace cbenc
