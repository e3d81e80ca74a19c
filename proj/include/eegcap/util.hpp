#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "eegcap/errors.hpp"

namespace eegcap {

// FNV-1a 64-bit. Used for blob checksums, parameter-freeze checksums and the
// vision stub digest.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 1099511628211ull;
  return h;
}

inline uint64_t fnv1a64(std::span<const float> v) { return fnv1a64(v.data(), v.size() * sizeof(float)); }

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline uint64_t parse_hex64(const std::string& s) {
  uint64_t v = 0;
  for (char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<uint64_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') v |= static_cast<uint64_t>(c - 'A' + 10);
    else raise(ErrorCode::MalformedManifest, "bad hex digit in checksum");
  }
  return v;
}

// Row-major float matrix; the storage type for EEG sample data (the on-disk
// blob format is little-endian f32, so keeping f32 in memory makes IO a
// bit-exact round trip).
struct MatF {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<float> data;

  MatF() = default;
  MatF(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  float& at(size_t r, size_t c) { return data[r * cols + c]; }
  float at(size_t r, size_t c) const { return data[r * cols + c]; }
  bool same_shape(const MatF& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const MatF& o) const { return rows == o.rows && cols == o.cols && data == o.data; }
};

// Row-major double matrix for images and embeddings.
struct MatD {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  MatD() = default;
  MatD(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }
  bool operator==(const MatD& o) const { return rows == o.rows && cols == o.cols && data == o.data; }
};

// Shared word tokenizer: lowercased runs of alphanumerics, punctuation as
// single-character tokens, whitespace dropped. Both the reference LM and the
// NLG metrics tokenize text this way.
inline std::vector<std::string> word_tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isspace(c)) {
      flush();
    } else {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return out;
}

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) raise(ErrorCode::MissingBlob, "cannot open " + p.string());
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

inline void write_text_file(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) raise(ErrorCode::Internal, "failed writing " + p.string());
}

// Shortest-round-trip float formatting so artifacts are byte-stable.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back == v) {
    for (int prec = 1; prec <= 16; ++prec) {
      char b2[40];
      std::snprintf(b2, sizeof(b2), "%.*g", prec, v);
      double r2 = 0.0;
      std::sscanf(b2, "%lf", &r2);
      if (r2 == v) return b2;
    }
  }
  return buf;
}

}  // namespace eegcap
