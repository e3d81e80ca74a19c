#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegcap/errors.hpp"
#include "eegcap/optim.hpp"
#include "eegcap/util.hpp"

namespace eegcap {

// Common checkpoint container, shared by encoder, reference LM and projector
// checkpoints:
//
//   bytes 0..7   magic "ECCKPT01"
//   bytes 8..15  u64 little-endian header length H
//   H bytes      JSON header: {format_version, kind, stage?, seed, config{},
//                labels[], arrays[{name, shape, offset, count}]}
//   rest         array data, little-endian f32, in directory order
//
// Parameters are held in doubles at runtime and stored as f32; loading a file
// therefore reproduces exactly the f32 values on disk, which is what the
// freeze checksums and the determinism checks compare.
struct Checkpoint {
  nlohmann::ordered_json header;
  std::vector<std::pair<std::string, std::vector<float>>> arrays;

  static constexpr const char* kMagic = "ECCKPT01";

  void add_array(const std::string& name, const std::vector<double>& values) {
    std::vector<float> f(values.size());
    for (size_t i = 0; i < values.size(); ++i) f[i] = static_cast<float>(values[i]);
    arrays.emplace_back(name, std::move(f));
  }

  const std::vector<float>& array(const std::string& name) const {
    for (const auto& [n, v] : arrays)
      if (n == name) return v;
    raise(ErrorCode::MalformedManifest, "checkpoint array not found: " + name);
  }

  bool has_array(const std::string& name) const {
    for (const auto& [n, v] : arrays)
      if (n == name) return true;
    return false;
  }

  // FNV-1a over the whole data section; the freezing-contract checksum.
  uint64_t param_checksum() const {
    uint64_t h = 1469598103934665603ull;
    for (const auto& [n, v] : arrays) {
      h = fnv1a64(n.data(), n.size(), h);
      h = fnv1a64(v.data(), v.size() * sizeof(float), h);
    }
    return h;
  }

  void save(const std::filesystem::path& path) const {
    nlohmann::ordered_json hdr = header;
    hdr["format_version"] = 1;
    nlohmann::ordered_json dir = nlohmann::ordered_json::array();
    uint64_t offset = 0;
    for (const auto& [name, v] : arrays) {
      nlohmann::ordered_json e;
      e["name"] = name;
      e["offset"] = offset;
      e["count"] = v.size();
      dir.push_back(e);
      offset += v.size() * sizeof(float);
    }
    hdr["arrays"] = dir;
    const std::string htext = hdr.dump();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::Internal, "cannot write " + path.string());
    out.write(kMagic, 8);
    const uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& [name, v] : arrays)
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(float)));
    if (!out) raise(ErrorCode::Internal, "failed writing " + path.string());
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::MissingCheckpoint, path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != kMagic)
      raise(ErrorCode::MalformedManifest, "bad checkpoint magic in " + path.string());
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!in) raise(ErrorCode::MalformedManifest, "truncated checkpoint header in " + path.string());
    Checkpoint ck;
    ck.header = nlohmann::ordered_json::parse(htext, nullptr, false);
    if (ck.header.is_discarded())
      raise(ErrorCode::MalformedManifest, "unparseable checkpoint header in " + path.string());
    for (const auto& e : ck.header.at("arrays")) {
      const size_t count = e.at("count").get<size_t>();
      std::vector<float> v(count);
      in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(float)));
      if (!in) raise(ErrorCode::MalformedManifest, "truncated checkpoint data in " + path.string());
      ck.arrays.emplace_back(e.at("name").get<std::string>(), std::move(v));
    }
    ck.header.erase("arrays");
    return ck;
  }
};

// Round-trip helpers between a live ParamSet and checkpoint arrays.
inline void params_to_checkpoint(const ParamSet& params, Checkpoint& ck) {
  for (const auto& [name, t] : params.items) ck.add_array(name, t->v);
}

inline void checkpoint_to_params(const Checkpoint& ck, ParamSet& params) {
  for (auto& [name, t] : params.items) {
    const auto& src = ck.array(name);
    if (src.size() != t->v.size())
      raise(ErrorCode::ShapeMismatch, "checkpoint array size mismatch for " + name);
    for (size_t i = 0; i < src.size(); ++i) t->v[i] = static_cast<double>(src[i]);
  }
}

// Checksum of a live parameter set as it would be serialized.
inline uint64_t live_param_checksum(const ParamSet& params) {
  Checkpoint ck;
  params_to_checkpoint(params, ck);
  return ck.param_checksum();
}

}  // namespace eegcap
