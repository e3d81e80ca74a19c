#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegcap/embedding.hpp"
#include "eegcap/errors.hpp"
#include "eegcap/rng.hpp"
#include "eegcap/sketch.hpp"
#include "eegcap/util.hpp"

namespace eegcap {

// Global invocation counter backing the strictly-bimodal-inference check: any
// image embedding call, from any backend, bumps it.
inline std::atomic<uint64_t>& vision_call_count() {
  static std::atomic<uint64_t> n{0};
  return n;
}

// Pooled image embeddings behind a uniform interface. Any backend that is
// deterministic and emits a fixed dimension is interchangeable downstream.
class VisionBackend {
 public:
  virtual ~VisionBackend() = default;
  virtual int dim() const = 0;
  virtual std::string name() const = 0;

  EmbeddingVec embed_image(const GrayImage& img) {
    vision_call_count()++;
    return embed(img);
  }

 protected:
  virtual EmbeddingVec embed(const GrayImage& img) = 0;
};

// Offline stub: seeded pseudo-random projection of the image byte digest,
// L2-normalized. Reproducible everywhere, sensitive to single-pixel changes.
class StubVisionBackend : public VisionBackend {
 public:
  explicit StubVisionBackend(int dim = 512, uint64_t seed = 0) : dim_(dim), seed_(seed) {}

  int dim() const override { return dim_; }
  std::string name() const override { return "stub"; }

 protected:
  EmbeddingVec embed(const GrayImage& img) override {
    std::vector<float> quantized(img.pix.data.size() + 2);
    quantized[0] = static_cast<float>(img.height());
    quantized[1] = static_cast<float>(img.width());
    for (size_t i = 0; i < img.pix.data.size(); ++i)
      quantized[i + 2] = static_cast<float>(img.pix.data[i]);
    const uint64_t digest = fnv1a64(quantized);
    Rng rng(digest ^ seed_);
    EmbeddingVec e;
    e.source = EmbeddingSource::Vision;
    e.values = rng.normal_vec(static_cast<size_t>(dim_));
    const double norm = l2_norm(e.values);
    for (double& x : e.values) x /= norm;
    return e;
  }

 private:
  int dim_;
  uint64_t seed_;
};

// Table of precomputed embeddings keyed by stimulus id; the hook for plugging
// real pretrained-model embeddings computed offline.
class TableVisionBackend : public VisionBackend {
 public:
  TableVisionBackend(std::map<std::string, std::vector<double>> table, int dim)
      : table_(std::move(table)), dim_(dim) {}

  static TableVisionBackend from_json_file(const std::filesystem::path& path) {
    auto j = nlohmann::json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) raise(ErrorCode::MalformedManifest, "bad embedding table " + path.string());
    std::map<std::string, std::vector<double>> table;
    const int dim = j.at("dim").get<int>();
    for (const auto& [key, val] : j.at("embeddings").items())
      table[key] = val.get<std::vector<double>>();
    return TableVisionBackend(std::move(table), dim);
  }

  int dim() const override { return dim_; }
  std::string name() const override { return "table"; }

  EmbeddingVec lookup(const std::string& stimulus_id) {
    vision_call_count()++;
    auto it = table_.find(stimulus_id);
    if (it == table_.end()) raise(ErrorCode::MissingTarget, "no embedding for " + stimulus_id);
    EmbeddingVec e;
    e.source = EmbeddingSource::Vision;
    e.values = it->second;
    return e;
  }

 protected:
  EmbeddingVec embed(const GrayImage&) override {
    raise(ErrorCode::BackendUnavailable, "table backend embeds by stimulus id, not pixels");
  }

 private:
  std::map<std::string, std::vector<double>> table_;
  int dim_;
};

// Backend factory driven by the config key. Pretrained backends are not
// bundled; requesting one reports BackendUnavailable so callers can fall back
// to the stub.
inline std::unique_ptr<VisionBackend> make_vision_backend(const std::string& key, int dim,
                                                          uint64_t seed) {
  if (key == "stub") return std::make_unique<StubVisionBackend>(dim, seed);
  if (key.rfind("table:", 0) == 0)
    return std::make_unique<TableVisionBackend>(TableVisionBackend::from_json_file(key.substr(6)));
  raise(ErrorCode::BackendUnavailable,
        "vision backend '" + key + "' is not installed; use 'stub' or 'table:<file>'");
}

// Deterministic unit-norm target for a synthetic class (the planted stand-in
// for a pooled image embedding).
inline EmbeddingVec planted_embedding(int label_index, int dim, uint64_t seed) {
  EmbeddingVec e;
  e.source = EmbeddingSource::Planted;
  e.values = detail::planted_embedding(label_index, dim, seed);
  return e;
}

}  // namespace eegcap
