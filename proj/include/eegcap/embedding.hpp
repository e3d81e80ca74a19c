#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "eegcap/errors.hpp"
#include "eegcap/rng.hpp"

namespace eegcap {

enum class EmbeddingSource { Vision, Eeg, Planted, Random };

// Fixed-dimension dense vector shared by the vision embedder (H_clip role),
// the EEG encoder (H_eeg role) and the synthetic planted targets.
struct EmbeddingVec {
  std::vector<double> values;
  EmbeddingSource source = EmbeddingSource::Vision;

  size_t dim() const { return values.size(); }
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

namespace detail {

// Deterministic unit-norm vector per label index. Candidates are drawn until
// |cos| < 0.5 against every lower index (vectors are mutually consistent
// because index j always resolves the same way); for tiny dims where that is
// unsatisfiable the last candidate after kMaxAttempts wins.
inline std::vector<double> planted_embedding(int label_index, int dim, uint64_t seed) {
  if (label_index < 0 || dim < 1) raise(ErrorCode::EmptyInput, "planted_embedding: bad args");
  constexpr int kMaxAttempts = 64;
  std::vector<std::vector<double>> accepted;
  accepted.reserve(static_cast<size_t>(label_index) + 1);
  for (int idx = 0; idx <= label_index; ++idx) {
    std::vector<double> cand;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      Rng rng(seed ^ (0x9E3779B97f4A7C15ull * (static_cast<uint64_t>(idx) + 1)) ^
              (0xBF58476D1CE4E5B9ull * static_cast<uint64_t>(attempt)));
      cand = rng.normal_vec(static_cast<size_t>(dim));
      const double norm = l2_norm(cand);
      for (double& x : cand) x /= norm;
      bool ok = true;
      for (const auto& prev : accepted)
        if (std::fabs(dot(cand, prev)) >= 0.5) {
          ok = false;
          break;
        }
      if (ok) break;
    }
    accepted.push_back(std::move(cand));
  }
  return accepted.back();
}

}  // namespace detail

}  // namespace eegcap
