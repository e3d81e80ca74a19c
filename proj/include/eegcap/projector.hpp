#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "eegcap/checkpoint.hpp"
#include "eegcap/embedding.hpp"
#include "eegcap/errors.hpp"
#include "eegcap/optim.hpp"
#include "eegcap/rng.hpp"
#include "eegcap/tensor.hpp"

namespace eegcap {

// The affine map from external embedding space (dimension D) into the LM
// token-embedding space (width E): h_mm = W * h + b. The only trainable
// component in stages 2 and 3.
class Projector {
 public:
  Projector(int in_dim, int out_dim, uint64_t init_seed)
      : in_dim_(in_dim), out_dim_(out_dim), init_seed_(init_seed) {
    if (in_dim < 1 || out_dim < 1) raise(ErrorCode::DimMismatch, "projector dims must be >= 1");
    auto w = Tensor::make({out_dim, in_dim});
    Rng rng = Rng(init_seed).fork("projector-init");
    const double std = std::sqrt(2.0 / static_cast<double>(in_dim + out_dim));
    for (auto& v : w->v) v = rng.normal(0.0, std);
    weight_ = params_.add("proj.w", w);
    bias_ = params_.add("proj.b", Tensor::make({out_dim}));
  }

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  uint64_t init_seed() const { return init_seed_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const TensorPtr& weight() const { return weight_; }
  const TensorPtr& bias() const { return bias_; }

  // Plain-vector projection (inference path).
  std::vector<double> project(const std::vector<double>& h) const {
    if (static_cast<int>(h.size()) != in_dim_)
      raise(ErrorCode::ShapeMismatch, "projector input dim " + std::to_string(h.size()) +
                                          ", expected " + std::to_string(in_dim_));
    std::vector<double> out(static_cast<size_t>(out_dim_));
    for (int r = 0; r < out_dim_; ++r) {
      double acc = bias_->v[static_cast<size_t>(r)];
      const double* wr = &weight_->v[static_cast<size_t>(r) * in_dim_];
      for (int c = 0; c < in_dim_; ++c) acc += wr[c] * h[static_cast<size_t>(c)];
      out[static_cast<size_t>(r)] = acc;
    }
    return out;
  }

  // Graph projection (training path): h is a constant [D] input.
  TensorPtr project_node(const std::vector<double>& h) const {
    if (static_cast<int>(h.size()) != in_dim_)
      raise(ErrorCode::ShapeMismatch, "projector input dim mismatch");
    auto x = Tensor::make({1, in_dim_});
    x->v = h;
    auto y = ops::add_bias(ops::matmul_nt(x, weight_), bias_);  // [1, E]
    return y;
  }

  Checkpoint to_checkpoint(int stage, uint64_t seed) const {
    Checkpoint ck;
    ck.header["kind"] = "projector";
    ck.header["stage"] = stage;
    ck.header["seed"] = seed;
    ck.header["config"] = {{"in_dim", in_dim_}, {"out_dim", out_dim_}};
    params_to_checkpoint(params_, ck);
    return ck;
  }

  static Projector from_checkpoint(const Checkpoint& ck) {
    const auto& c = ck.header.at("config");
    Projector p(c.at("in_dim").get<int>(), c.at("out_dim").get<int>(),
                ck.header.value("seed", uint64_t{0}));
    checkpoint_to_params(ck, p.params_);
    return p;
  }

 private:
  int in_dim_;
  int out_dim_;
  uint64_t init_seed_;
  ParamSet params_;
  TensorPtr weight_;
  TensorPtr bias_;
};

inline Projector init_projector(int in_dim, int out_dim, uint64_t seed) {
  return Projector(in_dim, out_dim, seed);
}

inline std::vector<double> project(const Projector& p, const EmbeddingVec& h) {
  return p.project(h.values);
}

}  // namespace eegcap
