#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "eegcap/tensor.hpp"

namespace eegcap {

// Named parameter set. Names are stable and become the array names in
// checkpoint files.
struct ParamSet {
  std::vector<std::pair<std::string, TensorPtr>> items;

  TensorPtr add(const std::string& name, TensorPtr t) {
    t->requires_grad = true;
    items.emplace_back(name, t);
    return t;
  }

  TensorPtr find(const std::string& name) const {
    for (const auto& [n, t] : items)
      if (n == name) return t;
    return nullptr;
  }

  size_t total_size() const {
    size_t n = 0;
    for (const auto& [name, t] : items) n += t->numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : items) t->zero_grad();
  }
};

// Adam with decoupled weight decay.
class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  AdamW(ParamSet& params, Options opt) : params_(&params), opt_(opt) {
    m_.resize(params.items.size());
    v_.resize(params.items.size());
    for (size_t i = 0; i < params.items.size(); ++i) {
      m_[i].assign(params.items[i].second->numel(), 0.0);
      v_[i].assign(params.items[i].second->numel(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, t_);
    const double bc2 = 1.0 - std::pow(opt_.beta2, t_);
    for (size_t i = 0; i < params_->items.size(); ++i) {
      Tensor& p = *params_->items[i].second;
      p.ensure_grad();
      for (size_t j = 0; j < p.v.size(); ++j) {
        const double g = p.g[j];
        m_[i][j] = opt_.beta1 * m_[i][j] + (1.0 - opt_.beta1) * g;
        v_[i][j] = opt_.beta2 * v_[i][j] + (1.0 - opt_.beta2) * g * g;
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        p.v[j] -= opt_.lr * (mhat / (std::sqrt(vhat) + opt_.eps) + opt_.weight_decay * p.v[j]);
      }
    }
  }

  int64_t steps_taken() const { return t_; }

 private:
  ParamSet* params_;
  Options opt_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace eegcap
