#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>

#include "eegcap/optim.hpp"
#include "eegcap/tensor.hpp"

namespace testutil {

// Central finite-difference check of every element of every parameter against
// the analytic gradient of the scalar `build()` produces. Returns the worst
// relative error, where rel = |a-f| / max(|a|, |f|, floor).
inline double grad_check_max_rel(eegcap::ParamSet& params,
                                 const std::function<eegcap::TensorPtr()>& build,
                                 double h = 1e-5, double floor = 1e-3) {
  params.zero_grad();
  auto loss = build();
  eegcap::autodiff::backward(loss);

  std::vector<std::vector<double>> analytic;
  for (auto& [name, t] : params.items) analytic.push_back(t->g);

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.items.size(); ++pi) {
    auto& t = params.items[pi].second;
    for (size_t j = 0; j < t->v.size(); ++j) {
      const double orig = t->v[j];
      const double step = h * std::max(1.0, std::fabs(orig));
      t->v[j] = orig + step;
      const double up = build()->v[0];
      t->v[j] = orig - step;
      const double down = build()->v[0];
      t->v[j] = orig;
      const double fd = (up - down) / (2.0 * step);
      const double a = analytic[pi][j];
      const double rel = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), floor});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

// Unique scratch directory under the build tree, wiped on construction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("eegcap_test_" + name);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace testutil
