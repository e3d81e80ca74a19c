#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <unordered_set>
#include <vector>

#include "eegcap/errors.hpp"

namespace eegcap {

// Reverse-mode autodiff over dense double tensors. Graphs are built
// dynamically; backward() walks a topological order derived from the parent
// links. Parameters are plain Tensors created with requires_grad=true and
// reused across many forward passes; intermediate nodes are dropped when the
// last shared_ptr goes away.
struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;
  std::vector<double> g;
  bool requires_grad = false;
  std::vector<TensorPtr> parents;
  std::function<void(Tensor&)> backward_fn;

  size_t numel() const {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
  }

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0);
  }

  void zero_grad() { g.assign(v.size(), 0.0); }

  static TensorPtr make(std::vector<int> shape, bool requires_grad = false) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->v.assign(t->numel(), 0.0);
    t->requires_grad = requires_grad;
    return t;
  }

  static TensorPtr scalar(double value) {
    auto t = make({1});
    t->v[0] = value;
    return t;
  }
};

namespace autodiff {

inline bool needs_graph(const std::vector<TensorPtr>& parents) {
  for (const auto& p : parents)
    if (p->requires_grad || p->backward_fn) return true;
  return false;
}

inline TensorPtr node(std::vector<int> shape, std::vector<TensorPtr> parents,
                      std::function<void(Tensor&)> back) {
  auto t = Tensor::make(std::move(shape));
  if (needs_graph(parents)) {
    t->requires_grad = true;
    t->parents = std::move(parents);
    t->backward_fn = std::move(back);
  }
  return t;
}

// Topological order via iterative DFS, then accumulate grads in reverse.
inline void backward(const TensorPtr& loss) {
  if (loss->numel() != 1) raise(ErrorCode::ShapeMismatch, "backward expects a scalar loss");
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> seen;
  std::vector<std::pair<Tensor*, size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [t, idx] = stack.back();
    if (idx < t->parents.size()) {
      Tensor* p = t->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(t);
      stack.pop_back();
    }
  }
  for (Tensor* t : order) t->ensure_grad();
  loss->g[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor* t = *it;
    if (t->backward_fn) t->backward_fn(*t);
  }
}

}  // namespace autodiff

namespace ops {

inline void check(bool cond, const char* msg) {
  if (!cond) raise(ErrorCode::ShapeMismatch, msg);
}

inline TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  check(a->numel() == b->numel(), "add: size mismatch");
  auto out = autodiff::node(a->shape, {a, b}, [a, b](Tensor& t) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (size_t i = 0; i < t.g.size(); ++i) a->g[i] += t.g[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < t.g.size(); ++i) b->g[i] += t.g[i];
    }
  });
  for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] + b->v[i];
  return out;
}

// x:[R,C] + b:[C] broadcast over rows.
inline TensorPtr add_bias(const TensorPtr& x, const TensorPtr& b) {
  check(x->shape.size() >= 1 && !b->shape.empty(), "add_bias: bad rank");
  const size_t C = static_cast<size_t>(b->shape.back());
  check(x->numel() % C == 0, "add_bias: width mismatch");
  auto out = autodiff::node(x->shape, {x, b}, [x, b, C](Tensor& t) {
    if (x->requires_grad) {
      x->ensure_grad();
      for (size_t i = 0; i < t.g.size(); ++i) x->g[i] += t.g[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < t.g.size(); ++i) b->g[i % C] += t.g[i];
    }
  });
  for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = x->v[i] + b->v[i % C];
  return out;
}

inline TensorPtr scale(const TensorPtr& a, double c) {
  auto out = autodiff::node(a->shape, {a}, [a, c](Tensor& t) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (size_t i = 0; i < t.g.size(); ++i) a->g[i] += c * t.g[i];
  });
  for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = c * a->v[i];
  return out;
}

inline TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
  check(a->numel() == b->numel(), "mul: size mismatch");
  auto out = autodiff::node(a->shape, {a, b}, [a, b](Tensor& t) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (size_t i = 0; i < t.g.size(); ++i) a->g[i] += b->v[i] * t.g[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < t.g.size(); ++i) b->g[i] += a->v[i] * t.g[i];
    }
  });
  for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] * b->v[i];
  return out;
}

// a:[m,k] * b:[k,n] -> [m,n]
inline TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
  check(a->shape.size() == 2 && b->shape.size() == 2 && a->shape[1] == b->shape[0], "matmul: shape");
  const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto out = autodiff::node({m, n}, {a, b}, [a, b, m, k, n](Tensor& t) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double go = t.g[static_cast<size_t>(i) * n + j];
          if (go == 0.0) continue;
          for (int p = 0; p < k; ++p)
            a->g[static_cast<size_t>(i) * k + p] += go * b->v[static_cast<size_t>(p) * n + j];
        }
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          const double av = a->v[static_cast<size_t>(i) * k + p];
          if (av == 0.0) continue;
          for (int j = 0; j < n; ++j)
            b->g[static_cast<size_t>(p) * n + j] += av * t.g[static_cast<size_t>(i) * n + j];
        }
    }
  });
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = a->v[static_cast<size_t>(i) * k + p];
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j)
        out->v[static_cast<size_t>(i) * n + j] += av * b->v[static_cast<size_t>(p) * n + j];
    }
  return out;
}

// a:[m,k] * b:[n,k]^T -> [m,n]. The natural layout for Linear(W[out,in]).
inline TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b) {
  check(a->shape.size() == 2 && b->shape.size() == 2 && a->shape[1] == b->shape[1], "matmul_nt: shape");
  const int m = a->shape[0], k = a->shape[1], n = b->shape[0];
  auto out = autodiff::node({m, n}, {a, b}, [a, b, m, k, n](Tensor& t) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double go = t.g[static_cast<size_t>(i) * n + j];
          if (go == 0.0) continue;
          for (int p = 0; p < k; ++p)
            a->g[static_cast<size_t>(i) * k + p] += go * b->v[static_cast<size_t>(j) * k + p];
        }
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double go = t.g[static_cast<size_t>(i) * n + j];
          if (go == 0.0) continue;
          for (int p = 0; p < k; ++p)
            b->g[static_cast<size_t>(j) * k + p] += go * a->v[static_cast<size_t>(i) * k + p];
        }
    }
  });
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      const double* pa = &a->v[static_cast<size_t>(i) * k];
      const double* pb = &b->v[static_cast<size_t>(j) * k];
      for (int p = 0; p < k; ++p) acc += pa[p] * pb[p];
      out->v[static_cast<size_t>(i) * n + j] = acc;
    }
  return out;
}

// Exact (erf) GELU; smooth everywhere, which keeps finite-difference gradient
// checks clean.
inline TensorPtr gelu(const TensorPtr& x) {
  auto out = autodiff::node(x->shape, {x}, [x](Tensor& t) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    for (size_t i = 0; i < t.g.size(); ++i) {
      const double xv = x->v[i];
      const double cdf = 0.5 * (1.0 + std::erf(xv * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * xv * xv);
      x->g[i] += (cdf + xv * pdf) * t.g[i];
    }
  });
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (size_t i = 0; i < out->v.size(); ++i)
    out->v[i] = 0.5 * x->v[i] * (1.0 + std::erf(x->v[i] * inv_sqrt2));
  return out;
}

// Row-wise layer norm over the last dimension with learned gain/bias.
inline TensorPtr layernorm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias,
                           double eps = 1e-5) {
  const size_t C = static_cast<size_t>(x->shape.back());
  check(gain->numel() == C && bias->numel() == C, "layernorm: gain/bias width");
  const size_t R = x->numel() / C;
  auto cache = std::make_shared<std::vector<double>>(R * (C + 1));  // xhat rows + inv_std per row
  auto out = autodiff::node(x->shape, {x, gain, bias}, [x, gain, bias, cache, R, C](Tensor& t) {
    const double* xhat = cache->data();
    const double* inv_std = cache->data() + R * C;
    for (size_t r = 0; r < R; ++r) {
      const double* dy = &t.g[r * C];
      const double* xh = &xhat[r * C];
      if (gain->requires_grad) {
        gain->ensure_grad();
        for (size_t c = 0; c < C; ++c) gain->g[c] += dy[c] * xh[c];
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        for (size_t c = 0; c < C; ++c) bias->g[c] += dy[c];
      }
      if (x->requires_grad) {
        x->ensure_grad();
        double mean_h = 0.0, mean_hx = 0.0;
        for (size_t c = 0; c < C; ++c) {
          const double h = gain->v[c] * dy[c];
          mean_h += h;
          mean_hx += h * xh[c];
        }
        mean_h /= static_cast<double>(C);
        mean_hx /= static_cast<double>(C);
        for (size_t c = 0; c < C; ++c) {
          const double h = gain->v[c] * dy[c];
          x->g[r * C + c] += inv_std[r] * (h - mean_h - xh[c] * mean_hx);
        }
      }
    }
  });
  for (size_t r = 0; r < R; ++r) {
    const double* xr = &x->v[r * C];
    double mean = 0.0;
    for (size_t c = 0; c < C; ++c) mean += xr[c];
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (size_t c = 0; c < C; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(C);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    (*cache)[R * C + r] = inv_std;
    for (size_t c = 0; c < C; ++c) {
      const double xh = (xr[c] - mean) * inv_std;
      (*cache)[r * C + c] = xh;
      out->v[r * C + c] = gain->v[c] * xh + bias->v[c];
    }
  }
  return out;
}

// Softmax over each row j<=i of a [T,T] score matrix; future positions get 0.
inline TensorPtr causal_softmax(const TensorPtr& s) {
  check(s->shape.size() == 2 && s->shape[0] == s->shape[1], "causal_softmax: square");
  const int T = s->shape[0];
  auto out = autodiff::node(s->shape, {s}, [s, T](Tensor& t) {
    if (!s->requires_grad) return;
    s->ensure_grad();
    for (int i = 0; i < T; ++i) {
      const double* p = &t.v[static_cast<size_t>(i) * T];
      const double* dp = &t.g[static_cast<size_t>(i) * T];
      double dot = 0.0;
      for (int j = 0; j <= i; ++j) dot += dp[j] * p[j];
      for (int j = 0; j <= i; ++j)
        s->g[static_cast<size_t>(i) * T + j] += p[j] * (dp[j] - dot);
    }
  });
  for (int i = 0; i < T; ++i) {
    const double* row = &s->v[static_cast<size_t>(i) * T];
    double mx = row[0];
    for (int j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j <= i; ++j) sum += std::exp(row[j] - mx);
    for (int j = 0; j <= i; ++j)
      out->v[static_cast<size_t>(i) * T + j] = std::exp(row[j] - mx) / sum;
  }
  return out;
}

// Mean cross-entropy of softmax(logits) rows at the target indices; rows whose
// target is ignore_index contribute nothing. Returns a scalar.
inline TensorPtr softmax_ce_mean(const TensorPtr& logits, const std::vector<int>& targets,
                                 int ignore_index = -1) {
  check(logits->shape.size() == 2, "softmax_ce_mean: rank");
  const int R = logits->shape[0], V = logits->shape[1];
  check(static_cast<int>(targets.size()) == R, "softmax_ce_mean: target count");
  size_t n_scored = 0;
  for (int t : targets)
    if (t != ignore_index) {
      check(t >= 0 && t < V, "softmax_ce_mean: target out of range");
      ++n_scored;
    }
  check(n_scored > 0, "softmax_ce_mean: nothing to score");
  auto probs = std::make_shared<std::vector<double>>(logits->v.size());
  auto out = autodiff::node({1}, {logits}, [logits, targets, probs, R, V, n_scored, ignore_index](Tensor& t) {
    if (!logits->requires_grad) return;
    logits->ensure_grad();
    const double gscale = t.g[0] / static_cast<double>(n_scored);
    for (int r = 0; r < R; ++r) {
      if (targets[r] == ignore_index) continue;
      const double* p = &(*probs)[static_cast<size_t>(r) * V];
      for (int j = 0; j < V; ++j) {
        const double onehot = (j == targets[r]) ? 1.0 : 0.0;
        logits->g[static_cast<size_t>(r) * V + j] += gscale * (p[j] - onehot);
      }
    }
  });
  double total = 0.0;
  for (int r = 0; r < R; ++r) {
    const double* row = &logits->v[static_cast<size_t>(r) * V];
    double mx = row[0];
    for (int j = 1; j < V; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < V; ++j) sum += std::exp(row[j] - mx);
    double* p = &(*probs)[static_cast<size_t>(r) * V];
    for (int j = 0; j < V; ++j) p[j] = std::exp(row[j] - mx) / sum;
    if (targets[r] != ignore_index) total += -(row[targets[r]] - mx - std::log(sum));
  }
  out->v[0] = total / static_cast<double>(n_scored);
  return out;
}

// Mean squared elementwise difference, scalar output.
inline TensorPtr mse_mean(const TensorPtr& a, const TensorPtr& b) {
  check(a->numel() == b->numel(), "mse_mean: size mismatch");
  const double inv_n = 1.0 / static_cast<double>(a->numel());
  auto out = autodiff::node({1}, {a, b}, [a, b, inv_n](Tensor& t) {
    const double s = 2.0 * inv_n * t.g[0];
    if (a->requires_grad) {
      a->ensure_grad();
      for (size_t i = 0; i < a->v.size(); ++i) a->g[i] += s * (a->v[i] - b->v[i]);
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < b->v.size(); ++i) b->g[i] += s * (b->v[i] - a->v[i]);
    }
  });
  double acc = 0.0;
  for (size_t i = 0; i < a->v.size(); ++i) {
    const double d = a->v[i] - b->v[i];
    acc += d * d;
  }
  out->v[0] = acc * inv_n;
  return out;
}

// 1-D convolution, x:[B,Cin,T] w:[Cout,Cin,K] b:[Cout] -> [B,Cout,To].
inline TensorPtr conv1d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride,
                        int dilation, int pad) {
  check(x->shape.size() == 3 && w->shape.size() == 3, "conv1d: rank");
  check(x->shape[1] == w->shape[1], "conv1d: channel mismatch");
  const int B = x->shape[0], Cin = x->shape[1], T = x->shape[2];
  const int Cout = w->shape[0], K = w->shape[2];
  check(b->numel() == static_cast<size_t>(Cout), "conv1d: bias size");
  const int span = dilation * (K - 1) + 1;
  const int To = (T + 2 * pad - span) / stride + 1;
  check(To >= 1, "conv1d: output length < 1");
  auto out = autodiff::node({B, Cout, To}, {x, w, b},
                            [x, w, b, B, Cin, T, Cout, K, To, stride, dilation, pad](Tensor& t) {
    const bool gx = x->requires_grad, gw = w->requires_grad, gb = b->requires_grad;
    if (gx) x->ensure_grad();
    if (gw) w->ensure_grad();
    if (gb) b->ensure_grad();
    for (int bi = 0; bi < B; ++bi)
      for (int co = 0; co < Cout; ++co) {
        const size_t obase = (static_cast<size_t>(bi) * Cout + co) * To;
        for (int t0 = 0; t0 < To; ++t0) {
          const double go = t.g[obase + t0];
          if (go == 0.0) continue;
          if (gb) b->g[co] += go;
          const int start = t0 * stride - pad;
          for (int ci = 0; ci < Cin; ++ci) {
            const size_t xbase = (static_cast<size_t>(bi) * Cin + ci) * T;
            const size_t wbase = (static_cast<size_t>(co) * Cin + ci) * K;
            for (int k = 0; k < K; ++k) {
              const int s = start + k * dilation;
              if (s < 0 || s >= T) continue;
              if (gx) x->g[xbase + s] += w->v[wbase + k] * go;
              if (gw) w->g[wbase + k] += x->v[xbase + s] * go;
            }
          }
        }
      }
  });
  for (int bi = 0; bi < B; ++bi)
    for (int co = 0; co < Cout; ++co) {
      const size_t obase = (static_cast<size_t>(bi) * Cout + co) * To;
      for (int t0 = 0; t0 < To; ++t0) {
        const int start = t0 * stride - pad;
        double acc = b->v[co];
        for (int ci = 0; ci < Cin; ++ci) {
          const size_t xbase = (static_cast<size_t>(bi) * Cin + ci) * T;
          const size_t wbase = (static_cast<size_t>(co) * Cin + ci) * K;
          for (int k = 0; k < K; ++k) {
            const int s = start + k * dilation;
            if (s >= 0 && s < T) acc += w->v[wbase + k] * x->v[xbase + s];
          }
        }
        out->v[obase + t0] = acc;
      }
    }
  return out;
}

// Concatenate [B,Ci,T] blocks along the channel axis.
inline TensorPtr concat_channels(const std::vector<TensorPtr>& parts) {
  check(!parts.empty(), "concat_channels: empty");
  const int B = parts[0]->shape[0], T = parts[0]->shape[2];
  int Ctotal = 0;
  for (const auto& p : parts) {
    check(p->shape.size() == 3 && p->shape[0] == B && p->shape[2] == T, "concat_channels: shape");
    Ctotal += p->shape[1];
  }
  auto out = autodiff::node({B, Ctotal, T}, parts, [parts, B, Ctotal, T](Tensor& t) {
    for (int bi = 0; bi < B; ++bi) {
      int coff = 0;
      for (const auto& p : parts) {
        const int C = p->shape[1];
        if (p->requires_grad) {
          p->ensure_grad();
          for (int c = 0; c < C; ++c)
            for (int s = 0; s < T; ++s)
              p->g[(static_cast<size_t>(bi) * C + c) * T + s] +=
                  t.g[(static_cast<size_t>(bi) * Ctotal + coff + c) * T + s];
        }
        coff += C;
      }
    }
  });
  for (int bi = 0; bi < B; ++bi) {
    int coff = 0;
    for (const auto& p : parts) {
      const int C = p->shape[1];
      for (int c = 0; c < C; ++c)
        for (int s = 0; s < T; ++s)
          out->v[(static_cast<size_t>(bi) * Ctotal + coff + c) * T + s] =
              p->v[(static_cast<size_t>(bi) * C + c) * T + s];
      coff += C;
    }
  }
  return out;
}

// Mean over the time axis: [B,C,T] -> [B,C].
inline TensorPtr mean_time(const TensorPtr& x) {
  check(x->shape.size() == 3, "mean_time: rank");
  const int B = x->shape[0], C = x->shape[1], T = x->shape[2];
  const double inv_t = 1.0 / static_cast<double>(T);
  auto out = autodiff::node({B, C}, {x}, [x, B, C, T, inv_t](Tensor& t) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (int bi = 0; bi < B; ++bi)
      for (int c = 0; c < C; ++c) {
        const double go = t.g[static_cast<size_t>(bi) * C + c] * inv_t;
        for (int s = 0; s < T; ++s) x->g[(static_cast<size_t>(bi) * C + c) * T + s] += go;
      }
  });
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int s = 0; s < T; ++s) acc += x->v[(static_cast<size_t>(bi) * C + c) * T + s];
      out->v[static_cast<size_t>(bi) * C + c] = acc * inv_t;
    }
  return out;
}

// Embedding lookup: rows of table[V,E] selected by ids -> [N,E].
inline TensorPtr gather_rows(const TensorPtr& table, const std::vector<int>& ids) {
  check(table->shape.size() == 2, "gather_rows: rank");
  const int V = table->shape[0], E = table->shape[1];
  for (int id : ids) check(id >= 0 && id < V, "gather_rows: id out of range");
  const int N = static_cast<int>(ids.size());
  auto out = autodiff::node({N, E}, {table}, [table, ids, E](Tensor& t) {
    if (!table->requires_grad) return;
    table->ensure_grad();
    for (size_t r = 0; r < ids.size(); ++r)
      for (int c = 0; c < E; ++c)
        table->g[static_cast<size_t>(ids[r]) * E + c] += t.g[r * E + c];
  });
  for (size_t r = 0; r < ids.size(); ++r)
    for (int c = 0; c < E; ++c)
      out->v[r * E + c] = table->v[static_cast<size_t>(ids[r]) * E + c];
  return out;
}

// Copy of x with one row replaced; gradient for that row flows to the
// replacement instead of x.
inline TensorPtr replace_row(const TensorPtr& x, int row, const TensorPtr& r) {
  check(x->shape.size() == 2, "replace_row: rank");
  const int T = x->shape[0], E = x->shape[1];
  check(row >= 0 && row < T, "replace_row: row out of range");
  check(r->numel() == static_cast<size_t>(E), "replace_row: width mismatch");
  auto out = autodiff::node(x->shape, {x, r}, [x, r, row, E](Tensor& t) {
    if (x->requires_grad) {
      x->ensure_grad();
      for (size_t i = 0; i < t.g.size(); ++i) {
        const int rr = static_cast<int>(i) / E;
        if (rr != row) x->g[i] += t.g[i];
      }
    }
    if (r->requires_grad) {
      r->ensure_grad();
      for (int c = 0; c < E; ++c) r->g[c] += t.g[static_cast<size_t>(row) * E + c];
    }
  });
  out->v = x->v;
  for (int c = 0; c < E; ++c) out->v[static_cast<size_t>(row) * E + c] = r->v[c];
  return out;
}

inline TensorPtr concat_rows(const TensorPtr& a, const TensorPtr& b) {
  check(a->shape.size() == 2 && b->shape.size() == 2 && a->shape[1] == b->shape[1],
        "concat_rows: width mismatch");
  const int Ta = a->shape[0], Tb = b->shape[0], E = a->shape[1];
  auto out = autodiff::node({Ta + Tb, E}, {a, b}, [a, b, Ta, Tb, E](Tensor& t) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (size_t i = 0; i < static_cast<size_t>(Ta) * E; ++i) a->g[i] += t.g[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < static_cast<size_t>(Tb) * E; ++i)
        b->g[i] += t.g[static_cast<size_t>(Ta) * E + i];
    }
  });
  std::copy(a->v.begin(), a->v.end(), out->v.begin());
  std::copy(b->v.begin(), b->v.end(), out->v.begin() + static_cast<long>(a->v.size()));
  return out;
}

// Concatenate [T,ci] blocks along columns.
inline TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
  check(!parts.empty(), "concat_cols: empty");
  const int T = parts[0]->shape[0];
  int Ctotal = 0;
  for (const auto& p : parts) {
    check(p->shape.size() == 2 && p->shape[0] == T, "concat_cols: shape");
    Ctotal += p->shape[1];
  }
  auto out = autodiff::node({T, Ctotal}, parts, [parts, T, Ctotal](Tensor& t) {
    int coff = 0;
    for (const auto& p : parts) {
      const int C = p->shape[1];
      if (p->requires_grad) {
        p->ensure_grad();
        for (int r = 0; r < T; ++r)
          for (int c = 0; c < C; ++c)
            p->g[static_cast<size_t>(r) * C + c] += t.g[static_cast<size_t>(r) * Ctotal + coff + c];
      }
      coff += C;
    }
  });
  int coff = 0;
  for (const auto& p : parts) {
    const int C = p->shape[1];
    for (int r = 0; r < T; ++r)
      for (int c = 0; c < C; ++c)
        out->v[static_cast<size_t>(r) * Ctotal + coff + c] = p->v[static_cast<size_t>(r) * C + c];
    coff += C;
  }
  return out;
}

inline TensorPtr slice_rows(const TensorPtr& x, int r0, int r1) {
  check(x->shape.size() == 2, "slice_rows: rank");
  const int E = x->shape[1];
  check(0 <= r0 && r0 <= r1 && r1 <= x->shape[0], "slice_rows: range");
  auto out = autodiff::node({r1 - r0, E}, {x}, [x, r0, r1, E](Tensor& t) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (size_t i = 0; i < t.g.size(); ++i) x->g[static_cast<size_t>(r0) * E + i] += t.g[i];
  });
  std::copy(x->v.begin() + static_cast<long>(r0) * E, x->v.begin() + static_cast<long>(r1) * E,
            out->v.begin());
  return out;
}

}  // namespace ops
}  // namespace eegcap
