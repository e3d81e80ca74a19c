#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "eegcap/checkpoint.hpp"
#include "eegcap/dataset.hpp"
#include "eegcap/embedding.hpp"
#include "eegcap/errors.hpp"
#include "eegcap/optim.hpp"
#include "eegcap/rng.hpp"
#include "eegcap/tensor.hpp"

namespace eegcap {

// One temporal conv branch; branches with different dilations run in parallel
// over the input and are concatenated channel-wise.
struct ConvBranchSpec {
  int out_channels = 16;
  int kernel = 7;
  int dilation = 1;
  int stride = 4;
};

struct EncoderConfig {
  int channels = 128;
  int time_len = 440;
  int embed_dim = 512;
  std::vector<ConvBranchSpec> branches = {{16, 7, 1, 4}, {16, 7, 2, 4}};
  int spatial_channels = 32;   // 1x1 cross-channel mix after the branch concat
  int residual_kernel = 3;     // temporal residual block on top
  std::vector<int> classifier_hidden = {64};
  int n_classes = 40;
};

struct Stage1Config {
  double alpha = 0.5;  // CE weight; (1 - alpha) goes to the MSE term
  int batch_size = 16;
  int epochs = 100;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  uint64_t seed = 0;
  // stop once validation accuracy and the MSE reduction factor both clear
  // their targets (0 disables)
  double early_stop_accuracy = 0.0;
  double early_stop_mse_factor = 0.0;
};

struct Stage1LossBreakdown {
  double total = 0.0;
  double mse_term = 0.0;
  double ce_term = 0.0;
};

// Combined Stage-1 objective on plain vectors: total =
// (1-alpha)*MSE(h_eeg, h_clip) + alpha*CE(softmax(logits), y). The training
// loop computes the same quantity through the autodiff graph; this form backs
// the per-batch decomposition identity check.
inline Stage1LossBreakdown stage1_loss(const std::vector<double>& h_eeg,
                                       const std::vector<double>& h_clip, int y_true_index,
                                       const std::vector<double>& logits, double alpha) {
  if (h_eeg.size() != h_clip.size()) raise(ErrorCode::ShapeMismatch, "embedding dims differ");
  if (y_true_index < 0 || y_true_index >= static_cast<int>(logits.size()))
    raise(ErrorCode::ShapeMismatch, "label index out of range");
  Stage1LossBreakdown b;
  for (size_t i = 0; i < h_eeg.size(); ++i) {
    const double d = h_eeg[i] - h_clip[i];
    b.mse_term += d * d;
  }
  b.mse_term /= static_cast<double>(h_eeg.size());
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  b.ce_term = -(logits[static_cast<size_t>(y_true_index)] - mx - std::log(sum));
  b.total = (1.0 - alpha) * b.mse_term + alpha * b.ce_term;
  return b;
}

// Softmax with argmax; ties resolved to the lowest label index.
inline std::pair<std::vector<double>, int> softmax_argmax(const std::vector<double>& logits) {
  if (logits.empty()) raise(ErrorCode::ShapeMismatch, "empty logits");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  std::vector<double> probs(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  int arg = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    probs[i] /= sum;
    if (probs[i] > probs[static_cast<size_t>(arg)]) arg = static_cast<int>(i);
  }
  return {probs, arg};
}

// Convolutional EEG encoder: parallel dilated temporal branches over the
// channel stack, a 1x1 cross-channel mix, one temporal residual block, global
// average pooling, and a linear head to the embedding; an MLP classifier sits
// on the embedding.
class EegEncoder {
 public:
  EegEncoder(EncoderConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)), init_seed_(init_seed) {
    Rng rng = Rng(init_seed).fork("encoder-init");
    auto init = [&](const std::string& name, std::vector<int> shape, double fan_in) {
      auto t = Tensor::make(std::move(shape));
      const double std = std::sqrt(2.0 / fan_in);
      for (auto& v : t->v) v = rng.normal(0.0, std);
      return params_.add(name, t);
    };
    auto zeros = [&](const std::string& name, std::vector<int> shape) {
      return params_.add(name, Tensor::make(std::move(shape)));
    };

    int concat_ch = 0;
    for (size_t i = 0; i < cfg_.branches.size(); ++i) {
      const auto& b = cfg_.branches[i];
      const std::string tag = "enc.branch" + std::to_string(i);
      init(tag + ".w", {b.out_channels, cfg_.channels, b.kernel},
           static_cast<double>(cfg_.channels) * b.kernel);
      zeros(tag + ".b", {b.out_channels});
      concat_ch += b.out_channels;
    }
    init("enc.spatial.w", {cfg_.spatial_channels, concat_ch, 1}, concat_ch);
    zeros("enc.spatial.b", {cfg_.spatial_channels});
    init("enc.res.w", {cfg_.spatial_channels, cfg_.spatial_channels, cfg_.residual_kernel},
         static_cast<double>(cfg_.spatial_channels) * cfg_.residual_kernel);
    zeros("enc.res.b", {cfg_.spatial_channels});
    init("enc.head.w", {cfg_.embed_dim, cfg_.spatial_channels}, cfg_.spatial_channels);
    zeros("enc.head.b", {cfg_.embed_dim});

    int in_dim = cfg_.embed_dim;
    for (size_t i = 0; i < cfg_.classifier_hidden.size(); ++i) {
      const std::string tag = "cls.h" + std::to_string(i);
      init(tag + ".w", {cfg_.classifier_hidden[i], in_dim}, in_dim);
      zeros(tag + ".b", {cfg_.classifier_hidden[i]});
      in_dim = cfg_.classifier_hidden[i];
    }
    init("cls.out.w", {cfg_.n_classes, in_dim}, in_dim);
    zeros("cls.out.b", {cfg_.n_classes});
  }

  const EncoderConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  uint64_t init_seed() const { return init_seed_; }

  // Batched graph forward: x is [B, channels, time]; returns (embeddings
  // [B,D], logits [B,n_classes]).
  std::pair<TensorPtr, TensorPtr> forward(const TensorPtr& x) const {
    if (x->shape.size() != 3 || x->shape[1] != cfg_.channels || x->shape[2] != cfg_.time_len)
      raise(ErrorCode::ShapeMismatch, "encoder input must be [B," + std::to_string(cfg_.channels) +
                                          "," + std::to_string(cfg_.time_len) + "]");
    std::vector<TensorPtr> outs;
    for (size_t i = 0; i < cfg_.branches.size(); ++i) {
      const auto& b = cfg_.branches[i];
      const std::string tag = "enc.branch" + std::to_string(i);
      const int pad = b.dilation * (b.kernel - 1) / 2;
      outs.push_back(ops::conv1d(x, params_.find(tag + ".w"), params_.find(tag + ".b"), b.stride,
                                 b.dilation, pad));
    }
    // branches must agree on output length
    for (const auto& o : outs)
      if (o->shape[2] != outs[0]->shape[2])
        raise(ErrorCode::ShapeMismatch, "branch output lengths differ; adjust kernel/dilation");
    auto h = ops::gelu(outs.size() == 1 ? outs[0] : ops::concat_channels(outs));
    h = ops::gelu(ops::conv1d(h, params_.find("enc.spatial.w"), params_.find("enc.spatial.b"), 1, 1, 0));
    auto r = ops::conv1d(h, params_.find("enc.res.w"), params_.find("enc.res.b"), 1, 1,
                         (cfg_.residual_kernel - 1) / 2);
    h = ops::gelu(ops::add(h, r));
    auto pooled = ops::mean_time(h);  // [B, spatial_channels]
    auto emb = ops::add_bias(ops::matmul_nt(pooled, params_.find("enc.head.w")),
                             params_.find("enc.head.b"));  // [B, D]
    auto z = emb;
    for (size_t i = 0; i < cfg_.classifier_hidden.size(); ++i) {
      const std::string tag = "cls.h" + std::to_string(i);
      z = ops::gelu(ops::add_bias(ops::matmul_nt(z, params_.find(tag + ".w")),
                                  params_.find(tag + ".b")));
    }
    auto logits = ops::add_bias(ops::matmul_nt(z, params_.find("cls.out.w")),
                                params_.find("cls.out.b"));
    return {emb, logits};
  }

  TensorPtr batch_tensor(const std::vector<const EegSegment*>& segs) const {
    auto x = Tensor::make({static_cast<int>(segs.size()), cfg_.channels, cfg_.time_len});
    size_t i = 0;
    for (const auto* s : segs) {
      if (static_cast<int>(s->samples.rows) != cfg_.channels ||
          static_cast<int>(s->samples.cols) != cfg_.time_len)
        raise(ErrorCode::ShapeMismatch, "segment shape does not match encoder config");
      for (float v : s->samples.data) x->v[i++] = static_cast<double>(v);
    }
    return x;
  }

  EmbeddingVec encode(const EegSegment& seg) const {
    auto [emb, logits] = forward(batch_tensor({&seg}));
    EmbeddingVec e;
    e.source = EmbeddingSource::Eeg;
    e.values = emb->v;
    return e;
  }

  std::pair<std::vector<double>, int> classify(const EmbeddingVec& h) const {
    if (static_cast<int>(h.dim()) != cfg_.embed_dim)
      raise(ErrorCode::ShapeMismatch, "embedding dim does not match encoder config");
    auto z = Tensor::make({1, cfg_.embed_dim});
    z->v = h.values;
    TensorPtr cur = z;
    for (size_t i = 0; i < cfg_.classifier_hidden.size(); ++i) {
      const std::string tag = "cls.h" + std::to_string(i);
      cur = ops::gelu(ops::add_bias(ops::matmul_nt(cur, params_.find(tag + ".w")),
                                    params_.find(tag + ".b")));
    }
    auto logits = ops::add_bias(ops::matmul_nt(cur, params_.find("cls.out.w")),
                                params_.find("cls.out.b"));
    return softmax_argmax(logits->v);
  }

  Checkpoint to_checkpoint(const LabelSet& labels, uint64_t seed) const {
    Checkpoint ck;
    ck.header["kind"] = "encoder";
    ck.header["seed"] = seed;
    ck.header["labels"] = labels.labels;
    nlohmann::ordered_json c;
    c["channels"] = cfg_.channels;
    c["time_len"] = cfg_.time_len;
    c["embed_dim"] = cfg_.embed_dim;
    nlohmann::ordered_json br = nlohmann::ordered_json::array();
    for (const auto& b : cfg_.branches)
      br.push_back({{"out_channels", b.out_channels},
                    {"kernel", b.kernel},
                    {"dilation", b.dilation},
                    {"stride", b.stride}});
    c["branches"] = br;
    c["spatial_channels"] = cfg_.spatial_channels;
    c["residual_kernel"] = cfg_.residual_kernel;
    c["classifier_hidden"] = cfg_.classifier_hidden;
    c["n_classes"] = cfg_.n_classes;
    ck.header["config"] = c;
    params_to_checkpoint(params_, ck);
    return ck;
  }

  static std::pair<EegEncoder, LabelSet> from_checkpoint(const Checkpoint& ck) {
    const auto& c = ck.header.at("config");
    EncoderConfig cfg;
    cfg.channels = c.at("channels").get<int>();
    cfg.time_len = c.at("time_len").get<int>();
    cfg.embed_dim = c.at("embed_dim").get<int>();
    cfg.branches.clear();
    for (const auto& b : c.at("branches"))
      cfg.branches.push_back({b.at("out_channels").get<int>(), b.at("kernel").get<int>(),
                              b.at("dilation").get<int>(), b.at("stride").get<int>()});
    cfg.spatial_channels = c.at("spatial_channels").get<int>();
    cfg.residual_kernel = c.at("residual_kernel").get<int>();
    cfg.classifier_hidden = c.at("classifier_hidden").get<std::vector<int>>();
    cfg.n_classes = c.at("n_classes").get<int>();
    EegEncoder enc(cfg, ck.header.value("seed", uint64_t{0}));
    checkpoint_to_params(ck, enc.params_);
    LabelSet labels = LabelSet::from(ck.header.at("labels").get<std::vector<std::string>>());
    return {std::move(enc), std::move(labels)};
  }

 private:
  EncoderConfig cfg_;
  uint64_t init_seed_;
  ParamSet params_;
};

// Alignment-target lookup: per-stimulus embeddings take precedence, then
// per-label planted targets.
struct Stage1Targets {
  std::map<std::string, std::vector<double>> by_stimulus;
  std::map<std::string, std::vector<double>> by_label;

  const std::vector<double>& lookup(const EegSegment& seg) const {
    if (auto it = by_stimulus.find(seg.stimulus_id); it != by_stimulus.end()) return it->second;
    if (auto it = by_label.find(seg.object_label); it != by_label.end()) return it->second;
    raise(ErrorCode::MissingTarget, "no alignment target for " + seg.stimulus_id);
  }
};

struct Stage1EpochMetrics {
  int epoch = 0;
  Stage1LossBreakdown train_loss;
  double val_accuracy = 0.0;
  double val_mse = 0.0;
};

struct Stage1Result {
  std::vector<Stage1EpochMetrics> curve;
  double initial_val_mse = 0.0;
  int epochs_run = 0;
};

// Stage-1 training: joint MSE-to-target + CE objective, AdamW, deterministic
// for a fixed seed. Only the encoder/classifier parameters move.
inline Stage1Result train_stage1(EegEncoder& enc, const std::vector<EegSegment>& segments,
                                 const DatasetSplit& split, const LabelSet& labels,
                                 const Stage1Targets& targets, const Stage1Config& cfg) {
  for (size_t i : split.train) {
    targets.lookup(segments[i]);  // MissingTarget surfaces before any training
    labels.index_of(segments[i].object_label);
  }

  Stage1Result result;
  AdamW opt(enc.params(), {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng shuffle_rng = Rng(cfg.seed).fork("stage1-shuffle");

  const auto eval_validation = [&]() {
    double mse = 0.0;
    size_t correct = 0, n = 0;
    for (size_t i : split.validation) {
      const auto& seg = segments[i];
      auto h = enc.encode(seg);
      const auto& t = targets.lookup(seg);
      double m = 0.0;
      for (size_t d = 0; d < h.values.size(); ++d) {
        const double diff = h.values[d] - t[d];
        m += diff * diff;
      }
      mse += m / static_cast<double>(h.values.size());
      const auto [probs, arg] = enc.classify(h);
      correct += (arg == labels.index_of(seg.object_label)) ? 1 : 0;
      ++n;
    }
    return std::pair<double, double>{n ? mse / static_cast<double>(n) : 0.0,
                                     n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0};
  };

  result.initial_val_mse = eval_validation().first;

  std::vector<size_t> order(split.train.begin(), split.train.end());
  const int D = enc.config().embed_dim;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    Stage1LossBreakdown epoch_loss;
    size_t batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<const EegSegment*> segs;
      std::vector<int> ys;
      auto target = Tensor::make({static_cast<int>(end - start), D});
      size_t ti = 0;
      for (size_t b = start; b < end; ++b) {
        const auto& seg = segments[order[b]];
        segs.push_back(&seg);
        ys.push_back(labels.index_of(seg.object_label));
        const auto& t = targets.lookup(seg);
        for (int d = 0; d < D; ++d) target->v[ti++] = t[static_cast<size_t>(d)];
      }
      enc.params().zero_grad();
      auto [emb, logits] = enc.forward(enc.batch_tensor(segs));
      auto mse = ops::mse_mean(emb, target);
      auto ce = ops::softmax_ce_mean(logits, ys);
      auto loss = ops::add(ops::scale(mse, 1.0 - cfg.alpha), ops::scale(ce, cfg.alpha));
      // decomposition identity, checked every batch
      if (std::fabs(loss->v[0] - ((1.0 - cfg.alpha) * mse->v[0] + cfg.alpha * ce->v[0])) > 1e-9)
        raise(ErrorCode::Internal, "stage-1 loss decomposition identity violated");
      if (!std::isfinite(loss->v[0]))
        raise(ErrorCode::Internal, "stage-1 loss diverged (non-finite)");
      autodiff::backward(loss);
      opt.step();
      epoch_loss.total += loss->v[0];
      epoch_loss.mse_term += mse->v[0];
      epoch_loss.ce_term += ce->v[0];
      ++batches;
    }
    if (batches) {
      epoch_loss.total /= static_cast<double>(batches);
      epoch_loss.mse_term /= static_cast<double>(batches);
      epoch_loss.ce_term /= static_cast<double>(batches);
    }
    auto [val_mse, val_acc] = eval_validation();
    result.curve.push_back({epoch, epoch_loss, val_acc, val_mse});
    result.epochs_run = epoch + 1;
    if (cfg.early_stop_accuracy > 0.0 && val_acc >= cfg.early_stop_accuracy &&
        (cfg.early_stop_mse_factor <= 0.0 ||
         (val_mse > 0.0 && result.initial_val_mse / val_mse >= cfg.early_stop_mse_factor)))
      break;
  }
  return result;
}

}  // namespace eegcap
