#include <doctest.h>

#include <cmath>

#include "eegcap/encoder.hpp"
#include "helpers.hpp"

using namespace eegcap;

namespace {

EncoderConfig mini_config(int channels = 4, int time_len = 32, int embed_dim = 8,
                          int n_classes = 3) {
  EncoderConfig cfg;
  cfg.channels = channels;
  cfg.time_len = time_len;
  cfg.embed_dim = embed_dim;
  cfg.branches = {{4, 3, 1, 2}, {4, 3, 2, 2}};
  cfg.spatial_channels = 6;
  cfg.residual_kernel = 3;
  cfg.classifier_hidden = {5};
  cfg.n_classes = n_classes;
  return cfg;
}

EegSegment random_segment(Rng& rng, int channels, int time_len, const std::string& label = "a") {
  EegSegment s;
  s.samples = MatF(static_cast<size_t>(channels), static_cast<size_t>(time_len));
  for (auto& v : s.samples.data) v = static_cast<float>(rng.normal());
  s.object_label = label;
  s.stimulus_id = "x";
  s.caption = "c";
  return s;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("stage1_loss hand-arithmetic oracle") {
  // h_eeg=[1,0], h_clip=[0,0], logits=[0,0], y=0, alpha=0.5:
  // mse = (1+0)/2 = 0.5, ce = ln 2, total = 0.5*0.5 + 0.5*ln2
  auto b = stage1_loss({1.0, 0.0}, {0.0, 0.0}, 0, {0.0, 0.0}, 0.5);
  CHECK(b.mse_term == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(b.ce_term == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(b.total == doctest::Approx(0.25 + 0.5 * std::log(2.0)).epsilon(1e-12));
  CHECK(b.total == doctest::Approx(0.5966).epsilon(1e-4));
}

TEST_CASE("stage1_loss endpoints: alpha 0 is pure MSE, alpha 1 is pure CE") {
  auto b0 = stage1_loss({1.0, 2.0}, {0.0, 1.0}, 1, {0.3, -0.2}, 0.0);
  CHECK(b0.total == b0.mse_term);
  auto b1 = stage1_loss({1.0, 2.0}, {0.0, 1.0}, 1, {0.3, -0.2}, 1.0);
  CHECK(b1.total == b1.ce_term);
}

TEST_CASE("stage1_loss is ~zero for perfect alignment and saturated logits") {
  auto b = stage1_loss({0.5, -0.25}, {0.5, -0.25}, 0, {1000.0, 0.0}, 0.5);
  CHECK(b.total == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("loss decomposition identity holds over 1000 random tuples") {
  Rng rng(123);
  for (int i = 0; i < 1000; ++i) {
    const int d = 1 + static_cast<int>(rng.below(16));
    const int k = 2 + static_cast<int>(rng.below(8));
    auto h = rng.normal_vec(static_cast<size_t>(d));
    auto c = rng.normal_vec(static_cast<size_t>(d));
    auto logits = rng.normal_vec(static_cast<size_t>(k), 0.0, 3.0);
    const int y = static_cast<int>(rng.below(static_cast<uint64_t>(k)));
    double alpha = rng.uniform();
    if (i % 3 == 0) alpha = 0.0;
    if (i % 3 == 1) alpha = 1.0;
    auto b = stage1_loss(h, c, y, logits, alpha);
    CHECK(std::fabs(b.total - ((1.0 - alpha) * b.mse_term + alpha * b.ce_term)) < 1e-9);
    CHECK(b.mse_term >= 0.0);
    CHECK(b.ce_term >= 0.0);
  }
}

TEST_CASE("fresh encoder produces a finite embedding of the configured width") {
  EncoderConfig cfg = mini_config(4, 64, 512, 5);
  EegEncoder enc(cfg, 1);
  Rng rng(2);
  auto seg = random_segment(rng, 4, 64);
  auto h = enc.encode(seg);
  REQUIRE(h.dim() == 512);
  for (double v : h.values) CHECK(std::isfinite(v));
  CHECK(h.source == EmbeddingSource::Eeg);
}

TEST_CASE("encode is deterministic for identical segments") {
  EegEncoder enc(mini_config(), 7);
  Rng rng(3);
  auto seg = random_segment(rng, 4, 32);
  CHECK(enc.encode(seg).values == enc.encode(seg).values);
}

TEST_CASE("encode rejects mismatched shapes") {
  EegEncoder enc(mini_config(), 7);
  Rng rng(4);
  auto seg = random_segment(rng, 5, 32);
  CHECK_THROWS_AS(enc.encode(seg), Error);
}

TEST_CASE("classify: equal logits give a uniform distribution with argmax 0") {
  EncoderConfig cfg = mini_config();
  EegEncoder enc(cfg, 7);
  // zero the classifier output layer so every logit is equal
  enc.params().find("cls.out.w")->v.assign(enc.params().find("cls.out.w")->numel(), 0.0);
  enc.params().find("cls.out.b")->v.assign(enc.params().find("cls.out.b")->numel(), 0.0);
  Rng rng(5);
  auto h = enc.encode(random_segment(rng, 4, 32));
  auto [probs, arg] = enc.classify(h);
  CHECK(arg == 0);  // ties break to the lowest index
  double sum = 0.0;
  for (double p : probs) {
    CHECK(p == doctest::Approx(1.0 / cfg.n_classes).epsilon(1e-9));
    sum += p;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("softmax saturates at an overwhelming logit") {
  auto [probs, arg] = softmax_argmax({0.0, 1000.0, 0.0});
  CHECK(arg == 1);
  CHECK(probs[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("classifier distribution always sums to one") {
  EegEncoder enc(mini_config(), 11);
  Rng rng(6);
  for (int i = 0; i < 5; ++i) {
    auto h = enc.encode(random_segment(rng, 4, 32));
    auto [probs, arg] = enc.classify(h);
    double sum = 0.0;
    for (double p : probs) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(arg >= 0);
    CHECK(arg < 3);
  }
}

TEST_CASE("miniature encoder: analytic stage-1 gradients match finite differences") {
  EncoderConfig cfg = mini_config(4, 32, 8, 3);
  EegEncoder enc(cfg, 13);
  Rng rng(14);
  auto x = Tensor::make({2, 4, 32});
  for (auto& v : x->v) v = rng.normal();
  auto target = Tensor::make({2, 8});
  for (auto& v : target->v) v = rng.normal();
  std::vector<int> ys = {1, 2};
  const double alpha = 0.5;
  auto build = [&] {
    auto [emb, logits] = enc.forward(x);
    auto mse = ops::mse_mean(emb, target);
    auto ce = ops::softmax_ce_mean(logits, ys);
    return ops::add(ops::scale(mse, 1.0 - alpha), ops::scale(ce, alpha));
  };
  CHECK(testutil::grad_check_max_rel(enc.params(), build) <= 1e-4);
}

TEST_CASE("train_stage1 with zero epochs returns the initialized checkpoint") {
  EncoderConfig cfg = mini_config();
  auto labels = LabelSet::from({"a", "b", "c"});
  Rng rng(20);
  std::vector<EegSegment> segs;
  for (int i = 0; i < 9; ++i)
    segs.push_back(random_segment(rng, 4, 32, labels.labels[static_cast<size_t>(i % 3)]));
  auto split = make_splits(segs, 1);
  Stage1Targets targets;
  for (int i = 0; i < 3; ++i)
    targets.by_label[labels.labels[static_cast<size_t>(i)]] =
        detail::planted_embedding(i, 8, 5);
  Stage1Config sc;
  sc.epochs = 0;
  sc.seed = 5;

  EegEncoder enc(cfg, 77);
  EegEncoder fresh(cfg, 77);
  train_stage1(enc, segs, split, labels, targets, sc);
  for (size_t p = 0; p < enc.params().items.size(); ++p)
    CHECK(enc.params().items[p].second->v == fresh.params().items[p].second->v);
}

TEST_CASE("train_stage1 raises MissingTarget when a label has no alignment target") {
  EncoderConfig cfg = mini_config();
  auto labels = LabelSet::from({"a", "b", "c"});
  Rng rng(21);
  std::vector<EegSegment> segs;
  for (int i = 0; i < 6; ++i)
    segs.push_back(random_segment(rng, 4, 32, labels.labels[static_cast<size_t>(i % 3)]));
  auto split = make_splits(segs, 1);
  Stage1Targets targets;
  targets.by_label["a"] = detail::planted_embedding(0, 8, 5);  // b, c missing
  Stage1Config sc;
  sc.epochs = 1;
  EegEncoder enc(cfg, 1);
  try {
    train_stage1(enc, segs, split, labels, targets, sc);
    FAIL("expected MissingTarget");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingTarget);
  }
}

TEST_CASE("encoder checkpoints round-trip through the container format") {
  testutil::TempDir tmp("enc_ckpt");
  EncoderConfig cfg = mini_config();
  EegEncoder enc(cfg, 42);
  auto labels = LabelSet::from({"a", "b", "c"});
  enc.to_checkpoint(labels, 42).save(tmp.path / "enc.ckpt");
  auto [back, back_labels] = EegEncoder::from_checkpoint(Checkpoint::load(tmp.path / "enc.ckpt"));
  CHECK(back_labels == labels);
  CHECK(back.config().embed_dim == cfg.embed_dim);
  // values pass through f32, so compare at f32 precision
  for (size_t p = 0; p < enc.params().items.size(); ++p) {
    const auto& a = enc.params().items[p].second->v;
    const auto& b = back.params().items[p].second->v;
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i)
      CHECK(static_cast<float>(a[i]) == static_cast<float>(b[i]));
  }
  // same bytes -> same checksum
  CHECK(live_param_checksum(enc.params()) == live_param_checksum(back.params()));
}

}  // TEST_SUITE
