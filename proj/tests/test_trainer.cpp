#include <doctest.h>

#include <cmath>

#include "eegcap/trainer.hpp"
#include "helpers.hpp"

using namespace eegcap;

namespace {

TinyLm fixture_lm(uint64_t seed = 3) {
  LmConfig cfg;
  cfg.width = 24;
  cfg.heads = 2;
  cfg.blocks = 1;
  cfg.max_seq = 64;
  auto tok = Tokenizer::build({"a red car", "a grand piano", "describe this in one sentence:",
                               "you are a helpful assistant.", "piano", "car"});
  return TinyLm(cfg, std::move(tok), seed);
}

std::vector<CaptionedEmbedding> fixture_records(int n, int dim, uint64_t seed) {
  Rng rng(seed);
  std::vector<CaptionedEmbedding> out;
  for (int i = 0; i < n; ++i) {
    CaptionedEmbedding r;
    r.stimulus_id = "s" + std::to_string(i);
    r.object_label = i % 2 ? "piano" : "car";
    r.caption = i % 2 ? "a grand piano" : "a red car";
    r.embedding = rng.normal_vec(static_cast<size_t>(dim));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("build_training_example: mask arithmetic for 'a red car'") {
  auto lm = fixture_lm();
  Projector proj(6, lm.width(), 1);
  StageConfig cfg;
  Rng rng(2);
  auto ex = build_training_example(lm, PromptTemplate{}, "car", "a red car",
                                   rng.normal_vec(6), proj, cfg);
  const size_t caption_tokens = lm.tokenizer().encode_text("a red car").size();
  size_t unmasked = 0;
  for (bool b : ex.loss_mask) unmasked += b;
  CHECK(unmasked == caption_tokens + 1);  // caption plus <eos>

  StageConfig unmasked_cfg;
  unmasked_cfg.prompt_masked = false;
  auto ex2 = build_training_example(lm, PromptTemplate{}, "car", "a red car",
                                    rng.normal_vec(6), proj, unmasked_cfg);
  size_t n2 = 0;
  for (bool b : ex2.loss_mask) n2 += b;
  CHECK(n2 == static_cast<size_t>(ex2.sequence.length()) - 1);
}

TEST_CASE("build_training_example: targets are the inputs shifted left by one") {
  auto lm = fixture_lm();
  Projector proj(6, lm.width(), 1);
  StageConfig cfg;
  cfg.prompt_masked = false;
  Rng rng(3);
  const std::string caption = "a grand piano";
  auto ex = build_training_example(lm, PromptTemplate{}, "piano", caption, rng.normal_vec(6),
                                   proj, cfg);
  // shift oracle: reassemble the id sequence independently
  auto prompt = apply_chat_template(lm.tokenizer(), PromptTemplate{}, std::string("piano"),
                                    Variant::All);
  std::vector<int> ids = prompt.token_ids;
  for (int id : lm.tokenizer().encode_text(caption)) ids.push_back(id);
  ids.push_back(Tokenizer::kEos);
  REQUIRE(static_cast<size_t>(ex.sequence.length()) == ids.size());
  for (size_t t = 0; t + 1 < ids.size(); ++t) CHECK(ex.target_ids[t] == ids[t + 1]);
  CHECK(ex.target_ids.back() == TrainingExample::kIgnore);
}

TEST_CASE("prepend mode adds the H_mm row up front with the same scored-token count") {
  auto lm = fixture_lm();
  Projector proj(6, lm.width(), 1);
  Rng rng(4);
  auto h = rng.normal_vec(6);
  StageConfig replace_cfg;
  auto a = build_training_example(lm, PromptTemplate{}, "car", "a red car", h, proj, replace_cfg);
  StageConfig prepend_cfg;
  prepend_cfg.prepend_h_mm = true;
  auto b = build_training_example(lm, PromptTemplate{}, "car", "a red car", h, proj, prepend_cfg);
  CHECK(b.sequence.length() == a.sequence.length() + 1);
  CHECK(b.sequence.provenance[0] == RowProvenance::ProjectedMm);
  size_t na = 0, nb = 0;
  for (bool m : a.loss_mask) na += m;
  for (bool m : b.loss_mask) nb += m;
  CHECK(na == nb);
  // in prepend mode the <image> token keeps its table embedding
  auto prompt = apply_chat_template(lm.tokenizer(), PromptTemplate{}, std::string("car"),
                                    Variant::All);
  const int img_row = prompt.image_slot_span->first + 1;  // shifted by the prepended row
  const auto table = lm.params().find("lm.tok_emb");
  for (int c = 0; c < lm.width(); ++c)
    CHECK(b.sequence.rows->v[static_cast<size_t>(img_row) * lm.width() + static_cast<size_t>(c)] ==
          table->v[static_cast<size_t>(Tokenizer::kImage) * lm.width() + static_cast<size_t>(c)]);
}

TEST_CASE("build_training_example rejects empty captions") {
  auto lm = fixture_lm();
  Projector proj(6, lm.width(), 1);
  try {
    build_training_example(lm, PromptTemplate{}, "car", "", {1, 2, 3, 4, 5, 6}, proj, {});
    FAIL("expected EmptyCaption");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCaption);
  }
}

TEST_CASE("stage 2 with zero epochs leaves the projector at initialization") {
  auto lm = fixture_lm();
  Projector proj(6, lm.width(), 42);
  Projector fresh(6, lm.width(), 42);
  StageConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 1;
  train_stage2(lm, proj, PromptTemplate{}, fixture_records(8, 6, 4), cfg);
  CHECK(proj.params().find("proj.w")->v == fresh.params().find("proj.w")->v);
  CHECK(proj.params().find("proj.b")->v == fresh.params().find("proj.b")->v);
}

TEST_CASE("freezing contract: the LM checksum is bit-identical across stage 2") {
  auto lm = fixture_lm();
  Projector proj(6, lm.width(), 7);
  StageConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.seed = 9;
  const uint64_t before = lm.param_checksum();
  auto result = train_stage2(lm, proj, PromptTemplate{}, fixture_records(10, 6, 5), cfg);
  CHECK(lm.param_checksum() == before);
  CHECK(result.lm_checksum_before == before);
  CHECK(result.lm_checksum_after == before);
  // and the projector did move
  Projector fresh(6, lm.width(), 7);
  CHECK(proj.params().find("proj.w")->v != fresh.params().find("proj.w")->v);
}

TEST_CASE("stage 2 training reduces the held-out masked cross entropy") {
  auto lm = fixture_lm(11);
  // a brief pretrain so the loss landscape is not pure noise
  const std::vector<std::pair<std::string, std::string>> corpus = {
      {"piano", "a grand piano"}, {"car", "a red car"}};
  pretrain_lm(lm, PromptTemplate{}, corpus, {8, 4, 3e-3, 11});
  Projector proj(6, lm.width(), 3);
  StageConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 4;
  cfg.learning_rate = 5e-3;
  cfg.holdout_fraction = 0.25;
  cfg.seed = 2;
  // targets correlate with the labels so there is signal to learn
  auto records = fixture_records(16, 6, 6);
  for (auto& r : records)
    for (auto& v : r.embedding) v = r.object_label == "piano" ? std::fabs(v) : -std::fabs(v);
  auto result = train_stage2(lm, proj, PromptTemplate{}, records, cfg);
  CHECK(result.curve.back().holdout_loss < result.initial_holdout_loss);
}

TEST_CASE("stage 3 freezes the encoder and reports per-epoch metrics lines") {
  auto lm = fixture_lm();
  EncoderConfig ec;
  ec.channels = 4;
  ec.time_len = 32;
  ec.embed_dim = 6;
  ec.branches = {{4, 3, 1, 2}};
  ec.spatial_channels = 4;
  ec.classifier_hidden = {4};
  ec.n_classes = 2;
  EegEncoder enc(ec, 21);
  Rng rng(22);
  std::vector<EegSegment> segs;
  for (int i = 0; i < 8; ++i) {
    EegSegment s;
    s.samples = MatF(4, 32);
    for (auto& v : s.samples.data) v = static_cast<float>(rng.normal());
    s.object_label = i % 2 ? "piano" : "car";
    s.caption = i % 2 ? "a grand piano" : "a red car";
    s.stimulus_id = "s" + std::to_string(i);
    segs.push_back(std::move(s));
  }
  std::vector<size_t> train_idx = {0, 1, 2, 3, 4, 5, 6, 7};
  Projector proj(6, lm.width(), 5);
  StageConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.seed = 13;
  const uint64_t enc_before = live_param_checksum(enc.params());
  const uint64_t lm_before = lm.param_checksum();
  auto result = train_stage3(lm, proj, PromptTemplate{}, enc, segs, train_idx, cfg);
  CHECK(live_param_checksum(enc.params()) == enc_before);
  CHECK(lm.param_checksum() == lm_before);
  // metrics log carries stage/epoch/split/loss lines
  CHECK(result.metrics_log.find("3\t0\ttrain\t") != std::string::npos);
  CHECK(result.metrics_log.find("3\t0\tholdout\t") != std::string::npos);
}

TEST_CASE("reproducibility: identical config and seed give identical projectors") {
  auto records = fixture_records(12, 6, 8);
  StageConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.seed = 77;
  auto lm1 = fixture_lm(9);
  Projector p1(6, lm1.width(), 1);
  train_stage2(lm1, p1, PromptTemplate{}, records, cfg);
  auto lm2 = fixture_lm(9);
  Projector p2(6, lm2.width(), 1);
  train_stage2(lm2, p2, PromptTemplate{}, records, cfg);
  CHECK(p1.params().find("proj.w")->v == p2.params().find("proj.w")->v);
  CHECK(p1.params().find("proj.b")->v == p2.params().find("proj.b")->v);
}

TEST_CASE("gradients for (W_mm, b_mm) through the frozen LM match finite differences") {
  auto lm = fixture_lm(15);
  Projector proj(4, lm.width(), 2);
  Rng rng(16);
  auto h = rng.normal_vec(4);
  StageConfig cfg;
  auto build = [&] {
    auto ex = build_training_example(lm, PromptTemplate{}, "piano", "a grand piano", h, proj, cfg);
    auto logits = lm.forward_with_embeddings(ex.sequence.rows);
    return ops::softmax_ce_mean(logits, ex.target_ids, TrainingExample::kIgnore);
  };
  CHECK(testutil::grad_check_max_rel(proj.params(), build) <= 1e-4);
}

TEST_CASE("dimension mismatches are rejected up front") {
  auto lm = fixture_lm();
  Projector wrong_out(6, lm.width() + 1, 1);
  try {
    build_training_example(lm, PromptTemplate{}, "car", "a red car", {1, 2, 3, 4, 5, 6},
                           wrong_out, {});
    FAIL("expected DimMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimMismatch);
  }
  Projector proj(6, lm.width(), 1);
  auto records = fixture_records(4, 5, 3);  // dim 5 != projector in_dim 6
  StageConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train_stage2(lm, proj, PromptTemplate{}, records, cfg), Error);
}

}  // TEST_SUITE
