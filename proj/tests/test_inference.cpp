#include <doctest.h>

#include <fstream>

#include "eegcap/eval.hpp"
#include "eegcap/inference.hpp"
#include "eegcap/vision.hpp"
#include "helpers.hpp"

using namespace eegcap;

namespace {

struct Fixture {
  LabelSet labels = LabelSet::from({"car", "piano"});
  EegEncoder encoder;
  TinyLm lm;
  Projector projector;
  std::vector<EegSegment> segments;

  Fixture()
      : encoder(make_encoder_config(), 31),
        lm(make_lm_config(), Tokenizer::build({"a red car", "a grand piano",
                                               "describe this in one sentence:",
                                               "you are a helpful assistant.", "car", "piano"}),
           32),
        projector(6, 24, 33) {
    Rng rng(34);
    for (int i = 0; i < 6; ++i) {
      EegSegment s;
      s.samples = MatF(4, 32);
      for (auto& v : s.samples.data) v = static_cast<float>(rng.normal());
      s.subject_id = 1 + i % 2;
      s.stimulus_id = "stim" + std::to_string(i);
      s.object_label = i % 2 ? "piano" : "car";
      s.caption = i % 2 ? "a grand piano" : "a red car";
      segments.push_back(std::move(s));
    }
  }

  static EncoderConfig make_encoder_config() {
    EncoderConfig ec;
    ec.channels = 4;
    ec.time_len = 32;
    ec.embed_dim = 6;
    ec.branches = {{4, 3, 1, 2}};
    ec.spatial_channels = 4;
    ec.classifier_hidden = {4};
    ec.n_classes = 2;
    return ec;
  }

  static LmConfig make_lm_config() {
    LmConfig lc;
    lc.width = 24;
    lc.heads = 2;
    lc.blocks = 1;
    lc.max_seq = 64;
    return lc;
  }
};

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("generate_description fills every record field and respects the variant") {
  Fixture f;
  DecodeParams dp;
  dp.max_new_tokens = 6;
  auto rec = generate_description(f.segments[0], f.encoder, f.labels, &f.projector, f.lm,
                                  PromptTemplate{}, Variant::All, dp);
  CHECK(rec.variant == "ALL");
  CHECK(rec.subject_id == 1);
  CHECK(rec.stimulus_id == "stim0");
  CHECK(rec.reference_object == "car");
  CHECK(!rec.predicted_object.empty());
  CHECK(rec.reference_caption == "a red car");
  CHECK(rec.greedy);
}

TEST_CASE("ONLY_OBJ runs without a projector; ALL without one is a config mismatch") {
  Fixture f;
  DecodeParams dp;
  dp.max_new_tokens = 4;
  auto rec = generate_description(f.segments[0], f.encoder, f.labels, nullptr, f.lm,
                                  PromptTemplate{}, Variant::OnlyObj, dp);
  CHECK(rec.variant == "ONLY_OBJ");
  try {
    generate_description(f.segments[0], f.encoder, f.labels, nullptr, f.lm, PromptTemplate{},
                         Variant::All, dp);
    FAIL("expected VariantConfigMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VariantConfigMismatch);
  }
}

TEST_CASE("OBJ_RAND_EMB also runs without a projector (random injection)") {
  Fixture f;
  DecodeParams dp;
  dp.max_new_tokens = 4;
  auto a = generate_description(f.segments[0], f.encoder, f.labels, nullptr, f.lm,
                                PromptTemplate{}, Variant::ObjRandEmb, dp, /*rand_emb_seed=*/1);
  auto b = generate_description(f.segments[0], f.encoder, f.labels, nullptr, f.lm,
                                PromptTemplate{}, Variant::ObjRandEmb, dp, /*rand_emb_seed=*/1);
  CHECK(a.generated_text == b.generated_text);  // seeded per record
}

TEST_CASE("max_new_tokens=0 emits a record with empty text") {
  Fixture f;
  DecodeParams dp;
  dp.max_new_tokens = 0;
  auto rec = generate_description(f.segments[1], f.encoder, f.labels, &f.projector, f.lm,
                                  PromptTemplate{}, Variant::All, dp);
  CHECK(rec.generated_text.empty());
  CHECK(rec.stimulus_id == "stim1");
}

TEST_CASE("no vision embedder call happens during generation") {
  Fixture f;
  DecodeParams dp;
  dp.max_new_tokens = 6;
  const uint64_t before = vision_call_count().load();
  for (const auto& seg : f.segments)
    generate_description(seg, f.encoder, f.labels, &f.projector, f.lm, PromptTemplate{},
                         Variant::All, dp);
  CHECK(vision_call_count().load() == before);
}

TEST_CASE("batch_generate: empty split gives an empty journal") {
  Fixture f;
  testutil::TempDir tmp("journal_empty");
  auto recs = batch_generate(f.segments, {}, f.encoder, f.labels, &f.projector, f.lm,
                             PromptTemplate{}, Variant::All, {}, tmp.path / "j.jsonl");
  CHECK(recs.empty());
}

TEST_CASE("batch_generate: journal record count matches the split on a clean run") {
  Fixture f;
  testutil::TempDir tmp("journal_clean");
  std::vector<size_t> idx = {0, 1, 2, 3, 4, 5};
  DecodeParams dp;
  dp.max_new_tokens = 5;
  auto recs = batch_generate(f.segments, idx, f.encoder, f.labels, &f.projector, f.lm,
                             PromptTemplate{}, Variant::All, dp, tmp.path / "j.jsonl");
  CHECK(recs.size() == 6);
  CHECK(read_journal(tmp.path / "j.jsonl").size() == 6);
  // order preserved
  for (size_t i = 0; i < 6; ++i) CHECK(recs[i].stimulus_id == "stim" + std::to_string(i));
}

TEST_CASE("batch_generate: resuming an interrupted journal reproduces the clean bytes") {
  Fixture f;
  testutil::TempDir tmp("journal_resume");
  std::vector<size_t> idx = {0, 1, 2, 3, 4};
  DecodeParams dp;
  dp.max_new_tokens = 5;
  batch_generate(f.segments, idx, f.encoder, f.labels, &f.projector, f.lm, PromptTemplate{},
                 Variant::All, dp, tmp.path / "full.jsonl");
  const std::string clean = read_text_file(tmp.path / "full.jsonl");

  // keep only the first two lines, as if the run died mid-batch
  std::istringstream in(clean);
  std::string line, partial;
  for (int i = 0; i < 2 && std::getline(in, line); ++i) partial += line + "\n";
  write_text_file(tmp.path / "resume.jsonl", partial);
  auto resumed = batch_generate(f.segments, idx, f.encoder, f.labels, &f.projector, f.lm,
                                PromptTemplate{}, Variant::All, dp, tmp.path / "resume.jsonl");
  CHECK(resumed.size() == 5);
  CHECK(read_text_file(tmp.path / "resume.jsonl") == clean);
}

TEST_CASE("batch_generate: per-record failures land in the journal without aborting") {
  testutil::TempDir tmp("journal_err");
  int calls = 0;
  auto recs = batch_generate_journaled(3, tmp.path / "j.jsonl", [&](size_t i) {
    ++calls;
    if (i == 1) raise(ErrorCode::ShapeMismatch, "boom");
    GenerationRecord r;
    r.variant = "ALL";
    r.stimulus_id = "s" + std::to_string(i);
    return r;
  });
  CHECK(calls == 3);
  REQUIRE(recs.size() == 3);
  CHECK(recs[1].error.find("boom") != std::string::npos);
  CHECK(recs[2].error.empty());
  CHECK(read_journal(tmp.path / "j.jsonl").size() == 3);
}

TEST_CASE("greedy decoding plus fixed checkpoints give byte-identical journals") {
  Fixture f;
  testutil::TempDir tmp("journal_det");
  std::vector<size_t> idx = {0, 1, 2};
  DecodeParams dp;
  dp.max_new_tokens = 8;
  batch_generate(f.segments, idx, f.encoder, f.labels, &f.projector, f.lm, PromptTemplate{},
                 Variant::All, dp, tmp.path / "a.jsonl");
  batch_generate(f.segments, idx, f.encoder, f.labels, &f.projector, f.lm, PromptTemplate{},
                 Variant::All, dp, tmp.path / "b.jsonl");
  CHECK(read_text_file(tmp.path / "a.jsonl") == read_text_file(tmp.path / "b.jsonl"));
}

}  // TEST_SUITE
