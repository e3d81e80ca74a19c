#include <doctest.h>

#include <cmath>
#include <set>

#include "eegcap/dataset.hpp"
#include "helpers.hpp"

using namespace eegcap;

namespace {

RawRecording make_raw(int channels, int n_samples, int subject = 1,
                      const std::string& label = "piano") {
  RawRecording r;
  r.samples = MatF(static_cast<size_t>(channels), static_cast<size_t>(n_samples));
  r.subject_id = subject;
  r.stimulus_id = "stim";
  r.object_label = label;
  r.caption = "a photo of a " + label;
  return r;
}

// segments with just the identity fields filled; make_splits ignores samples
std::vector<EegSegment> label_segments(const std::vector<std::pair<std::string, int>>& specs) {
  std::vector<EegSegment> out;
  int i = 0;
  for (const auto& [label, subject] : specs) {
    EegSegment s;
    s.object_label = label;
    s.subject_id = subject;
    s.stimulus_id = "s" + std::to_string(i++);
    s.caption = "c";
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("preprocess trims 500 to 440 and z-scores every channel") {
  Rng rng(1);
  auto raw = make_raw(128, 500);
  for (auto& v : raw.samples.data) v = static_cast<float>(rng.normal(3.0, 2.0));
  auto seg = preprocess(raw);
  CHECK(seg.samples.rows == 128);
  CHECK(seg.samples.cols == 440);
  for (size_t c = 0; c < 128; ++c) {
    double mean = 0.0, var = 0.0;
    for (size_t t = 0; t < 440; ++t) mean += seg.samples.at(c, t);
    mean /= 440.0;
    for (size_t t = 0; t < 440; ++t) {
      const double d = seg.samples.at(c, t) - mean;
      var += d * d;
    }
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(std::fabs(std::sqrt(var / 440.0) - 1.0) < 1e-5);
  }
}

TEST_CASE("preprocess leaves a constant channel all-zero with stddev recorded as 0") {
  auto raw = make_raw(2, 500);
  for (size_t t = 0; t < 500; ++t) {
    raw.samples.at(0, t) = 4.5f;
    raw.samples.at(1, t) = static_cast<float>(t % 7);
  }
  auto seg = preprocess(raw);
  for (size_t t = 0; t < 440; ++t) CHECK(seg.samples.at(0, t) == 0.0f);
  CHECK(seg.normalization_stats[0].stddev == 0.0f);
  CHECK(seg.normalization_stats[0].mean == doctest::Approx(4.5f));
  CHECK(seg.normalization_stats[1].stddev > 0.0f);
}

TEST_CASE("preprocess 470-sample input: discard 20 then centered crop keeps indices 5..444") {
  // ramp oracle: sample value == sample index, so retained indices are legible
  auto raw = make_raw(1, 470);
  for (size_t t = 0; t < 470; ++t) raw.samples.at(0, t) = static_cast<float>(t);
  auto seg = preprocess(raw);
  // independent index arithmetic: discard 20 -> window of 450 starting at 20;
  // centered crop of 440 starts 5 further in, so original indices 25..464
  std::vector<double> expect(440);
  double mean = 0.0;
  for (int t = 0; t < 440; ++t) {
    expect[static_cast<size_t>(t)] = 25.0 + t;
    mean += expect[static_cast<size_t>(t)];
  }
  mean /= 440.0;
  double var = 0.0;
  for (double v : expect) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / 440.0);
  for (int t = 0; t < 440; ++t)
    CHECK(seg.samples.at(0, static_cast<size_t>(t)) ==
          doctest::Approx((expect[static_cast<size_t>(t)] - mean) / sd).epsilon(1e-5));
}

TEST_CASE("preprocess pads short post-discard windows symmetrically") {
  auto raw = make_raw(1, 470);
  for (size_t t = 0; t < 470; ++t) raw.samples.at(0, t) = static_cast<float>(t);
  PreprocessConfig cfg;
  cfg.target_length = 460;  // kept = 450 -> pad 5 left, 5 right
  auto seg = preprocess(raw, cfg);
  CHECK(seg.samples.cols == 460);
  // padded entries were zero before normalization: (0 - mean)/sd
  const double mean = seg.normalization_stats[0].mean;
  const double sd = seg.normalization_stats[0].stddev;
  CHECK(seg.samples.at(0, 0) == doctest::Approx((0.0 - mean) / sd).epsilon(1e-5));
  CHECK(seg.samples.at(0, 4) == seg.samples.at(0, 0));
  CHECK(seg.samples.at(0, 5) != seg.samples.at(0, 0));
  CHECK(seg.samples.at(0, 459) == seg.samples.at(0, 0));
}

TEST_CASE("preprocess is idempotent on already-440 normalized input") {
  Rng rng(3);
  auto raw = make_raw(4, 500);
  for (auto& v : raw.samples.data) v = static_cast<float>(rng.normal(0.0, 1.5));
  auto once = preprocess(raw);
  RawRecording again;
  again.samples = once.samples;
  again.subject_id = once.subject_id;
  again.stimulus_id = once.stimulus_id;
  again.object_label = once.object_label;
  again.caption = once.caption;
  auto twice = preprocess(again);
  for (size_t i = 0; i < once.samples.data.size(); ++i)
    CHECK(std::fabs(static_cast<double>(twice.samples.data[i]) - once.samples.data[i]) < 1e-6);
}

TEST_CASE("preprocess rejects bad channel counts and too-short records") {
  PreprocessConfig cfg;
  cfg.expected_channels = 128;
  CHECK_THROWS_AS(preprocess(make_raw(64, 500), cfg), Error);
  // post-discard 180 < 220 = half the target
  CHECK_THROWS_AS(preprocess(make_raw(1, 200)), Error);
  try {
    preprocess(make_raw(1, 200));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooShort);
  }
}

TEST_CASE("make_splits reproduces the 7959/1994/1987 sizes at n=11940") {
  std::vector<std::pair<std::string, int>> specs;
  for (int i = 0; i < 11940; ++i) specs.emplace_back("label" + std::to_string(i % 40), 1 + i % 6);
  auto segs = label_segments(specs);
  auto split = make_splits(segs, 7);
  CHECK(split.train.size() == 7959);
  CHECK(split.validation.size() == 1994);
  CHECK(split.test.size() == 1987);
}

TEST_CASE("make_splits minimum case: 3 segments split 1/1/1") {
  auto segs = label_segments({{"a", 1}, {"a", 1}, {"a", 1}});
  auto split = make_splits(segs, 0);
  CHECK(split.train.size() == 1);
  CHECK(split.validation.size() == 1);
  CHECK(split.test.size() == 1);
}

TEST_CASE("make_splits is deterministic and partitions the index set exactly") {
  std::vector<std::pair<std::string, int>> specs;
  for (int i = 0; i < 257; ++i) specs.emplace_back("l" + std::to_string(i % 5), 1 + i % 3);
  auto segs = label_segments(specs);
  auto a = make_splits(segs, 42);
  auto b = make_splits(segs, 42);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  CHECK(a.test == b.test);

  std::set<size_t> all;
  for (auto v : {&a.train, &a.validation, &a.test})
    for (size_t i : *v) CHECK(all.insert(i).second);  // pairwise disjoint
  CHECK(all.size() == segs.size());                   // exhaustive
}

TEST_CASE("make_splits keeps every label in train when counts permit") {
  std::vector<std::pair<std::string, int>> specs;
  for (int i = 0; i < 60; ++i) specs.emplace_back("common", 1);
  specs.emplace_back("rare", 1);
  specs.emplace_back("rare2", 1);
  auto segs = label_segments(specs);
  auto split = make_splits(segs, 9);
  std::set<std::string> train_labels;
  for (size_t i : split.train) train_labels.insert(segs[i].object_label);
  CHECK(train_labels.count("rare"));
  CHECK(train_labels.count("rare2"));
}

TEST_CASE("make_splits per-subject mode applies the ratios within each subject") {
  std::vector<std::pair<std::string, int>> specs;
  for (int s = 1; s <= 3; ++s)
    for (int i = 0; i < 30; ++i) specs.emplace_back("l" + std::to_string(i % 3), s);
  auto segs = label_segments(specs);
  auto split = make_splits(segs, 5, SplitMode::PerSubject);
  for (int s = 1; s <= 3; ++s) {
    size_t tr = 0, va = 0, te = 0;
    for (size_t i : split.train) tr += segs[i].subject_id == s;
    for (size_t i : split.validation) va += segs[i].subject_id == s;
    for (size_t i : split.test) te += segs[i].subject_id == s;
    CHECK(tr == 20);  // 30 * 0.6665 -> 20
    CHECK(va == 5);
    CHECK(te == 5);
  }
}

TEST_CASE("make_splits rejects fewer than 3 segments") {
  auto segs = label_segments({{"a", 1}, {"a", 1}});
  CHECK_THROWS_AS(make_splits(segs, 1), Error);
}

TEST_CASE("generate_synthetic count arithmetic and determinism") {
  auto ds = generate_synthetic(40, 50, 6, /*channels=*/2, /*seed=*/7, /*embed_dim=*/16);
  CHECK(ds.recordings.size() == 12000);
  CHECK(ds.targets.size() == 40);
  CHECK(ds.labels.size() == 40);

  auto tiny = generate_synthetic(1, 1, 1, 4, 0, 8);
  CHECK(tiny.recordings.size() == 1);
  CHECK(tiny.targets.size() == 1);

  auto a = generate_synthetic(3, 4, 2, 4, 11, 8);
  auto b = generate_synthetic(3, 4, 2, 4, 11, 8);
  REQUIRE(a.recordings.size() == b.recordings.size());
  for (size_t i = 0; i < a.recordings.size(); ++i)
    CHECK(a.recordings[i].samples == b.recordings[i].samples);  // bit-identical
}

TEST_CASE("generate_synthetic class templates are pairwise distinguishable") {
  // reconstruct each class template as the mean over many recordings; noise
  // averages out, so correlations between class means estimate template
  // correlations
  const int n_classes = 6, per_class = 40, channels = 8;
  auto ds = generate_synthetic(n_classes, per_class, 1, channels, 13, 8);
  const size_t dim = ds.recordings.front().samples.data.size();
  std::vector<std::vector<double>> means(n_classes, std::vector<double>(dim, 0.0));
  std::vector<std::vector<double>> half1 = means, half2 = means;
  std::map<int, int> seen;
  for (const auto& r : ds.recordings) {
    const int c = ds.labels.index_of(r.object_label);
    const int k = seen[c]++;
    for (size_t i = 0; i < dim; ++i) {
      means[static_cast<size_t>(c)][i] += r.samples.data[i];
      (k % 2 ? half2 : half1)[static_cast<size_t>(c)][i] += r.samples.data[i];
    }
  }
  auto corr = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
      num += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    return num / std::sqrt(na * nb);
  };
  double within = 0.0;
  for (int c = 0; c < n_classes; ++c)
    within += corr(half1[static_cast<size_t>(c)], half2[static_cast<size_t>(c)]);
  within /= n_classes;
  double cross = 0.0;
  int pairs = 0;
  for (int c1 = 0; c1 < n_classes; ++c1)
    for (int c2 = c1 + 1; c2 < n_classes; ++c2) {
      cross += std::fabs(corr(means[static_cast<size_t>(c1)], means[static_cast<size_t>(c2)]));
      ++pairs;
    }
  cross /= pairs;
  CHECK(cross < 0.3 * within);
}

TEST_CASE("generate_synthetic planted signal dominates: amplitude >= 2x noise") {
  auto ds = generate_synthetic(2, 60, 1, 4, 21, 8);
  // per-class mean approximates the template; residuals approximate noise
  const size_t dim = ds.recordings.front().samples.data.size();
  std::vector<double> mean(dim, 0.0);
  size_t n0 = 0;
  for (const auto& r : ds.recordings)
    if (r.object_label == ds.labels.labels[0]) {
      ++n0;
      for (size_t i = 0; i < dim; ++i) mean[i] += r.samples.data[i];
    }
  for (auto& v : mean) v /= static_cast<double>(n0);
  double tpl_ss = 0.0, noise_ss = 0.0;
  size_t count = 0;
  for (const auto& r : ds.recordings)
    if (r.object_label == ds.labels.labels[0]) {
      for (size_t i = 0; i < dim; ++i) {
        const double resid = r.samples.data[i] - mean[i];
        noise_ss += resid * resid;
        ++count;
      }
    }
  for (double v : mean) tpl_ss += v * v;
  const double tpl_rms = std::sqrt(tpl_ss / dim);
  const double noise_rms = std::sqrt(noise_ss / count);
  CHECK(tpl_rms >= 2.0 * noise_rms);
}

TEST_CASE("manifest round trip: raw records are field-for-field identical") {
  testutil::TempDir tmp("manifest_raw");
  Dataset ds;
  ds.is_segments = false;
  ds.labels = LabelSet::from({"piano", "car"});
  Rng rng(5);
  for (int i = 0; i < 3; ++i) {
    auto r = make_raw(4, 470, 1 + i % 2, i % 2 ? "car" : "piano");
    r.stimulus_id = "s" + std::to_string(i);
    for (auto& v : r.samples.data) v = static_cast<float>(rng.normal());
    ds.raw.push_back(std::move(r));
  }
  write_manifest(ds, tmp.path / "set.manifest");
  auto back = read_manifest(tmp.path / "set.manifest");
  REQUIRE(back.raw.size() == 3);
  CHECK(back.labels == ds.labels);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back.raw[i].subject_id == ds.raw[i].subject_id);
    CHECK(back.raw[i].stimulus_id == ds.raw[i].stimulus_id);
    CHECK(back.raw[i].object_label == ds.raw[i].object_label);
    CHECK(back.raw[i].caption == ds.raw[i].caption);
    CHECK(back.raw[i].samples == ds.raw[i].samples);
  }
}

TEST_CASE("manifest round trip: segments keep their normalization stats") {
  testutil::TempDir tmp("manifest_seg");
  Dataset ds;
  ds.is_segments = true;
  ds.labels = LabelSet::from({"piano"});
  Rng rng(6);
  for (int i = 0; i < 2; ++i) {
    auto raw = make_raw(3, 500);
    raw.stimulus_id = "s" + std::to_string(i);
    for (auto& v : raw.samples.data) v = static_cast<float>(rng.normal(1.0, 2.0));
    ds.segments.push_back(preprocess(raw));
  }
  write_manifest(ds, tmp.path / "seg.manifest");
  auto back = read_manifest(tmp.path / "seg.manifest");
  REQUIRE(back.segments.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back.segments[i].samples == ds.segments[i].samples);
    REQUIRE(back.segments[i].normalization_stats.size() == 3);
    for (size_t c = 0; c < 3; ++c) {
      CHECK(back.segments[i].normalization_stats[c].mean == ds.segments[i].normalization_stats[c].mean);
      CHECK(back.segments[i].normalization_stats[c].stddev ==
            ds.segments[i].normalization_stats[c].stddev);
    }
  }
}

TEST_CASE("manifest round trip preserves per-channel checksums on a synthetic set") {
  testutil::TempDir tmp("manifest_big");
  auto synth = generate_synthetic(40, 10, 3, 2, 7, 8);
  Dataset ds;
  ds.is_segments = false;
  ds.labels = synth.labels;
  ds.raw = synth.recordings;
  write_manifest(ds, tmp.path / "synth.manifest");
  auto back = read_manifest(tmp.path / "synth.manifest");
  REQUIRE(back.raw.size() == 1200);
  for (size_t i = 0; i < back.raw.size(); ++i) {
    const auto& a = ds.raw[i].samples;
    const auto& b = back.raw[i].samples;
    REQUIRE(a.rows == b.rows);
    for (size_t c = 0; c < a.rows; ++c) {
      const uint64_t ca = fnv1a64(&a.data[c * a.cols], a.cols * sizeof(float));
      const uint64_t cb = fnv1a64(&b.data[c * b.cols], b.cols * sizeof(float));
      CHECK(ca == cb);
    }
  }
}

TEST_CASE("manifest errors: missing blob, checksum mismatch, malformed text") {
  testutil::TempDir tmp("manifest_err");
  Dataset ds;
  ds.is_segments = false;
  ds.labels = LabelSet::from({"piano"});
  ds.raw.push_back(make_raw(2, 470));
  write_manifest(ds, tmp.path / "ok.manifest");

  SUBCASE("missing blob") {
    std::filesystem::remove(tmp.path / "ok.bin");
    try {
      read_manifest(tmp.path / "ok.manifest");
      FAIL("expected MissingBlob");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingBlob);
    }
  }
  SUBCASE("checksum mismatch") {
    auto blob = read_text_file(tmp.path / "ok.bin");
    blob[10] = static_cast<char>(blob[10] ^ 0x7f);
    write_text_file(tmp.path / "ok.bin", blob);
    try {
      read_manifest(tmp.path / "ok.manifest");
      FAIL("expected ChecksumMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ChecksumMismatch);
    }
  }
  SUBCASE("malformed manifest") {
    write_text_file(tmp.path / "bad.manifest", "#eegcap-dataset\tv1\n#blob\tok.bin\nnot\tenough\tfields\n");
    try {
      read_manifest(tmp.path / "bad.manifest");
      FAIL("expected MalformedManifest");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedManifest);
    }
  }
}

}  // TEST_SUITE
