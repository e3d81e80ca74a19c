#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "eegcap/embedding.hpp"
#include "eegcap/errors.hpp"
#include "eegcap/rng.hpp"
#include "eegcap/util.hpp"

namespace eegcap {

// One raw multi-channel recording as it arrives from disk or the synthetic
// generator: channels x n_samples, untrimmed.
struct RawRecording {
  MatF samples;  // channels x n_samples
  int sample_rate_hz = 1000;
  int subject_id = 1;
  std::string stimulus_id;
  std::string object_label;
  std::string caption;
};

struct ChannelStats {
  float mean = 0.0f;
  float stddev = 0.0f;  // left 0 for constant channels
};

// Preprocessed segment: fixed-length, per-channel z-scored.
struct EegSegment {
  MatF samples;  // channels x target_length
  std::vector<ChannelStats> normalization_stats;
  int subject_id = 1;
  std::string stimulus_id;
  std::string object_label;
  std::string caption;
};

struct PreprocessConfig {
  int discard_count = 20;
  int target_length = 440;
  int expected_channels = 0;  // 0 = accept any channel count
};

struct LabelSet {
  std::vector<std::string> labels;
  std::map<std::string, int> index;

  static LabelSet from(std::vector<std::string> names) {
    LabelSet ls;
    ls.labels = std::move(names);
    for (size_t i = 0; i < ls.labels.size(); ++i) {
      if (ls.index.count(ls.labels[i]))
        raise(ErrorCode::MalformedManifest, "duplicate label: " + ls.labels[i]);
      ls.index[ls.labels[i]] = static_cast<int>(i);
    }
    return ls;
  }

  int index_of(const std::string& label) const {
    auto it = index.find(label);
    if (it == index.end()) raise(ErrorCode::UnknownLabel, label);
    return it->second;
  }

  size_t size() const { return labels.size(); }
  bool operator==(const LabelSet& o) const { return labels == o.labels; }
};

enum class SplitMode { Pooled, PerSubject };

struct DatasetSplit {
  std::vector<size_t> train;
  std::vector<size_t> validation;
  std::vector<size_t> test;
  uint64_t split_seed = 0;
  SplitMode split_mode = SplitMode::Pooled;
};

// Trim/normalize one raw recording. Inputs already at target_length are
// treated as pre-trimmed (no discard, no crop), so the pipeline is idempotent
// on its own output; anything longer gets discard_count samples dropped from
// the front, then a centered crop or symmetric zero pad to target_length,
// then a per-channel z-score over the final window.
inline EegSegment preprocess(const RawRecording& raw, const PreprocessConfig& cfg = {}) {
  const int C = static_cast<int>(raw.samples.rows);
  const int N = static_cast<int>(raw.samples.cols);
  if (cfg.expected_channels > 0 && C != cfg.expected_channels)
    raise(ErrorCode::ChannelCountMismatch,
          "got " + std::to_string(C) + " channels, expected " + std::to_string(cfg.expected_channels));
  const int target = cfg.target_length;
  const bool pre_trimmed = (N == target);
  const int discard = pre_trimmed ? 0 : cfg.discard_count;
  const int kept = N - discard;
  if (kept < (target + 1) / 2)
    raise(ErrorCode::TooShort, "post-discard length " + std::to_string(kept) +
                                   " < half of target " + std::to_string(target));

  EegSegment seg;
  seg.subject_id = raw.subject_id;
  seg.stimulus_id = raw.stimulus_id;
  seg.object_label = raw.object_label;
  seg.caption = raw.caption;
  seg.samples = MatF(static_cast<size_t>(C), static_cast<size_t>(target));
  seg.normalization_stats.resize(static_cast<size_t>(C));

  const int crop_start = kept > target ? (kept - target) / 2 : 0;
  const int pad_left = kept < target ? (target - kept) / 2 : 0;

  for (int c = 0; c < C; ++c) {
    // place the trimmed window
    for (int t = 0; t < std::min(kept, target); ++t) {
      const int src = discard + crop_start + t;
      seg.samples.at(static_cast<size_t>(c), static_cast<size_t>(pad_left + t)) =
          raw.samples.at(static_cast<size_t>(c), static_cast<size_t>(src));
    }
    // z-score over the full target window (pads included)
    double mean = 0.0;
    for (int t = 0; t < target; ++t) mean += seg.samples.at(c, t);
    mean /= target;
    double var = 0.0;
    for (int t = 0; t < target; ++t) {
      const double d = seg.samples.at(c, t) - mean;
      var += d * d;
    }
    var /= target;
    const double sd = std::sqrt(var);
    if (sd < 1e-12) {
      for (int t = 0; t < target; ++t) seg.samples.at(c, t) = 0.0f;
      seg.normalization_stats[c] = {static_cast<float>(mean), 0.0f};
    } else {
      for (int t = 0; t < target; ++t)
        seg.samples.at(c, t) = static_cast<float>((seg.samples.at(c, t) - mean) / sd);
      seg.normalization_stats[c] = {static_cast<float>(mean), static_cast<float>(sd)};
    }
  }
  return seg;
}

namespace detail {

// Split sizes follow the 7959/1994/1987 proportions via largest-remainder
// apportionment; every split gets at least one element when n >= 3.
inline std::array<size_t, 3> split_sizes(size_t n) {
  constexpr double kRatios[3] = {7959.0 / 11940.0, 1994.0 / 11940.0, 1987.0 / 11940.0};
  std::array<size_t, 3> base{};
  std::array<double, 3> frac{};
  size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double ideal = n * kRatios[i];
    base[i] = static_cast<size_t>(ideal);
    frac[i] = ideal - static_cast<double>(base[i]);
    assigned += base[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (frac[i] > frac[best]) best = i;
    ++base[best];
    frac[best] = -1.0;
    ++assigned;
  }
  if (n >= 3) {
    for (int i = 0; i < 3; ++i) {
      while (base[i] == 0) {
        int biggest = 0;
        for (int j = 1; j < 3; ++j)
          if (base[j] > base[biggest]) biggest = j;
        --base[biggest];
        ++base[i];
      }
    }
  }
  return base;
}

}  // namespace detail

// Deterministic shuffle-split over segment indices. After assignment, labels
// missing from train are pulled in by swapping with a train element of the
// most common train label.
inline DatasetSplit make_splits(const std::vector<EegSegment>& segments, uint64_t seed,
                                SplitMode mode = SplitMode::Pooled) {
  if (segments.size() < 3) raise(ErrorCode::EmptyInput, "need at least 3 segments to split");

  DatasetSplit out;
  out.split_seed = seed;
  out.split_mode = mode;

  std::map<int, std::vector<size_t>> groups;
  if (mode == SplitMode::PerSubject) {
    for (size_t i = 0; i < segments.size(); ++i) groups[segments[i].subject_id].push_back(i);
  } else {
    auto& all = groups[0];
    all.resize(segments.size());
    std::iota(all.begin(), all.end(), size_t{0});
  }

  Rng rng(seed);
  for (auto& [subject, idx] : groups) {
    rng.shuffle(idx);
    const auto sizes = detail::split_sizes(idx.size());
    size_t p = 0;
    for (size_t i = 0; i < sizes[0]; ++i) out.train.push_back(idx[p++]);
    for (size_t i = 0; i < sizes[1]; ++i) out.validation.push_back(idx[p++]);
    for (size_t i = 0; i < sizes[2]; ++i) out.test.push_back(idx[p++]);
  }

  // label-coverage fixup
  std::map<std::string, size_t> train_count;
  for (size_t i : out.train) ++train_count[segments[i].object_label];
  auto cover = [&](std::vector<size_t>& other) {
    for (size_t& oi : other) {
      const std::string& lbl = segments[oi].object_label;
      if (train_count.count(lbl)) continue;
      // swap with a train element of the most frequent label (>1 occurrences)
      size_t best = out.train.size();
      size_t best_count = 1;
      for (size_t ti = 0; ti < out.train.size(); ++ti) {
        const size_t c = train_count[segments[out.train[ti]].object_label];
        if (c > best_count) {
          best_count = c;
          best = ti;
        }
      }
      if (best == out.train.size()) continue;  // counts do not permit
      --train_count[segments[out.train[best]].object_label];
      std::swap(out.train[best], oi);
      ++train_count[lbl];
    }
  };
  cover(out.validation);
  cover(out.test);
  return out;
}

// Synthetic corpus: band-limited noise plus a planted class template strong
// enough (>= 2x noise sigma) for the encoder to learn from, one deterministic
// unit-norm target embedding per class, and template captions embedding the
// label. The stand-in for the real recordings/captions/CLIP triplet.
struct SyntheticDataset {
  std::vector<RawRecording> recordings;
  LabelSet labels;
  std::map<std::string, std::vector<double>> targets;  // label -> unit-norm D-vector
};

namespace detail {

inline const std::vector<std::string>& synthetic_label_pool() {
  static const std::vector<std::string> pool = {
      "piano",    "guitar",  "violin",  "drum",       "dog",     "cat",     "horse",
      "elephant", "panda",   "fish",    "airplane",   "car",     "bicycle", "train",
      "boat",     "chair",   "table",   "sofa",       "clock",   "watch",   "camera",
      "phone",    "computer","lamp",    "bottle",     "cup",     "coffee mug",
      "pumpkin",  "mushroom","flower",  "tree",       "mountain","river",   "house",
      "tent",     "umbrella","shoe",    "hat",        "backpack","banana"};
  return pool;
}

inline const std::vector<std::string>& caption_templates() {
  static const std::vector<std::string> tmpl = {
      "a photo of a % on a table",  "a close-up photo of a %", "a % in a field",
      "a person looking at a %",    "a small % on the ground", "a % next to a window"};
  return tmpl;
}

inline std::string fill_template(const std::string& tmpl, const std::string& label) {
  std::string out;
  for (char c : tmpl) {
    if (c == '%') out += label;
    else out.push_back(c);
  }
  return out;
}

}  // namespace detail

inline SyntheticDataset generate_synthetic(int n_classes, int per_class, int n_subjects,
                                           int channels, uint64_t seed, int embed_dim = 512,
                                           int n_samples = 500) {
  if (n_classes < 1 || per_class < 1 || n_subjects < 1 || channels < 1 || embed_dim < 1)
    raise(ErrorCode::EmptyInput, "generate_synthetic: all counts must be >= 1");
  if (n_samples < 460) raise(ErrorCode::TooShort, "synthetic recordings must have >= 460 samples");

  SyntheticDataset ds;
  const auto& pool = detail::synthetic_label_pool();
  std::vector<std::string> names;
  for (int c = 0; c < n_classes; ++c) {
    if (c < static_cast<int>(pool.size())) names.push_back(pool[c]);
    else names.push_back("object" + std::to_string(c));
  }
  ds.labels = LabelSet::from(names);

  // class templates: smoothed gaussian patterns, entries ~N(0, sigma_t^2)
  constexpr double kNoiseSigma = 1.0;
  constexpr double kTemplateSigma = 2.5;  // >= 2x noise
  Rng template_rng = Rng(seed).fork("templates");
  std::vector<std::vector<double>> templates(static_cast<size_t>(n_classes));
  for (int c = 0; c < n_classes; ++c) {
    auto raw = template_rng.normal_vec(static_cast<size_t>(channels) * n_samples);
    // light temporal smoothing, then rescale to the target sigma
    std::vector<double>& t = templates[c];
    t.assign(raw.size(), 0.0);
    for (int ch = 0; ch < channels; ++ch) {
      const size_t base = static_cast<size_t>(ch) * n_samples;
      for (int s = 0; s < n_samples; ++s) {
        double acc = 0.0;
        int cnt = 0;
        for (int w = -2; w <= 2; ++w) {
          const int sw = s + w;
          if (sw >= 0 && sw < n_samples) {
            acc += raw[base + sw];
            ++cnt;
          }
        }
        t[base + s] = acc / cnt;
      }
    }
    double ss = 0.0;
    for (double x : t) ss += x * x;
    const double sd = std::sqrt(ss / t.size());
    for (double& x : t) x *= kTemplateSigma / sd;
  }

  for (int c = 0; c < n_classes; ++c)
    ds.targets[ds.labels.labels[c]] = detail::planted_embedding(c, embed_dim, seed);

  const auto& tmpls = detail::caption_templates();
  Rng noise_rng = Rng(seed).fork("noise");
  int instance = 0;
  for (int subj = 1; subj <= n_subjects; ++subj) {
    for (int c = 0; c < n_classes; ++c) {
      for (int k = 0; k < per_class; ++k, ++instance) {
        RawRecording rec;
        rec.sample_rate_hz = 1000;
        rec.subject_id = subj;
        rec.stimulus_id = "synth_s" + std::to_string(subj) + "_c" + std::to_string(c) + "_i" +
                          std::to_string(k);
        rec.object_label = ds.labels.labels[c];
        std::string caption_label = rec.object_label;
        if (auto pos = caption_label.find(" or "); pos != std::string::npos)
          caption_label = caption_label.substr(0, pos);
        // template deterministic per class, so caption content is recoverable
        // from the class signal a recording carries
        rec.caption = detail::fill_template(tmpls[static_cast<size_t>(c) % tmpls.size()],
                                            caption_label);
        rec.samples = MatF(static_cast<size_t>(channels), static_cast<size_t>(n_samples));
        const auto& tpl = templates[c];
        // band-limited noise: white noise passed through the same short
        // moving average used for the templates
        for (int ch = 0; ch < channels; ++ch) {
          std::vector<double> white = noise_rng.normal_vec(static_cast<size_t>(n_samples));
          const size_t base = static_cast<size_t>(ch) * n_samples;
          for (int s = 0; s < n_samples; ++s) {
            double acc = 0.0;
            int cnt = 0;
            for (int w = -2; w <= 2; ++w) {
              const int sw = s + w;
              if (sw >= 0 && sw < n_samples) {
                acc += white[sw];
                ++cnt;
              }
            }
            rec.samples.data[base + s] =
                static_cast<float>(kNoiseSigma * (acc / cnt) * std::sqrt(5.0) + tpl[base + s]);
          }
        }
        ds.recordings.push_back(std::move(rec));
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Manifest IO.
//
// A dataset is one manifest text file plus one binary blob file. Manifest:
//
//   #eegcap-dataset	v1
//   #kind	raw|segments
//   #blob	data.bin
//   #labels	label1	label2	...
//   subject	stimulus	label	caption	blob	offset	channels	samples	stats	checksum
//
// One tab-separated record per line. Blobs hold the sample matrix as
// little-endian f32, channel-major; for kind=segments, 2*channels f32 stats
// (mean then stddev per channel) follow the samples at the same offset + the
// sample bytes. The checksum is FNV-1a 64 over all of the record's blob bytes.
// ---------------------------------------------------------------------------

struct Dataset {
  bool is_segments = false;
  std::vector<RawRecording> raw;
  std::vector<EegSegment> segments;
  LabelSet labels;
};

namespace detail {

inline void require_no_tabs(const std::string& s, const char* what) {
  if (s.find('\t') != std::string::npos || s.find('\n') != std::string::npos)
    raise(ErrorCode::MalformedManifest, std::string(what) + " may not contain tabs or newlines");
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline void write_manifest(const Dataset& ds, const std::filesystem::path& manifest_path) {
  const std::filesystem::path dir =
      manifest_path.has_parent_path() ? manifest_path.parent_path() : ".";
  std::filesystem::create_directories(dir);
  const std::string blob_name = manifest_path.stem().string() + ".bin";

  std::ofstream blob(dir / blob_name, std::ios::binary | std::ios::trunc);
  std::ostringstream man;
  man << "#eegcap-dataset\tv1\n";
  man << "#kind\t" << (ds.is_segments ? "segments" : "raw") << "\n";
  man << "#blob\t" << blob_name << "\n";
  man << "#labels";
  for (const auto& l : ds.labels.labels) {
    detail::require_no_tabs(l, "label");
    man << "\t" << l;
  }
  man << "\n";

  uint64_t offset = 0;
  auto emit = [&](int subject, const std::string& stimulus, const std::string& label,
                  const std::string& caption, const MatF& samples,
                  const std::vector<ChannelStats>* stats) {
    detail::require_no_tabs(stimulus, "stimulus_id");
    detail::require_no_tabs(caption, "caption");
    std::vector<float> payload = samples.data;
    if (stats) {
      for (const auto& st : *stats) payload.push_back(st.mean);
      for (const auto& st : *stats) payload.push_back(st.stddev);
    }
    const uint64_t checksum = fnv1a64(payload);
    blob.write(reinterpret_cast<const char*>(payload.data()),
               static_cast<std::streamsize>(payload.size() * sizeof(float)));
    man << subject << "\t" << stimulus << "\t" << label << "\t" << caption << "\t" << blob_name
        << "\t" << offset << "\t" << samples.rows << "\t" << samples.cols << "\t"
        << (stats ? 1 : 0) << "\t" << hex64(checksum) << "\n";
    offset += payload.size() * sizeof(float);
  };

  if (ds.is_segments) {
    for (const auto& s : ds.segments)
      emit(s.subject_id, s.stimulus_id, s.object_label, s.caption, s.samples,
           &s.normalization_stats);
  } else {
    for (const auto& r : ds.raw) emit(r.subject_id, r.stimulus_id, r.object_label, r.caption,
                                      r.samples, nullptr);
  }
  if (!blob) raise(ErrorCode::Internal, "failed writing blob " + (dir / blob_name).string());
  write_text_file(manifest_path, man.str());
}

inline Dataset read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) raise(ErrorCode::MalformedManifest, "cannot open manifest " + manifest_path.string());
  const std::filesystem::path dir =
      manifest_path.has_parent_path() ? manifest_path.parent_path() : ".";

  Dataset ds;
  std::string line;
  bool got_magic = false;
  std::string blob_name;
  std::ifstream blob;
  std::vector<std::string> labels;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_tabs(line);
    if (line[0] == '#') {
      if (f[0] == "#eegcap-dataset") {
        if (f.size() < 2 || f[1] != "v1")
          raise(ErrorCode::MalformedManifest, "unsupported manifest version");
        got_magic = true;
      } else if (f[0] == "#kind") {
        ds.is_segments = (f.size() > 1 && f[1] == "segments");
      } else if (f[0] == "#blob") {
        if (f.size() < 2) raise(ErrorCode::MalformedManifest, "missing blob name");
        blob_name = f[1];
        blob.open(dir / blob_name, std::ios::binary);
        if (!blob) raise(ErrorCode::MissingBlob, (dir / blob_name).string());
      } else if (f[0] == "#labels") {
        labels.assign(f.begin() + 1, f.end());
      }
      continue;
    }
    if (!got_magic) raise(ErrorCode::MalformedManifest, "missing #eegcap-dataset header");
    if (f.size() != 10)
      raise(ErrorCode::MalformedManifest,
            "line " + std::to_string(line_no) + ": expected 10 fields, got " +
                std::to_string(f.size()));
    if (f[4] != blob_name) {
      std::ifstream probe(dir / f[4], std::ios::binary);
      if (!probe) raise(ErrorCode::MissingBlob, (dir / f[4]).string());
      raise(ErrorCode::MalformedManifest, "multiple blob files are not supported");
    }
    if (!blob.is_open()) raise(ErrorCode::MissingBlob, "no blob declared before records");

    const int subject = std::stoi(f[0]);
    const uint64_t offset = std::stoull(f[5]);
    const size_t channels = std::stoull(f[6]);
    const size_t samples = std::stoull(f[7]);
    const bool has_stats = f[8] == "1";
    const uint64_t want = parse_hex64(f[9]);
    if (has_stats != ds.is_segments)
      raise(ErrorCode::MalformedManifest, "stats flag inconsistent with manifest kind");

    size_t count = channels * samples + (has_stats ? 2 * channels : 0);
    std::vector<float> payload(count);
    blob.clear();
    blob.seekg(static_cast<std::streamoff>(offset));
    blob.read(reinterpret_cast<char*>(payload.data()),
              static_cast<std::streamsize>(count * sizeof(float)));
    if (!blob)
      raise(ErrorCode::MissingBlob,
            "blob truncated at offset " + std::to_string(offset) + " in " + blob_name);
    if (fnv1a64(payload) != want)
      raise(ErrorCode::ChecksumMismatch, "record at line " + std::to_string(line_no));

    MatF m(channels, samples);
    std::copy(payload.begin(), payload.begin() + static_cast<long>(channels * samples),
              m.data.begin());
    if (ds.is_segments) {
      EegSegment s;
      s.subject_id = subject;
      s.stimulus_id = f[1];
      s.object_label = f[2];
      s.caption = f[3];
      s.samples = std::move(m);
      s.normalization_stats.resize(channels);
      for (size_t c = 0; c < channels; ++c) {
        s.normalization_stats[c].mean = payload[channels * samples + c];
        s.normalization_stats[c].stddev = payload[channels * samples + channels + c];
      }
      ds.segments.push_back(std::move(s));
    } else {
      RawRecording r;
      r.subject_id = subject;
      r.stimulus_id = f[1];
      r.object_label = f[2];
      r.caption = f[3];
      r.samples = std::move(m);
      ds.raw.push_back(std::move(r));
    }
  }
  ds.labels = LabelSet::from(labels);
  return ds;
}

}  // namespace eegcap
