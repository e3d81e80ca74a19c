#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegcap/encoder.hpp"
#include "eegcap/errors.hpp"
#include "eegcap/lm.hpp"
#include "eegcap/projector.hpp"
#include "eegcap/util.hpp"

namespace eegcap {

struct GenerationRecord {
  std::string variant;
  int subject_id = 0;
  std::string stimulus_id;
  std::string reference_object;
  std::string predicted_object;
  std::string reference_caption;
  std::string generated_text;
  int max_new_tokens = 32;
  bool greedy = true;
  std::string error;  // non-empty when generation failed for this record

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["variant"] = variant;
    j["subject_id"] = subject_id;
    j["stimulus_id"] = stimulus_id;
    j["reference_object"] = reference_object;
    j["predicted_object"] = predicted_object;
    j["reference_caption"] = reference_caption;
    j["generated_text"] = generated_text;
    j["max_new_tokens"] = max_new_tokens;
    j["greedy"] = greedy;
    if (!error.empty()) j["error"] = error;
    return j;
  }

  static GenerationRecord from_json(const nlohmann::json& j) {
    GenerationRecord r;
    r.variant = j.at("variant").get<std::string>();
    r.subject_id = j.at("subject_id").get<int>();
    r.stimulus_id = j.at("stimulus_id").get<std::string>();
    r.reference_object = j.at("reference_object").get<std::string>();
    r.predicted_object = j.at("predicted_object").get<std::string>();
    r.reference_caption = j.at("reference_caption").get<std::string>();
    r.generated_text = j.at("generated_text").get<std::string>();
    r.max_new_tokens = j.value("max_new_tokens", 32);
    r.greedy = j.value("greedy", true);
    r.error = j.value("error", std::string{});
    return r;
  }
};

// Strictly bimodal generation: EEG in, text out. The vision embedder is never
// touched here; vision_call_count() instruments that claim.
inline GenerationRecord generate_description(const EegSegment& segment, const EegEncoder& encoder,
                                             const LabelSet& labels, const Projector* projector,
                                             const TinyLm& lm, const PromptTemplate& tmpl,
                                             Variant variant, const DecodeParams& dp,
                                             uint64_t rand_emb_seed = 0,
                                             bool prepend_h_mm = false) {
  const bool needs_projector = variant_has_image_slot(variant) && variant != Variant::ObjRandEmb;
  if (needs_projector && projector == nullptr)
    raise(ErrorCode::VariantConfigMismatch,
          std::string(variant_name(variant)) + " requires a projector checkpoint");
  if (projector && projector->out_dim() != lm.width())
    raise(ErrorCode::DimMismatch, "projector output width does not match the LM");

  GenerationRecord rec;
  rec.variant = variant_name(variant);
  rec.subject_id = segment.subject_id;
  rec.stimulus_id = segment.stimulus_id;
  rec.reference_object = segment.object_label;
  rec.reference_caption = segment.caption;
  rec.max_new_tokens = dp.max_new_tokens;
  rec.greedy = dp.greedy;

  const EmbeddingVec h_eeg = encoder.encode(segment);
  const auto [probs, arg] = encoder.classify(h_eeg);
  rec.predicted_object = labels.labels[static_cast<size_t>(arg)];

  std::optional<std::string> object_string;
  if (variant_has_object_slot(variant)) object_string = rec.predicted_object;

  auto prompt = apply_chat_template(lm.tokenizer(), tmpl, object_string, variant);
  auto seq = lm.embed_tokens(prompt.token_ids);

  TensorPtr h_mm;
  if (prompt.image_slot_span) {
    if (variant == Variant::ObjRandEmb) {
      // fresh standard-normal vector of LM width, seeded per record
      Rng rng(rand_emb_seed ^ fnv1a64(segment.stimulus_id.data(), segment.stimulus_id.size()));
      h_mm = Tensor::make({1, lm.width()});
      h_mm->v = rng.normal_vec(static_cast<size_t>(lm.width()));
    } else {
      h_mm = Tensor::make({1, lm.width()});
      h_mm->v = projector->project(h_eeg.values);
    }
  }
  if (prepend_h_mm && h_mm) {
    seq = lm.splice(seq, std::nullopt, nullptr, prompt.object_slot_span, object_string);
    seq = lm.splice_prepend(seq, h_mm);
  } else {
    seq = lm.splice(seq, prompt.image_slot_span, h_mm, prompt.object_slot_span, object_string);
  }

  rec.generated_text = lm.generate_from_embeddings(seq.rows, dp);
  return rec;
}

// --- journal ----------------------------------------------------------------
//
// One JSON record per line, in input order. Reruns resume after the last
// complete line, so an interrupted batch converges to the same journal a clean
// run produces.

inline std::vector<GenerationRecord> read_journal(const std::filesystem::path& path) {
  std::vector<GenerationRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) break;  // incomplete trailing write
    out.push_back(GenerationRecord::from_json(j));
  }
  return out;
}

template <typename MakeRecord>
inline std::vector<GenerationRecord> batch_generate_journaled(
    size_t n_inputs, const std::filesystem::path& journal_path, MakeRecord&& make_record) {
  std::vector<GenerationRecord> done = read_journal(journal_path);
  if (done.size() > n_inputs) done.resize(n_inputs);
  if (journal_path.has_parent_path()) std::filesystem::create_directories(journal_path.parent_path());

  // invalid UTF-8 from raw byte tokens is replaced, not fatal
  auto dump_line = [](const GenerationRecord& r) {
    return r.to_json().dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  };
  // rewrite the valid prefix, then append
  std::ofstream out(journal_path, std::ios::trunc);
  for (const auto& r : done) out << dump_line(r) << "\n";
  out.flush();
  for (size_t i = done.size(); i < n_inputs; ++i) {
    GenerationRecord rec;
    try {
      rec = make_record(i);
    } catch (const Error& e) {
      rec = GenerationRecord{};
      rec.error = e.what();
    }
    out << dump_line(rec) << "\n";
    out.flush();
    done.push_back(std::move(rec));
  }
  if (!out) raise(ErrorCode::Internal, "failed writing journal " + journal_path.string());
  return done;
}

// Order-preserving batch generation over a split, resumable via the journal.
inline std::vector<GenerationRecord> batch_generate(
    const std::vector<EegSegment>& segments, const std::vector<size_t>& indices,
    const EegEncoder& encoder, const LabelSet& labels, const Projector* projector, const TinyLm& lm,
    const PromptTemplate& tmpl, Variant variant, const DecodeParams& dp,
    const std::filesystem::path& journal_path, uint64_t rand_emb_seed = 0,
    bool prepend_h_mm = false) {
  return batch_generate_journaled(indices.size(), journal_path, [&](size_t i) {
    return generate_description(segments[indices[i]], encoder, labels, projector, lm, tmpl, variant,
                                dp, rand_emb_seed, prepend_h_mm);
  });
}

}  // namespace eegcap
