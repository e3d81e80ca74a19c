#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eegcap/encoder.hpp"
#include "eegcap/errors.hpp"
#include "eegcap/lm.hpp"
#include "eegcap/projector.hpp"

namespace eegcap {

struct StageConfig {
  int stage = 2;  // 2 or 3
  int batch_size = 16;
  int epochs = 5;
  double learning_rate = 2e-5;
  double weight_decay = 0.0;
  uint64_t seed = 0;
  bool skip_stage2 = false;     // NO_STAGE2 lineage: stage 3 starts from a fresh projector
  bool prompt_masked = true;    // exclude prompt positions from the loss
  bool prepend_h_mm = false;    // prepend H_mm instead of replacing the image slot
  int grad_accum_steps = 1;
  double holdout_fraction = 0.15;  // tail of the training list held out for the loss curve
};

// One teacher-forced example: spliced prompt + caption embeddings, left-shifted
// targets, prompt positions masked to kIgnore when prompt_masked.
struct TrainingExample {
  TokenEmbeddingSequence sequence;
  std::vector<int> target_ids;  // length == sequence length
  std::vector<bool> loss_mask;  // true where the target is scored

  static constexpr int kIgnore = -1;
};

// Data record for stages 2/3: an external embedding (H_clip for stage 2,
// H_eeg for stage 3) with its label and reference caption.
struct CaptionedEmbedding {
  std::string stimulus_id;
  std::string object_label;
  std::string caption;
  std::vector<double> embedding;
};

// Assemble prompt + caption + <eos>, splice the projected embedding into the
// image slot and the label tokens into the object slot, and produce
// next-token targets: target[t] = token[t+1], prompt positions masked.
inline TrainingExample build_training_example(const TinyLm& lm, const PromptTemplate& tmpl,
                                              const std::string& object_label,
                                              const std::string& caption,
                                              const std::vector<double>& external_embedding,
                                              const Projector& projector, const StageConfig& cfg) {
  if (caption.empty()) raise(ErrorCode::EmptyCaption, "caption must be non-empty");
  if (projector.out_dim() != lm.width())
    raise(ErrorCode::DimMismatch, "projector output width does not match the LM");

  auto prompt = apply_chat_template(lm.tokenizer(), tmpl, object_label, Variant::All);
  std::vector<int> full_ids = prompt.token_ids;
  for (int id : lm.tokenizer().encode_text(caption)) full_ids.push_back(id);
  full_ids.push_back(Tokenizer::kEos);
  const int prompt_len = static_cast<int>(prompt.token_ids.size());
  const int T = static_cast<int>(full_ids.size());

  auto seq = lm.embed_tokens(full_ids);
  auto h_mm = prompt.image_slot_span ? projector.project_node(external_embedding) : nullptr;
  if (cfg.prepend_h_mm && h_mm) {
    seq = lm.splice(seq, std::nullopt, nullptr, prompt.object_slot_span, object_label);
    seq = lm.splice_prepend(seq, h_mm);
  } else {
    seq = lm.splice(seq, prompt.image_slot_span, h_mm, prompt.object_slot_span, object_label);
  }
  // with a prepended row, position k predicts full_ids[k]; without it,
  // position t predicts full_ids[t+1]
  const int offset = (cfg.prepend_h_mm && h_mm) ? 0 : 1;
  const int S = seq.length();

  TrainingExample ex;
  ex.sequence = std::move(seq);
  ex.target_ids.resize(static_cast<size_t>(S));
  ex.loss_mask.resize(static_cast<size_t>(S));
  for (int t = 0; t < S; ++t) {
    const int predicted = t + offset;  // index into full_ids
    const bool scored = predicted < T && (!cfg.prompt_masked || predicted >= prompt_len);
    ex.loss_mask[static_cast<size_t>(t)] = scored;
    ex.target_ids[static_cast<size_t>(t)] =
        scored ? full_ids[static_cast<size_t>(predicted)] : TrainingExample::kIgnore;
  }
  return ex;
}

struct StageEpochMetrics {
  int stage = 0;
  int epoch = 0;
  double train_loss = 0.0;
  double holdout_loss = 0.0;
};

struct StageResult {
  std::vector<StageEpochMetrics> curve;
  double initial_holdout_loss = 0.0;
  uint64_t lm_checksum_before = 0;
  uint64_t lm_checksum_after = 0;
  // metrics log lines: "stage<TAB>epoch<TAB>split<TAB>loss"
  std::string metrics_log;
};

namespace detail {

inline double masked_ce(const TinyLm& lm, const TrainingExample& ex) {
  auto logits = lm.forward_with_embeddings(ex.sequence.rows);
  size_t n = 0;
  for (bool b : ex.loss_mask) n += b ? 1 : 0;
  if (n == 0) return 0.0;
  auto loss = ops::softmax_ce_mean(logits, ex.target_ids, TrainingExample::kIgnore);
  return loss->v[0];
}

// Shared stage-2/3 projector training loop over prepared caption records.
inline StageResult run_projector_stage(TinyLm& lm, Projector& projector,
                                       const PromptTemplate& tmpl,
                                       const std::vector<CaptionedEmbedding>& records,
                                       const StageConfig& cfg) {
  for (const auto& r : records) {
    if (r.caption.empty()) raise(ErrorCode::EmptyCaption, "record " + r.stimulus_id);
    if (static_cast<int>(r.embedding.size()) != projector.in_dim())
      raise(ErrorCode::DimMismatch, "embedding dim does not match projector input");
  }

  StageResult result;
  result.lm_checksum_before = lm.param_checksum();

  const size_t n_holdout =
      std::min(records.size() / 2,
               static_cast<size_t>(std::llround(cfg.holdout_fraction * records.size())));
  const size_t n_train = records.size() - n_holdout;

  const auto holdout_loss = [&]() {
    if (n_holdout == 0) return 0.0;
    double total = 0.0;
    for (size_t i = n_train; i < records.size(); ++i) {
      auto ex = build_training_example(lm, tmpl, records[i].object_label, records[i].caption,
                                       records[i].embedding, projector, cfg);
      total += masked_ce(lm, ex);
    }
    return total / static_cast<double>(n_holdout);
  };

  result.initial_holdout_loss = holdout_loss();

  AdamW opt(projector.params(), {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng shuffle_rng = Rng(cfg.seed).fork(cfg.stage == 2 ? "stage2-shuffle" : "stage3-shuffle");
  std::vector<size_t> order(n_train);
  std::iota(order.begin(), order.end(), size_t{0});

  std::ostringstream log;
  const size_t step = static_cast<size_t>(cfg.batch_size) * static_cast<size_t>(cfg.grad_accum_steps);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double total = 0.0;
    size_t count = 0;
    for (size_t start = 0; start < order.size(); start += step) {
      const size_t end = std::min(order.size(), start + step);
      projector.params().zero_grad();
      for (size_t i = start; i < end; ++i) {
        const auto& r = records[order[i]];
        auto ex = build_training_example(lm, tmpl, r.object_label, r.caption, r.embedding,
                                         projector, cfg);
        auto logits = lm.forward_with_embeddings(ex.sequence.rows);
        auto loss = ops::softmax_ce_mean(logits, ex.target_ids, TrainingExample::kIgnore);
        if (!std::isfinite(loss->v[0]))
          raise(ErrorCode::Internal, "stage-" + std::to_string(cfg.stage) +
                                         " loss diverged (non-finite) at example " + r.stimulus_id);
        auto scaled = ops::scale(loss, 1.0 / static_cast<double>(end - start));
        autodiff::backward(scaled);
        total += loss->v[0];
        ++count;
      }
      opt.step();
    }
    StageEpochMetrics m;
    m.stage = cfg.stage;
    m.epoch = epoch;
    m.train_loss = count ? total / static_cast<double>(count) : 0.0;
    m.holdout_loss = holdout_loss();
    result.curve.push_back(m);
    log << cfg.stage << "\t" << epoch << "\ttrain\t" << fmt_double(m.train_loss) << "\n";
    log << cfg.stage << "\t" << epoch << "\tholdout\t" << fmt_double(m.holdout_loss) << "\n";
  }

  result.lm_checksum_after = lm.param_checksum();
  if (result.lm_checksum_after != result.lm_checksum_before)
    raise(ErrorCode::Internal, "LM parameters changed during a projector-only stage");
  result.metrics_log = log.str();
  return result;
}

}  // namespace detail

// Stage 2: prime the projector on image-embedding records (H_clip or the
// synthetic planted targets). Only projector parameters move.
inline StageResult train_stage2(TinyLm& lm, Projector& projector, const PromptTemplate& tmpl,
                                const std::vector<CaptionedEmbedding>& image_records,
                                StageConfig cfg) {
  cfg.stage = 2;
  return detail::run_projector_stage(lm, projector, tmpl, image_records, cfg);
}

// Stage 3: continue projector training on EEG embeddings computed with the
// frozen encoder. The encoder checksum is asserted unchanged.
inline StageResult train_stage3(TinyLm& lm, Projector& projector, const PromptTemplate& tmpl,
                                const EegEncoder& encoder, const std::vector<EegSegment>& segments,
                                const std::vector<size_t>& train_indices, StageConfig cfg) {
  cfg.stage = 3;
  const uint64_t enc_before = live_param_checksum(encoder.params());
  std::vector<CaptionedEmbedding> records;
  records.reserve(train_indices.size());
  for (size_t i : train_indices) {
    const auto& seg = segments[i];
    CaptionedEmbedding r;
    r.stimulus_id = seg.stimulus_id;
    r.object_label = seg.object_label;
    r.caption = seg.caption;
    r.embedding = encoder.encode(seg).values;
    records.push_back(std::move(r));
  }
  auto result = detail::run_projector_stage(lm, projector, tmpl, records, cfg);
  if (live_param_checksum(encoder.params()) != enc_before)
    raise(ErrorCode::Internal, "encoder parameters changed during stage 3");
  return result;
}

}  // namespace eegcap
