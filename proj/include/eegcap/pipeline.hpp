#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegcap/config.hpp"
#include "eegcap/dataset.hpp"
#include "eegcap/encoder.hpp"
#include "eegcap/eval.hpp"
#include "eegcap/inference.hpp"
#include "eegcap/lm.hpp"
#include "eegcap/projector.hpp"
#include "eegcap/sketch.hpp"
#include "eegcap/trainer.hpp"
#include "eegcap/vision.hpp"

namespace eegcap {

// On-disk layout for one experiment. Primary artifacts (checkpoints,
// journals, reports) are byte-deterministic for a fixed config+seed; run
// manifests carry timestamps and are excluded from that guarantee.
struct Paths {
  std::filesystem::path root;

  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path segments_manifest() const { return data_dir() / "segments.manifest"; }
  std::filesystem::path splits_file() const { return data_dir() / "splits.json"; }
  std::filesystem::path targets_file() const { return data_dir() / "targets.json"; }
  std::filesystem::path encoder_ckpt() const { return root / "stage1" / "encoder.ckpt"; }
  std::filesystem::path stage1_metrics() const { return root / "stage1" / "metrics.tsv"; }
  std::filesystem::path lm_ckpt() const { return root / "lm" / "lm.ckpt"; }
  std::filesystem::path stage2_ckpt() const { return root / "stage2" / "projector.ckpt"; }
  std::filesystem::path stage2_metrics() const { return root / "stage2" / "metrics.tsv"; }
  std::filesystem::path stage3_dir(Variant v) const {
    return root / "stage3" / (v == Variant::NoStage2 ? "NO_STAGE2" : "ALL");
  }
  std::filesystem::path stage3_ckpt(Variant v) const { return stage3_dir(v) / "projector.ckpt"; }
  std::filesystem::path stage3_metrics(Variant v) const { return stage3_dir(v) / "metrics.tsv"; }
  std::filesystem::path journal(Variant v) const {
    return root / "infer" / (std::string("journal_") + variant_name(v) + ".jsonl");
  }
  std::filesystem::path journal_meta(Variant v) const {
    return root / "infer" / (std::string("journal_") + variant_name(v) + ".meta.json");
  }
  std::filesystem::path eval_report(Variant v) const {
    return root / "eval" / (std::string("report_") + variant_name(v) + ".json");
  }
  std::filesystem::path report_dir() const { return root / "report"; }
};

inline Paths make_paths(const RunConfig& cfg, int subject = 0) {
  Paths p;
  p.root = std::filesystem::path(cfg.output_dir) / cfg.experiment;
  if (subject > 0) p.root /= "subject" + std::to_string(subject);
  return p;
}

inline void write_run_manifest(const std::filesystem::path& dir, const std::string& command,
                               const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_hash"] = hex64(cfg.config_hash());
  j["seed"] = cfg.seed;
  const auto now = std::chrono::system_clock::now();
  j["finished_at_unix"] =
      std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  write_text_file(dir / "run_manifest.json", j.dump(2) + "\n");
}

// --- prepare-data -----------------------------------------------------------

struct PreparedData {
  Dataset data;  // segments
  DatasetSplit split;
  std::map<std::string, std::vector<double>> targets_by_label;
  int embed_dim = 0;
};

inline void cmd_prepare_data(const RunConfig& cfg, int subject = 0) {
  const Paths paths = make_paths(cfg, subject);
  Dataset segments;
  segments.is_segments = true;
  std::map<std::string, std::vector<double>> targets;

  PreprocessConfig pp;
  pp.discard_count = cfg.dataset.discard_count;
  pp.target_length = cfg.dataset.target_length;

  if (cfg.dataset.mode == "synthetic") {
    auto synth = generate_synthetic(cfg.dataset.n_classes, cfg.dataset.per_class,
                                    cfg.dataset.n_subjects, cfg.dataset.channels, cfg.seed,
                                    cfg.dataset.embed_dim, cfg.dataset.n_samples);
    segments.labels = synth.labels;
    targets = synth.targets;
    pp.expected_channels = cfg.dataset.channels;
    for (const auto& rec : synth.recordings) {
      if (subject > 0 && rec.subject_id != subject) continue;
      segments.segments.push_back(preprocess(rec, pp));
    }
  } else if (cfg.dataset.mode == "manifest") {
    if (cfg.dataset.manifest_path.empty())
      raise(ErrorCode::BadConfig, "dataset.manifest_path required for mode=manifest");
    Dataset raw = read_manifest(cfg.dataset.manifest_path);
    segments.labels = raw.labels;
    for (const auto& rec : raw.raw) {
      if (subject > 0 && rec.subject_id != subject) continue;
      segments.segments.push_back(preprocess(rec, pp));
    }
    for (size_t i = 0; i < raw.labels.labels.size(); ++i)
      targets[raw.labels.labels[i]] =
          detail::planted_embedding(static_cast<int>(i), cfg.dataset.embed_dim, cfg.seed);
  } else {
    raise(ErrorCode::BadConfig, "dataset.mode must be synthetic or manifest");
  }
  if (segments.segments.empty()) raise(ErrorCode::EmptyInput, "no segments after preparation");

  auto split = make_splits(segments.segments, cfg.seed,
                           cfg.dataset.split_mode == "per_subject" ? SplitMode::PerSubject
                                                                   : SplitMode::Pooled);

  write_manifest(segments, paths.segments_manifest());
  nlohmann::ordered_json sj;
  sj["seed"] = split.split_seed;
  sj["mode"] = cfg.dataset.split_mode;
  sj["train"] = split.train;
  sj["validation"] = split.validation;
  sj["test"] = split.test;
  write_text_file(paths.splits_file(), sj.dump() + "\n");

  nlohmann::ordered_json tj;
  tj["embed_dim"] = cfg.dataset.embed_dim;
  nlohmann::ordered_json by_label = nlohmann::ordered_json::object();
  for (const auto& [label, vec] : targets) by_label[label] = vec;
  tj["by_label"] = by_label;
  write_text_file(paths.targets_file(), tj.dump() + "\n");
  write_run_manifest(paths.data_dir(), "prepare-data", cfg);
}

inline PreparedData load_prepared(const RunConfig& cfg, int subject = 0) {
  const Paths paths = make_paths(cfg, subject);
  if (!std::filesystem::exists(paths.segments_manifest()))
    raise(ErrorCode::MissingCheckpoint,
          "missing prepared dataset " + paths.segments_manifest().string() +
              " (run prepare-data first)");
  PreparedData out;
  out.data = read_manifest(paths.segments_manifest());
  auto sj = nlohmann::json::parse(read_text_file(paths.splits_file()));
  out.split.split_seed = sj.at("seed").get<uint64_t>();
  out.split.split_mode = sj.at("mode").get<std::string>() == "per_subject" ? SplitMode::PerSubject
                                                                           : SplitMode::Pooled;
  out.split.train = sj.at("train").get<std::vector<size_t>>();
  out.split.validation = sj.at("validation").get<std::vector<size_t>>();
  out.split.test = sj.at("test").get<std::vector<size_t>>();
  auto tj = nlohmann::json::parse(read_text_file(paths.targets_file()));
  out.embed_dim = tj.at("embed_dim").get<int>();
  for (const auto& [label, vec] : tj.at("by_label").items())
    out.targets_by_label[label] = vec.get<std::vector<double>>();
  return out;
}

// --- sketchify ---------------------------------------------------------------

inline std::vector<std::string> cmd_sketchify(const RunConfig& cfg) {
  if (cfg.sketch.images_dir.empty())
    raise(ErrorCode::BadConfig, "sketch.images_dir required for sketchify");
  const Paths paths = make_paths(cfg);
  SketchParams sp{cfg.sketch.gaussian_sigma, cfg.sketch.kernel_radius, cfg.sketch.canny_low,
                  cfg.sketch.canny_high};
  std::vector<std::string> produced;
  std::vector<std::filesystem::path> inputs;
  for (const auto& e : std::filesystem::directory_iterator(cfg.sketch.images_dir))
    if (e.path().extension() == ".ppm") inputs.push_back(e.path());
  std::sort(inputs.begin(), inputs.end());
  const auto out_dir = paths.root / "sketches";
  for (const auto& in : inputs) {
    auto sketch = sketchify(read_ppm(in), sp);
    const auto out = out_dir / (in.stem().string() + ".pgm");
    write_pgm(out, sketch);
    produced.push_back(out.filename().string());
  }
  write_sketch_sidecar(out_dir / "sketch_params.json", sp, produced);
  write_run_manifest(out_dir, "sketchify", cfg);
  return produced;
}

// --- stage 1 ------------------------------------------------------------------

inline Stage1Targets build_stage1_targets(const RunConfig& cfg, const PreparedData& data) {
  Stage1Targets t;
  if (cfg.stage1.target_source == "planted") {
    t.by_label = data.targets_by_label;
    return t;
  }
  std::set<std::string> wanted;
  for (const auto& s : data.data.segments) wanted.insert(s.stimulus_id);
  if (cfg.stage1.target_source == "table") {
    // precomputed per-stimulus embeddings, e.g. from a real pretrained model
    auto backend = make_vision_backend(cfg.stage1.vision_backend, data.embed_dim, cfg.seed);
    auto* table = dynamic_cast<TableVisionBackend*>(backend.get());
    if (!table)
      raise(ErrorCode::BadConfig, "target_source=table needs stage1.vision_backend=table:<file>");
    for (const auto& stim : wanted) t.by_stimulus[stim] = table->lookup(stim).values;
    return t;
  }
  if (cfg.stage1.target_source == "stub_sketch" || cfg.stage1.target_source == "stub_original") {
    if (cfg.sketch.images_dir.empty())
      raise(ErrorCode::BadConfig, "sketch.images_dir required for image-derived targets");
    auto backend = make_vision_backend(cfg.stage1.vision_backend, data.embed_dim, cfg.seed);
    SketchParams sp{cfg.sketch.gaussian_sigma, cfg.sketch.kernel_radius, cfg.sketch.canny_low,
                    cfg.sketch.canny_high};
    for (const auto& stim : wanted) {
      const auto path = std::filesystem::path(cfg.sketch.images_dir) / (stim + ".ppm");
      if (!std::filesystem::exists(path)) raise(ErrorCode::MissingTarget, path.string());
      auto rgb = read_ppm(path);
      auto img = cfg.stage1.target_source == "stub_sketch" ? sketchify(rgb, sp) : to_grayscale(rgb);
      t.by_stimulus[stim] = backend->embed_image(img).values;
    }
    return t;
  }
  raise(ErrorCode::BadConfig,
        "stage1.target_source must be planted|stub_sketch|stub_original|table");
}

inline EncoderConfig encoder_config_from(const RunConfig& cfg, const PreparedData& data) {
  EncoderConfig ec;
  ec.channels = static_cast<int>(data.data.segments.front().samples.rows);
  ec.time_len = static_cast<int>(data.data.segments.front().samples.cols);
  ec.embed_dim = data.embed_dim;
  ec.branches = cfg.encoder.branches;
  ec.spatial_channels = cfg.encoder.spatial_channels;
  ec.residual_kernel = cfg.encoder.residual_kernel;
  ec.classifier_hidden = cfg.encoder.classifier_hidden;
  ec.n_classes = static_cast<int>(data.data.labels.size());
  return ec;
}

inline Stage1Result cmd_train_stage1(const RunConfig& cfg, int subject = 0) {
  const Paths paths = make_paths(cfg, subject);
  PreparedData data = load_prepared(cfg, subject);
  EegEncoder enc(encoder_config_from(cfg, data), cfg.seed);
  Stage1Config sc;
  sc.alpha = cfg.stage1.alpha;
  sc.batch_size = cfg.stage1.batch_size;
  sc.epochs = cfg.stage1.epochs;
  sc.learning_rate = cfg.stage1.learning_rate;
  sc.weight_decay = cfg.stage1.weight_decay;
  sc.seed = cfg.seed;
  sc.early_stop_accuracy = cfg.stage1.early_stop_accuracy;
  sc.early_stop_mse_factor = cfg.stage1.early_stop_mse_factor;
  auto targets = build_stage1_targets(cfg, data);
  auto result = train_stage1(enc, data.data.segments, data.split, data.data.labels, targets, sc);

  auto ck = enc.to_checkpoint(data.data.labels, cfg.seed);
  ck.header["config_hash"] = hex64(cfg.config_hash());
  ck.save(paths.encoder_ckpt());
  std::ostringstream tsv;
  tsv << "epoch\ttrain_total\ttrain_mse\ttrain_ce\tval_mse\tval_accuracy\n";
  for (const auto& m : result.curve)
    tsv << m.epoch << "\t" << fmt_double(m.train_loss.total) << "\t"
        << fmt_double(m.train_loss.mse_term) << "\t" << fmt_double(m.train_loss.ce_term) << "\t"
        << fmt_double(m.val_mse) << "\t" << fmt_double(m.val_accuracy) << "\n";
  write_text_file(paths.stage1_metrics(), tsv.str());
  write_run_manifest(paths.root / "stage1", "train-stage1", cfg);
  return result;
}

// --- reference LM -------------------------------------------------------------

// Build (or load) the frozen reference LM. Pretraining happens on first use by
// either stage-2 or stage-3 so the NO_STAGE2 lineage sees the identical LM.
// The planted class targets ride along at the image slot so the LM learns to
// read soft prompts there.
inline TinyLm ensure_lm(const RunConfig& cfg, const PreparedData& data, const Paths& paths) {
  if (std::filesystem::exists(paths.lm_ckpt())) return TinyLm::from_checkpoint(Checkpoint::load(paths.lm_ckpt()));
  std::vector<std::string> corpus;
  PromptTemplate tmpl;
  for (const auto& [role, content] : tmpl.messages) corpus.push_back(content);
  for (const auto& l : data.data.labels.labels) corpus.push_back(l);
  for (size_t i : data.split.train) corpus.push_back(data.data.segments[i].caption);
  LmConfig lc;
  lc.width = cfg.lm.width;
  lc.heads = cfg.lm.heads;
  lc.blocks = cfg.lm.blocks;
  lc.max_seq = cfg.lm.max_seq;
  TinyLm lm(lc, Tokenizer::build(corpus), cfg.seed);
  LmPretrainConfig pc;
  pc.epochs = cfg.lm.pretrain_epochs;
  pc.batch_size = cfg.lm.pretrain_batch;
  pc.learning_rate = cfg.lm.pretrain_lr;
  pc.seed = cfg.seed;
  std::vector<LmPretrainExample> examples;
  for (size_t i : data.split.train) {
    const auto& seg = data.data.segments[i];
    LmPretrainExample e;
    e.object_label = seg.object_label;
    e.caption = seg.caption;
    if (auto it = data.targets_by_label.find(seg.object_label); it != data.targets_by_label.end())
      e.external = it->second;
    examples.push_back(std::move(e));
  }
  pretrain_lm(lm, tmpl, examples, pc);
  auto ck = lm.to_checkpoint(cfg.seed);
  ck.header["config_hash"] = hex64(cfg.config_hash());
  ck.save(paths.lm_ckpt());
  return lm;
}

// --- stages 2 and 3 -------------------------------------------------------------

inline StageConfig stage_config_from(const RunConfig& run, const RunConfig::StageSection& s,
                                     int stage) {
  StageConfig c;
  c.stage = stage;
  c.batch_size = s.batch_size;
  c.epochs = s.epochs;
  c.learning_rate = s.learning_rate;
  c.weight_decay = s.weight_decay;
  c.seed = run.seed;
  c.prompt_masked = s.prompt_masked;
  c.prepend_h_mm = run.lm.image_injection == "prepend";
  c.grad_accum_steps = s.grad_accum_steps;
  c.holdout_fraction = s.holdout_fraction;
  return c;
}

inline StageResult cmd_train_stage2(const RunConfig& cfg, int subject = 0) {
  const Paths paths = make_paths(cfg, subject);
  PreparedData data = load_prepared(cfg, subject);
  TinyLm lm = ensure_lm(cfg, data, paths);
  Projector projector = init_projector(data.embed_dim, lm.width(), cfg.seed);

  std::vector<CaptionedEmbedding> records;
  for (size_t i : data.split.train) {
    const auto& seg = data.data.segments[i];
    auto it = data.targets_by_label.find(seg.object_label);
    if (it == data.targets_by_label.end())
      raise(ErrorCode::MissingTarget, "no image-side embedding for label " + seg.object_label);
    records.push_back({seg.stimulus_id, seg.object_label, seg.caption, it->second});
  }
  PromptTemplate tmpl;
  auto result = train_stage2(lm, projector, tmpl, records,
                             stage_config_from(cfg, cfg.stage2, 2));
  auto ck = projector.to_checkpoint(2, cfg.seed);
  ck.header["config_hash"] = hex64(cfg.config_hash());
  ck.save(paths.stage2_ckpt());
  write_text_file(paths.stage2_metrics(), result.metrics_log);
  write_run_manifest(paths.root / "stage2", "train-stage2", cfg);
  return result;
}

inline StageResult cmd_train_stage3(const RunConfig& cfg, Variant variant, int subject = 0) {
  if (variant != Variant::All && variant != Variant::NoStage2)
    raise(ErrorCode::VariantConfigMismatch,
          "train-stage3 lineages are ALL and NO_STAGE2; got " + std::string(variant_name(variant)));
  const Paths paths = make_paths(cfg, subject);
  PreparedData data = load_prepared(cfg, subject);
  if (!std::filesystem::exists(paths.encoder_ckpt()))
    raise(ErrorCode::MissingEncoderCheckpoint, paths.encoder_ckpt().string());
  auto [encoder, labels] = EegEncoder::from_checkpoint(Checkpoint::load(paths.encoder_ckpt()));
  TinyLm lm = ensure_lm(cfg, data, paths);

  std::optional<Projector> projector;
  if (variant == Variant::NoStage2) {
    projector.emplace(init_projector(data.embed_dim, lm.width(), cfg.seed));
  } else {
    if (!std::filesystem::exists(paths.stage2_ckpt()))
      raise(ErrorCode::MissingCheckpoint, paths.stage2_ckpt().string());
    projector.emplace(Projector::from_checkpoint(Checkpoint::load(paths.stage2_ckpt())));
  }

  PromptTemplate tmpl;
  StageConfig sc = stage_config_from(cfg, cfg.stage3, 3);
  sc.skip_stage2 = variant == Variant::NoStage2;
  auto result = train_stage3(lm, *projector, tmpl, encoder, data.data.segments, data.split.train, sc);
  auto ck = projector->to_checkpoint(3, cfg.seed);
  ck.header["config_hash"] = hex64(cfg.config_hash());
  ck.save(paths.stage3_ckpt(variant));
  write_text_file(paths.stage3_metrics(variant), result.metrics_log);
  write_run_manifest(paths.stage3_dir(variant), "train-stage3", cfg);
  return result;
}

// --- inference ------------------------------------------------------------------

inline std::vector<GenerationRecord> cmd_infer(const RunConfig& cfg, Variant variant,
                                               int subject = 0) {
  const Paths paths = make_paths(cfg, subject);
  PreparedData data = load_prepared(cfg, subject);
  if (!std::filesystem::exists(paths.encoder_ckpt()))
    raise(ErrorCode::MissingEncoderCheckpoint, paths.encoder_ckpt().string());
  auto [encoder, labels] = EegEncoder::from_checkpoint(Checkpoint::load(paths.encoder_ckpt()));
  if (!std::filesystem::exists(paths.lm_ckpt()))
    raise(ErrorCode::MissingCheckpoint, paths.lm_ckpt().string());
  TinyLm lm = TinyLm::from_checkpoint(Checkpoint::load(paths.lm_ckpt()));

  std::optional<Projector> projector;
  if (variant_has_image_slot(variant) && variant != Variant::ObjRandEmb) {
    const auto ckpt = paths.stage3_ckpt(variant == Variant::NoStage2 ? Variant::NoStage2
                                                                     : Variant::All);
    if (!std::filesystem::exists(ckpt)) raise(ErrorCode::MissingCheckpoint, ckpt.string());
    projector.emplace(Projector::from_checkpoint(Checkpoint::load(ckpt)));
  }

  DecodeParams dp;
  dp.max_new_tokens = cfg.inference.max_new_tokens;
  dp.greedy = cfg.inference.greedy;
  dp.temperature = cfg.inference.temperature;
  dp.sample_seed = cfg.seed;

  PromptTemplate tmpl;
  auto records = batch_generate(data.data.segments, data.split.test, encoder, labels,
                                projector ? &*projector : nullptr, lm, tmpl, variant, dp,
                                paths.journal(variant), cfg.seed,
                                cfg.lm.image_injection == "prepend");

  nlohmann::ordered_json meta;
  meta["variant"] = variant_name(variant);
  meta["label_set_hash"] = hex64(fnv1a64(nlohmann::json(labels.labels).dump().data(),
                                         nlohmann::json(labels.labels).dump().size()));
  meta["config_hash"] = hex64(cfg.config_hash());
  meta["seed"] = cfg.seed;
  meta["n_records"] = records.size();
  write_text_file(paths.journal_meta(variant), meta.dump(2) + "\n");
  write_run_manifest(paths.root / "infer", "infer", cfg);
  return records;
}

// --- evaluate ---------------------------------------------------------------------

inline nlohmann::ordered_json metric_values_json(const MetricValues& v) {
  nlohmann::ordered_json j;
  j["rouge1"] = v.rouge1;
  j["rouge2"] = v.rouge2;
  j["rougeL"] = v.rougeL;
  j["bleu1"] = v.bleu1;
  j["bleu4"] = v.bleu4;
  j["meteor"] = v.meteor_score;
  j["bert_score"] = v.bert;
  j["count"] = v.count;
  return j;
}

inline MetricReport cmd_evaluate(const RunConfig& cfg, Variant variant, int subject = 0,
                                 JudgeClient* judge = nullptr) {
  const Paths paths = make_paths(cfg, subject);
  auto records = read_journal(paths.journal(variant));
  if (records.empty())
    raise(ErrorCode::MissingCheckpoint, "no journal at " + paths.journal(variant).string());
  auto embedder = make_token_embedder(cfg.eval.bert_embedder);
  MetricReport rep = compute_metric_report(records, *embedder);

  std::unique_ptr<JudgeClient> owned;
  if (judge == nullptr && cfg.eval.judge == "mock") {
    owned = std::make_unique<MockJudgeClient>(std::vector<std::string>{"fluency: 4 adequacy: 3"});
    judge = owned.get();
  }
  if (judge) {
    std::string rubric = "Rate the fluency (grammar) and adequacy (meaning match with the "
                         "reference) of the generated sentence on a 1-5 scale. Answer as "
                         "'fluency: <n> adequacy: <n>'.";
    if (!cfg.eval.rubric_file.empty()) rubric = read_text_file(cfg.eval.rubric_file);
    rep.judge = judge_scores(records, *judge, rubric);
  }

  nlohmann::ordered_json j;
  j["variant"] = variant_name(variant);
  j["bert_embedder"] = rep.bert_embedder;
  j["bert_comparability"] =
      rep.bert_embedder == "hashed-fallback" ? "offline fallback; not comparable to published BERTScore" : "pretrained";
  j["n_errors"] = rep.n_errors;
  j["pooled"] = metric_values_json(rep.pooled);
  if (cfg.eval.per_subject) {
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (const auto& [sid, mv] : rep.per_subject) per[std::to_string(sid)] = metric_values_json(mv);
    j["per_subject"] = per;
  }
  if (rep.judge) {
    j["judge"] = {{"mean_fluency", rep.judge->mean_fluency},
                  {"mean_adequacy", rep.judge->mean_adequacy},
                  {"n_scored", rep.judge->n_scored},
                  {"n_failed", rep.judge->n_failed},
                  {"rubric", rep.judge->rubric}};
  }
  write_text_file(paths.eval_report(variant), j.dump(2) + "\n");
  write_run_manifest(paths.root / "eval", "evaluate", cfg);
  return rep;
}

// --- report -----------------------------------------------------------------------

// Aggregates all available journals into a metrics table (one variant per
// row), per-subject tables, a confusion matrix and grounding counts.
inline std::string cmd_report(const RunConfig& cfg, int subject = 0) {
  const Paths paths = make_paths(cfg, subject);
  const Variant all_variants[] = {Variant::All, Variant::OnlyEeg, Variant::OnlyObj,
                                  Variant::ObjRandEmb, Variant::NoStage2};
  std::vector<std::pair<Variant, std::vector<GenerationRecord>>> journals;
  std::set<std::string> label_hashes;
  for (Variant v : all_variants) {
    auto recs = read_journal(paths.journal(v));
    if (recs.empty()) continue;
    journals.emplace_back(v, std::move(recs));
    if (std::filesystem::exists(paths.journal_meta(v))) {
      auto meta = nlohmann::json::parse(read_text_file(paths.journal_meta(v)));
      label_hashes.insert(meta.value("label_set_hash", std::string{}));
    }
  }
  if (journals.empty()) raise(ErrorCode::MissingCheckpoint, "no journals to report on");
  if (label_hashes.size() > 1)
    raise(ErrorCode::VariantConfigMismatch, "journals were produced with different label sets");

  auto embedder = make_token_embedder(cfg.eval.bert_embedder);
  std::ostringstream table;
  table << "variant       ROUGE-1  ROUGE-2  ROUGE-L  BLEU-1   BLEU-4   METEOR   BERTScore  N\n";
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  std::ostringstream per_subject_csv;
  per_subject_csv << "variant,subject,bleu1_pct,rouge1_pct,meteor_pct\n";
  std::ostringstream grounding_csv;
  grounding_csv << "variant,tp,fng,tn,fp,fn,total\n";

  char line[256];
  for (const auto& [v, recs] : journals) {
    MetricReport rep = compute_metric_report(recs, *embedder);
    std::snprintf(line, sizeof(line), "%-13s %7.1f  %7.1f  %7.1f  %7.1f  %7.1f  %7.1f  %9.2f  %zu\n",
                  variant_name(v), 100.0 * rep.pooled.rouge1, 100.0 * rep.pooled.rouge2,
                  100.0 * rep.pooled.rougeL, 100.0 * rep.pooled.bleu1, 100.0 * rep.pooled.bleu4,
                  100.0 * rep.pooled.meteor_score, rep.pooled.bert, rep.pooled.count);
    table << line;
    summary[variant_name(v)] = metric_values_json(rep.pooled);
    for (const auto& [sid, mv] : rep.per_subject) {
      std::snprintf(line, sizeof(line), "%s,%d,%.3f,%.3f,%.3f\n", variant_name(v), sid,
                    100.0 * mv.bleu1, 100.0 * mv.rouge1, 100.0 * mv.meteor_score);
      per_subject_csv << line;
    }
    const auto g = grounding_metrics(recs);
    grounding_csv << variant_name(v) << "," << g.tp << "," << g.fng << "," << g.tn << "," << g.fp
                  << "," << g.fn << "," << g.total() << "\n";
  }

  // confusion matrix from the first journal that carries predictions
  std::ostringstream confusion_csv;
  {
    const auto& recs = journals.front().second;
    std::vector<std::string> labels;
    {
      auto prepared = load_prepared(cfg, subject);
      labels = prepared.data.labels.labels;
    }
    LabelSet ls = LabelSet::from(labels);
    std::vector<std::tuple<std::string, std::string, int>> pgs;
    for (const auto& r : recs)
      if (r.error.empty()) pgs.emplace_back(r.predicted_object, r.reference_object, r.subject_id);
    auto rep = classification_report(pgs, ls);
    confusion_csv << "gold\\pred";
    for (const auto& l : ls.labels) confusion_csv << "," << l;
    confusion_csv << "\n";
    for (size_t g = 0; g < ls.labels.size(); ++g) {
      confusion_csv << ls.labels[g];
      for (size_t p = 0; p < ls.labels.size(); ++p) {
        std::snprintf(line, sizeof(line), ",%.4f", rep.confusion_matrix[g][p]);
        confusion_csv << line;
      }
      confusion_csv << "\n";
    }
    std::ostringstream acc_csv;
    acc_csv << "subject,accuracy\n";
    for (const auto& [sid, acc] : rep.per_subject_accuracy) {
      std::snprintf(line, sizeof(line), "%d,%.4f\n", sid, acc);
      acc_csv << line;
    }
    std::snprintf(line, sizeof(line), "overall,%.4f\n", rep.accuracy);
    acc_csv << line;
    write_text_file(paths.report_dir() / "classification_accuracy.csv", acc_csv.str());
  }

  write_text_file(paths.report_dir() / "summary_table.txt", table.str());
  write_text_file(paths.report_dir() / "summary.json", summary.dump(2) + "\n");
  write_text_file(paths.report_dir() / "per_subject.csv", per_subject_csv.str());
  write_text_file(paths.report_dir() / "grounding.csv", grounding_csv.str());
  write_text_file(paths.report_dir() / "confusion_matrix.csv", confusion_csv.str());
  write_run_manifest(paths.report_dir(), "report", cfg);
  return table.str();
}

}  // namespace eegcap
