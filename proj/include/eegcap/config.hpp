#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegcap/encoder.hpp"
#include "eegcap/errors.hpp"
#include "eegcap/lm.hpp"
#include "eegcap/trainer.hpp"
#include "eegcap/util.hpp"

namespace eegcap {

// Full experiment configuration. Every tolerance and hyperparameter consumed
// anywhere in the pipeline lives here with its default; unknown keys are
// rejected so typos cannot silently fall back to defaults.
struct RunConfig {
  std::string experiment = "default";
  uint64_t seed = 7;
  std::string output_dir = "out";

  struct DatasetSection {
    std::string mode = "synthetic";  // synthetic | manifest
    std::string manifest_path;       // for mode=manifest (raw recordings)
    int n_classes = 40;
    int per_class = 50;
    int n_subjects = 1;
    int channels = 16;
    int n_samples = 500;
    int embed_dim = 512;
    int discard_count = 20;
    int target_length = 440;
    std::string split_mode = "pooled";  // pooled | per_subject
  } dataset;

  struct SketchSection {
    double gaussian_sigma = 1.4;
    int kernel_radius = 2;
    double canny_low = 0.1;
    double canny_high = 0.3;
    std::string images_dir;  // input PPMs for the sketchify command
  } sketch;

  struct EncoderSection {
    std::vector<ConvBranchSpec> branches = {{16, 7, 1, 4}, {16, 7, 2, 4}};
    int spatial_channels = 32;
    int residual_kernel = 3;
    std::vector<int> classifier_hidden = {64};
  } encoder;

  struct Stage1Section {
    double alpha = 0.5;
    int batch_size = 16;
    int epochs = 100;
    double learning_rate = 1e-4;
    double weight_decay = 0.01;
    double early_stop_accuracy = 0.0;
    double early_stop_mse_factor = 0.0;
    // what the MSE aligns against: planted | stub_sketch | stub_original | table
    std::string target_source = "planted";
    // image embedding backend for the image-derived modes: stub | table:<file>
    std::string vision_backend = "stub";
  } stage1;

  struct LmSection {
    int width = 128;
    int heads = 4;
    int blocks = 4;
    int max_seq = 160;
    int pretrain_epochs = 30;
    int pretrain_batch = 16;
    double pretrain_lr = 3e-4;
    // how H_mm enters the prompt: replace the <image> row, or prepend a row
    std::string image_injection = "replace";
  } lm;

  struct StageSection {
    int batch_size = 16;
    int epochs = 5;
    double learning_rate = 2e-5;
    double weight_decay = 0.0;
    int grad_accum_steps = 1;
    double holdout_fraction = 0.15;
    bool prompt_masked = true;
  };
  StageSection stage2;
  StageSection stage3;

  struct InferenceSection {
    int max_new_tokens = 32;
    bool greedy = true;
    double temperature = 1.0;
  } inference;

  struct EvalSection {
    std::string bert_embedder = "hashed";
    std::string judge = "off";  // off | mock | http
    std::string judge_host = "http://localhost:8000";
    std::string judge_path = "/v1/rate";
    std::string rubric_file;
    bool per_subject = true;
  } eval;

  nlohmann::ordered_json to_json() const;

  // Hash of the scientific configuration: experiment name and output paths
  // are excluded so the same run into two directories hashes alike.
  uint64_t config_hash() const {
    nlohmann::ordered_json j = to_json();
    j.erase("experiment");
    j.erase("output_dir");
    const std::string s = j.dump();
    return fnv1a64(s.data(), s.size());
  }

  static RunConfig load(const std::filesystem::path& path);
  static RunConfig from_json(const nlohmann::json& j);
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
  if (!j.is_object()) raise(ErrorCode::BadConfig, where + " must be a JSON object");
  for (const auto& [key, val] : j.items())
    if (!allowed.count(key))
      raise(ErrorCode::BadConfig, "unknown config key '" + where + "." + key + "'");
}

template <typename T>
void read_into(const nlohmann::json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

inline void read_stage(const nlohmann::json& j, RunConfig::StageSection& s, const std::string& where) {
  reject_unknown(j, {"batch_size", "epochs", "learning_rate", "weight_decay", "grad_accum_steps",
                     "holdout_fraction", "prompt_masked"},
                 where);
  read_into(j, "batch_size", s.batch_size);
  read_into(j, "epochs", s.epochs);
  read_into(j, "learning_rate", s.learning_rate);
  read_into(j, "weight_decay", s.weight_decay);
  read_into(j, "grad_accum_steps", s.grad_accum_steps);
  read_into(j, "holdout_fraction", s.holdout_fraction);
  read_into(j, "prompt_masked", s.prompt_masked);
}

}  // namespace detail

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  detail::reject_unknown(j, {"experiment", "seed", "output_dir", "dataset", "sketch", "encoder",
                             "stage1", "lm", "stage2", "stage3", "inference", "eval"},
                         "<root>");
  detail::read_into(j, "experiment", c.experiment);
  detail::read_into(j, "seed", c.seed);
  detail::read_into(j, "output_dir", c.output_dir);

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    detail::reject_unknown(d,
                           {"mode", "manifest_path", "n_classes", "per_class", "n_subjects",
                            "channels", "n_samples", "embed_dim", "discard_count", "target_length",
                            "split_mode"},
                           "dataset");
    detail::read_into(d, "mode", c.dataset.mode);
    detail::read_into(d, "manifest_path", c.dataset.manifest_path);
    detail::read_into(d, "n_classes", c.dataset.n_classes);
    detail::read_into(d, "per_class", c.dataset.per_class);
    detail::read_into(d, "n_subjects", c.dataset.n_subjects);
    detail::read_into(d, "channels", c.dataset.channels);
    detail::read_into(d, "n_samples", c.dataset.n_samples);
    detail::read_into(d, "embed_dim", c.dataset.embed_dim);
    detail::read_into(d, "discard_count", c.dataset.discard_count);
    detail::read_into(d, "target_length", c.dataset.target_length);
    detail::read_into(d, "split_mode", c.dataset.split_mode);
  }
  if (j.contains("sketch")) {
    const auto& s = j.at("sketch");
    detail::reject_unknown(s, {"gaussian_sigma", "kernel_radius", "canny_low", "canny_high",
                               "images_dir"},
                           "sketch");
    detail::read_into(s, "gaussian_sigma", c.sketch.gaussian_sigma);
    detail::read_into(s, "kernel_radius", c.sketch.kernel_radius);
    detail::read_into(s, "canny_low", c.sketch.canny_low);
    detail::read_into(s, "canny_high", c.sketch.canny_high);
    detail::read_into(s, "images_dir", c.sketch.images_dir);
  }
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    detail::reject_unknown(e, {"branches", "spatial_channels", "residual_kernel",
                               "classifier_hidden"},
                           "encoder");
    if (e.contains("branches")) {
      c.encoder.branches.clear();
      for (const auto& b : e.at("branches")) {
        detail::reject_unknown(b, {"out_channels", "kernel", "dilation", "stride"},
                               "encoder.branches[]");
        ConvBranchSpec spec;
        detail::read_into(b, "out_channels", spec.out_channels);
        detail::read_into(b, "kernel", spec.kernel);
        detail::read_into(b, "dilation", spec.dilation);
        detail::read_into(b, "stride", spec.stride);
        c.encoder.branches.push_back(spec);
      }
    }
    detail::read_into(e, "spatial_channels", c.encoder.spatial_channels);
    detail::read_into(e, "residual_kernel", c.encoder.residual_kernel);
    detail::read_into(e, "classifier_hidden", c.encoder.classifier_hidden);
  }
  if (j.contains("stage1")) {
    const auto& s = j.at("stage1");
    detail::reject_unknown(s,
                           {"alpha", "batch_size", "epochs", "learning_rate", "weight_decay",
                            "early_stop_accuracy", "early_stop_mse_factor", "target_source",
                            "vision_backend"},
                           "stage1");
    detail::read_into(s, "alpha", c.stage1.alpha);
    detail::read_into(s, "batch_size", c.stage1.batch_size);
    detail::read_into(s, "epochs", c.stage1.epochs);
    detail::read_into(s, "learning_rate", c.stage1.learning_rate);
    detail::read_into(s, "weight_decay", c.stage1.weight_decay);
    detail::read_into(s, "early_stop_accuracy", c.stage1.early_stop_accuracy);
    detail::read_into(s, "early_stop_mse_factor", c.stage1.early_stop_mse_factor);
    detail::read_into(s, "target_source", c.stage1.target_source);
    detail::read_into(s, "vision_backend", c.stage1.vision_backend);
    if (c.stage1.alpha < 0.0 || c.stage1.alpha > 1.0)
      raise(ErrorCode::BadConfig, "stage1.alpha must lie in [0,1]");
  }
  if (j.contains("lm")) {
    const auto& l = j.at("lm");
    detail::reject_unknown(l, {"width", "heads", "blocks", "max_seq", "pretrain_epochs",
                               "pretrain_batch", "pretrain_lr", "image_injection"},
                           "lm");
    detail::read_into(l, "width", c.lm.width);
    detail::read_into(l, "heads", c.lm.heads);
    detail::read_into(l, "blocks", c.lm.blocks);
    detail::read_into(l, "max_seq", c.lm.max_seq);
    detail::read_into(l, "pretrain_epochs", c.lm.pretrain_epochs);
    detail::read_into(l, "pretrain_batch", c.lm.pretrain_batch);
    detail::read_into(l, "pretrain_lr", c.lm.pretrain_lr);
    detail::read_into(l, "image_injection", c.lm.image_injection);
    if (c.lm.image_injection != "replace" && c.lm.image_injection != "prepend")
      raise(ErrorCode::BadConfig, "lm.image_injection must be replace or prepend");
  }
  if (j.contains("stage2")) detail::read_stage(j.at("stage2"), c.stage2, "stage2");
  if (j.contains("stage3")) detail::read_stage(j.at("stage3"), c.stage3, "stage3");
  if (j.contains("inference")) {
    const auto& i = j.at("inference");
    detail::reject_unknown(i, {"max_new_tokens", "greedy", "temperature"}, "inference");
    detail::read_into(i, "max_new_tokens", c.inference.max_new_tokens);
    detail::read_into(i, "greedy", c.inference.greedy);
    detail::read_into(i, "temperature", c.inference.temperature);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::reject_unknown(e, {"bert_embedder", "judge", "judge_host", "judge_path", "rubric_file",
                               "per_subject"},
                           "eval");
    detail::read_into(e, "bert_embedder", c.eval.bert_embedder);
    detail::read_into(e, "judge", c.eval.judge);
    detail::read_into(e, "judge_host", c.eval.judge_host);
    detail::read_into(e, "judge_path", c.eval.judge_path);
    detail::read_into(e, "rubric_file", c.eval.rubric_file);
    detail::read_into(e, "per_subject", c.eval.per_subject);
  }
  return c;
}

inline RunConfig RunConfig::load(const std::filesystem::path& path) {
  auto j = nlohmann::json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) raise(ErrorCode::BadConfig, "config is not valid JSON: " + path.string());
  return from_json(j);
}

inline nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["experiment"] = experiment;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["dataset"] = {{"mode", dataset.mode},
                  {"manifest_path", dataset.manifest_path},
                  {"n_classes", dataset.n_classes},
                  {"per_class", dataset.per_class},
                  {"n_subjects", dataset.n_subjects},
                  {"channels", dataset.channels},
                  {"n_samples", dataset.n_samples},
                  {"embed_dim", dataset.embed_dim},
                  {"discard_count", dataset.discard_count},
                  {"target_length", dataset.target_length},
                  {"split_mode", dataset.split_mode}};
  j["sketch"] = {{"gaussian_sigma", sketch.gaussian_sigma},
                 {"kernel_radius", sketch.kernel_radius},
                 {"canny_low", sketch.canny_low},
                 {"canny_high", sketch.canny_high},
                 {"images_dir", sketch.images_dir}};
  nlohmann::ordered_json branches = nlohmann::ordered_json::array();
  for (const auto& b : encoder.branches)
    branches.push_back({{"out_channels", b.out_channels},
                        {"kernel", b.kernel},
                        {"dilation", b.dilation},
                        {"stride", b.stride}});
  j["encoder"] = {{"branches", branches},
                  {"spatial_channels", encoder.spatial_channels},
                  {"residual_kernel", encoder.residual_kernel},
                  {"classifier_hidden", encoder.classifier_hidden}};
  j["stage1"] = {{"alpha", stage1.alpha},
                 {"batch_size", stage1.batch_size},
                 {"epochs", stage1.epochs},
                 {"learning_rate", stage1.learning_rate},
                 {"weight_decay", stage1.weight_decay},
                 {"early_stop_accuracy", stage1.early_stop_accuracy},
                 {"early_stop_mse_factor", stage1.early_stop_mse_factor},
                 {"target_source", stage1.target_source},
                 {"vision_backend", stage1.vision_backend}};
  j["lm"] = {{"width", lm.width},
             {"heads", lm.heads},
             {"blocks", lm.blocks},
             {"max_seq", lm.max_seq},
             {"pretrain_epochs", lm.pretrain_epochs},
             {"pretrain_batch", lm.pretrain_batch},
             {"pretrain_lr", lm.pretrain_lr},
             {"image_injection", lm.image_injection}};
  auto stage_json = [](const StageSection& s) {
    return nlohmann::ordered_json{{"batch_size", s.batch_size},
                                  {"epochs", s.epochs},
                                  {"learning_rate", s.learning_rate},
                                  {"weight_decay", s.weight_decay},
                                  {"grad_accum_steps", s.grad_accum_steps},
                                  {"holdout_fraction", s.holdout_fraction},
                                  {"prompt_masked", s.prompt_masked}};
  };
  j["stage2"] = stage_json(stage2);
  j["stage3"] = stage_json(stage3);
  j["inference"] = {{"max_new_tokens", inference.max_new_tokens},
                    {"greedy", inference.greedy},
                    {"temperature", inference.temperature}};
  j["eval"] = {{"bert_embedder", eval.bert_embedder},
               {"judge", eval.judge},
               {"judge_host", eval.judge_host},
               {"judge_path", eval.judge_path},
               {"rubric_file", eval.rubric_file},
               {"per_subject", eval.per_subject}};
  return j;
}

}  // namespace eegcap
