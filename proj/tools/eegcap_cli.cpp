// Command-line front end for the EEG-to-text pipeline: data preparation,
// staged training, inference, evaluation and reporting. One command per
// process; commands coordinate through files under the output directory.

#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "eegcap/judge_http.hpp"
#include "eegcap/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> output;
  std::string variant = "ALL";
  int subject = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_variant) {
  cmd->add_option("--config", args.config_path, "experiment config file (JSON)")->required();
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--output", args.output, "override the output directory");
  cmd->add_option("--subject", args.subject, "restrict to one subject id (0 = all)");
  if (with_variant)
    cmd->add_option("--variant", args.variant,
                    "variant: ALL, ONLY_EEG, ONLY_OBJ, OBJ_RAND_EMB, NO_STAGE2");
}

eegcap::RunConfig load_config(const CommonArgs& args) {
  auto cfg = eegcap::RunConfig::load(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.output) cfg.output_dir = *args.output;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eegcap: three-stage EEG-to-text pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  auto* prepare = app.add_subcommand("prepare-data", "synthesize or ingest the dataset");
  add_common(prepare, args, false);
  auto* sketch = app.add_subcommand("sketchify", "convert stimulus images to edge sketches");
  add_common(sketch, args, false);
  auto* s1 = app.add_subcommand("train-stage1", "train the EEG encoder");
  add_common(s1, args, false);
  auto* s2 = app.add_subcommand("train-stage2", "prime the projector on image-side embeddings");
  add_common(s2, args, false);
  auto* s3 = app.add_subcommand("train-stage3", "tune the projector on EEG embeddings");
  add_common(s3, args, true);
  auto* infer = app.add_subcommand("infer", "generate text from EEG for the test split");
  add_common(infer, args, true);
  auto* evaluate = app.add_subcommand("evaluate", "score a generation journal");
  add_common(evaluate, args, true);
  auto* report = app.add_subcommand("report", "aggregate journals into summary tables");
  add_common(report, args, false);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load_config(args);
    if (prepare->parsed()) {
      eegcap::cmd_prepare_data(cfg, args.subject);
      std::printf("prepared dataset under %s\n",
                  eegcap::make_paths(cfg, args.subject).data_dir().string().c_str());
    } else if (sketch->parsed()) {
      auto files = eegcap::cmd_sketchify(cfg);
      std::printf("wrote %zu sketches\n", files.size());
    } else if (s1->parsed()) {
      auto r = eegcap::cmd_train_stage1(cfg, args.subject);
      const auto& last = r.curve.back();
      std::printf("stage1 done: %d epochs, val_accuracy=%.3f val_mse=%.5f (initial %.5f)\n",
                  r.epochs_run, last.val_accuracy, last.val_mse, r.initial_val_mse);
    } else if (s2->parsed()) {
      auto r = eegcap::cmd_train_stage2(cfg, args.subject);
      std::printf("stage2 done: holdout loss %.4f -> %.4f (lm checksum %016llx unchanged)\n",
                  r.initial_holdout_loss, r.curve.empty() ? 0.0 : r.curve.back().holdout_loss,
                  static_cast<unsigned long long>(r.lm_checksum_after));
    } else if (s3->parsed()) {
      auto r = eegcap::cmd_train_stage3(cfg, eegcap::variant_from_name(args.variant), args.subject);
      std::printf("stage3 (%s) done: holdout loss %.4f -> %.4f\n", args.variant.c_str(),
                  r.initial_holdout_loss, r.curve.empty() ? 0.0 : r.curve.back().holdout_loss);
    } else if (infer->parsed()) {
      const uint64_t vision_calls_before = eegcap::vision_call_count().load();
      auto records = eegcap::cmd_infer(cfg, eegcap::variant_from_name(args.variant), args.subject);
      const uint64_t vision_calls = eegcap::vision_call_count().load() - vision_calls_before;
      std::printf("wrote %zu records (vision embedder calls during inference: %llu)\n",
                  records.size(), static_cast<unsigned long long>(vision_calls));
      if (vision_calls != 0) {
        std::fprintf(stderr, "error: inference touched the vision embedder\n");
        return 1;
      }
    } else if (evaluate->parsed()) {
      std::unique_ptr<eegcap::JudgeClient> judge;
      if (cfg.eval.judge == "http")
        judge = std::make_unique<eegcap::HttpJudgeClient>(cfg.eval.judge_host, cfg.eval.judge_path);
      auto rep = eegcap::cmd_evaluate(cfg, eegcap::variant_from_name(args.variant), args.subject,
                                      judge.get());
      std::printf("%s: BLEU-1 %.1f%%  ROUGE-1 %.1f%%  METEOR %.1f%%  BERTScore %.2f (n=%zu)\n",
                  args.variant.c_str(), 100.0 * rep.pooled.bleu1, 100.0 * rep.pooled.rouge1,
                  100.0 * rep.pooled.meteor_score, rep.pooled.bert, rep.pooled.count);
    } else if (report->parsed()) {
      std::fputs(eegcap::cmd_report(cfg, args.subject).c_str(), stdout);
    }
  } catch (const eegcap::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    const auto code = e.code();
    if (code == eegcap::ErrorCode::MissingCheckpoint ||
        code == eegcap::ErrorCode::MissingEncoderCheckpoint)
      return 2;
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
