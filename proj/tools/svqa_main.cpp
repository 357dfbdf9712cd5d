// svqa: build the corpus, train, tune the pseudo-word, evaluate, and merge
// reports. One root seed drives every stage; reruns with identical inputs
// reproduce identical artifacts byte for byte.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "svqa/experiment.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::string subsets;
  std::string with_pseudo;
  std::string vstar;
  std::string tag;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool baseline = false;
};

svqa::ExperimentConfig resolve_config(const CliOptions& opt) {
  svqa::ExperimentConfig cfg;
  if (!opt.config_path.empty()) cfg = svqa::load_experiment_config(opt.config_path);
  if (opt.seed_set) cfg.seed = opt.seed;
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  if (!opt.subsets.empty()) cfg.eval.subsets = svqa::subset_choice_from_name(opt.subsets);
  if (!opt.with_pseudo.empty()) {
    if (opt.with_pseudo != "true" && opt.with_pseudo != "false")
      throw svqa::ExperimentError("--with-pseudo must be true or false");
    cfg.eval.with_pseudo = opt.with_pseudo == "true";
  }
  if (!opt.vstar.empty()) {
    if (opt.vstar != "checkpoint" && opt.vstar != "random")
      throw svqa::ExperimentError("--vstar must be checkpoint or random");
    cfg.eval.vstar = opt.vstar == "random" ? svqa::VstarSource::Random : svqa::VstarSource::Checkpoint;
  }
  if (!opt.tag.empty()) cfg.eval.tag = opt.tag;
  return cfg;
}

void add_common(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--config", opt.config_path, "experiment config JSON")->envname("SVQA_CONFIG");
  cmd->add_option("--seed", opt.seed, "root seed override")
      ->envname("SVQA_SEED")
      ->each([&opt](const std::string&) { opt.seed_set = true; });
  cmd->add_option("--out", opt.out_dir, "output directory override")->envname("SVQA_OUT");
}

int fail(const std::string& type, const std::string& message) {
  const nlohmann::ordered_json err{{"error", {{"type", type}, {"message", message}}}};
  std::cerr << err.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic-image detection and attribution with a soft-prompted toy VLM"};
  app.require_subcommand(1);

  CliOptions opt;

  CLI::App* cmd_corpus = app.add_subcommand("corpus", "synthesize the image corpus + manifest");
  add_common(cmd_corpus, opt);

  CLI::App* cmd_pretrain =
      app.add_subcommand("pretrain", "train the backbone (or --baseline detector)");
  add_common(cmd_pretrain, opt);
  cmd_pretrain->add_flag("--baseline", opt.baseline, "train the baseline cnn instead");

  CLI::App* cmd_tune = app.add_subcommand("tune", "optimize the pseudo-word embedding");
  add_common(cmd_tune, opt);

  CLI::App* cmd_eval = app.add_subcommand("eval", "generate answers and score them");
  add_common(cmd_eval, opt);
  cmd_eval->add_option("--subsets", opt.subsets, "seen | unseen | all")->envname("SVQA_SUBSETS");
  cmd_eval->add_option("--with-pseudo", opt.with_pseudo, "true | false");
  cmd_eval->add_option("--vstar", opt.vstar, "checkpoint | random");
  cmd_eval->add_option("--tag", opt.tag, "output tag under eval/");
  cmd_eval->add_flag("--baseline", opt.baseline, "evaluate the baseline cnn instead");

  CLI::App* cmd_report = app.add_subcommand("report", "merge metrics.json files into tables");
  std::vector<std::string> report_inputs;
  std::string report_out = "report";
  cmd_report->add_option("inputs", report_inputs, "metrics.json paths")->required();
  cmd_report->add_option("--out", report_out, "output prefix (.csv/.txt appended)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_corpus->parsed()) {
      const svqa::ExperimentConfig cfg = resolve_config(opt);
      const svqa::CorpusManifest manifest = svqa::run_corpus(cfg);
      std::cout << "corpus: " << manifest.records.size() << " samples at "
                << cfg.corpus_dir().string() << "\n";
    } else if (cmd_pretrain->parsed()) {
      const svqa::ExperimentConfig cfg = resolve_config(opt);
      if (opt.baseline) {
        svqa::run_train_baseline(cfg);
        std::cout << "baseline checkpoint: " << cfg.baseline_path().string() << "\n";
      } else {
        svqa::run_pretrain(cfg);
        std::cout << "pretrained checkpoint: " << cfg.pretrained_path().string() << "\n";
      }
    } else if (cmd_tune->parsed()) {
      const svqa::ExperimentConfig cfg = resolve_config(opt);
      svqa::run_tune(cfg);
      std::cout << "tuned checkpoint: " << cfg.tuned_path().string() << "\n";
    } else if (cmd_eval->parsed()) {
      const svqa::ExperimentConfig cfg = resolve_config(opt);
      const svqa::EvalArtifacts artifacts = svqa::run_eval(cfg, opt.baseline);
      std::printf("eval: %s\n", artifacts.dir.string().c_str());
      std::printf("  detection acc/f1 avg: %.4f / %.4f\n", artifacts.report.avg_detection_acc,
                  artifacts.report.avg_detection_f1);
      if (!opt.baseline)
        std::printf("  attribution acc/f1 avg: %.4f / %.4f  rouge2/rougeL avg: %.4f / %.4f\n",
                    artifacts.report.avg_attribution_acc, artifacts.report.avg_attribution_f1,
                    artifacts.report.avg_rouge2, artifacts.report.avg_rougeL);
    } else if (cmd_report->parsed()) {
      std::vector<std::filesystem::path> paths(report_inputs.begin(), report_inputs.end());
      const svqa::ReportPaths out = svqa::run_report(paths, report_out);
      std::cout << "report: " << out.csv.string() << " " << out.text.string() << "\n";
    }
  } catch (const svqa::CorpusError& e) {
    return fail("corpus", e.what());
  } catch (const svqa::CheckpointError& e) {
    return fail("checkpoint", e.what());
  } catch (const svqa::TrainingError& e) {
    return fail("training", e.what());
  } catch (const svqa::ExperimentError& e) {
    return fail("config", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
