#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "svqa/baseline.hpp"
#include "svqa/checkpoint.hpp"
#include "svqa/corpus.hpp"
#include "svqa/metrics.hpp"
#include "svqa/model.hpp"
#include "svqa/parallel.hpp"
#include "svqa/pretrain.hpp"
#include "svqa/tuning.hpp"

namespace svqa {

struct ExperimentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SubsetChoice { Seen, Unseen, All };

inline std::string_view subset_choice_name(SubsetChoice s) {
  switch (s) {
    case SubsetChoice::Seen: return "seen";
    case SubsetChoice::Unseen: return "unseen";
    case SubsetChoice::All: return "all";
  }
  throw ExperimentError("bad subset choice");
}

inline SubsetChoice subset_choice_from_name(std::string_view s) {
  if (s == "seen") return SubsetChoice::Seen;
  if (s == "unseen") return SubsetChoice::Unseen;
  if (s == "all") return SubsetChoice::All;
  throw ExperimentError("eval.subsets must be seen, unseen or all (got '" + std::string(s) + "')");
}

enum class VstarSource { Checkpoint, Random };

struct EvalOptions {
  SubsetChoice subsets = SubsetChoice::Seen;
  bool with_pseudo = true;
  VstarSource vstar = VstarSource::Checkpoint;
  int max_len = 24;
  std::string tag;  // output directory under eval/; derived when empty
};

// One config drives the whole pipeline. All randomness is derived from the
// root seed; per-stage streams are split off it, so the corpus seed listed in
// every manifest is mix(seed, 0x10).
struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out_dir = "runs/default";
  CorpusConfig corpus;
  ModelConfig model;
  PretrainConfig pretrain;
  TuneConfig tune;
  BaselineConfig baseline;
  EvalOptions eval;

  std::uint64_t corpus_seed() const { return mix_seed(seed, 0x10); }

  CorpusConfig corpus_with_seed() const {
    CorpusConfig c = corpus;
    c.seed = corpus_seed();
    return c;
  }

  std::filesystem::path corpus_dir() const { return out_dir / "corpus"; }
  std::filesystem::path manifest_path() const { return corpus_dir() / "manifest.jsonl"; }
  std::filesystem::path checkpoints_dir() const { return out_dir / "checkpoints"; }
  std::filesystem::path pretrained_path() const { return checkpoints_dir() / "pretrained.ckpt"; }
  std::filesystem::path tuned_path() const { return checkpoints_dir() / "tuned.ckpt"; }
  std::filesystem::path baseline_path() const { return checkpoints_dir() / "baseline.ckpt"; }
  std::filesystem::path history_dir() const { return out_dir / "history"; }
};

inline nlohmann::ordered_json experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json corpus = corpus_config_to_json(c.corpus);
  corpus.erase("seed");  // derived from the root seed
  return nlohmann::ordered_json{
      {"seed", c.seed},
      {"out_dir", c.out_dir.string()},
      {"corpus", corpus},
      {"model",
       {{"dim", c.model.dim},
        {"blocks", c.model.blocks},
        {"heads", c.model.heads},
        {"patch", c.model.patch},
        {"max_context", c.model.max_context},
        {"init_std", c.model.init_std}}},
      {"pretrain",
       {{"epochs", c.pretrain.epochs},
        {"batch", c.pretrain.batch},
        {"peak_lr", c.pretrain.peak_lr},
        {"beta1", c.pretrain.adam.beta1},
        {"beta2", c.pretrain.adam.beta2},
        {"weight_decay", c.pretrain.adam.weight_decay},
        {"epsilon", c.pretrain.adam.epsilon}}},
      {"tune",
       {{"epochs", c.tune.epochs},
        {"batch", c.tune.batch},
        {"beta1", c.tune.beta1},
        {"beta2", c.tune.beta2},
        {"weight_decay", c.tune.weight_decay},
        {"epsilon", c.tune.epsilon},
        {"peak_lr", c.tune.peak_lr}}},
      {"baseline",
       {{"c1", c.baseline.c1},
        {"c2", c.baseline.c2},
        {"epochs", c.baseline.epochs},
        {"batch", c.baseline.batch},
        {"peak_lr", c.baseline.peak_lr},
        {"weight_decay", c.baseline.adam.weight_decay}}},
      {"eval",
       {{"subsets", std::string(subset_choice_name(c.eval.subsets))},
        {"with_pseudo", c.eval.with_pseudo},
        {"vstar", c.eval.vstar == VstarSource::Random ? "random" : "checkpoint"},
        {"max_len", c.eval.max_len},
        {"tag", c.eval.tag}}}};
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir.string());
  if (j.contains("corpus")) c.corpus = corpus_config_from_json(j.at("corpus"));
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.model.dim = m.value("dim", c.model.dim);
    c.model.blocks = m.value("blocks", c.model.blocks);
    c.model.heads = m.value("heads", c.model.heads);
    c.model.patch = m.value("patch", c.model.patch);
    c.model.max_context = m.value("max_context", c.model.max_context);
    c.model.init_std = m.value("init_std", c.model.init_std);
  }
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    c.pretrain.epochs = p.value("epochs", c.pretrain.epochs);
    c.pretrain.batch = p.value("batch", c.pretrain.batch);
    c.pretrain.peak_lr = p.value("peak_lr", c.pretrain.peak_lr);
    c.pretrain.adam.beta1 = p.value("beta1", c.pretrain.adam.beta1);
    c.pretrain.adam.beta2 = p.value("beta2", c.pretrain.adam.beta2);
    c.pretrain.adam.weight_decay = p.value("weight_decay", c.pretrain.adam.weight_decay);
    c.pretrain.adam.epsilon = p.value("epsilon", c.pretrain.adam.epsilon);
  }
  if (j.contains("tune")) {
    const auto& t = j.at("tune");
    c.tune.epochs = t.value("epochs", c.tune.epochs);
    c.tune.batch = t.value("batch", c.tune.batch);
    c.tune.beta1 = t.value("beta1", c.tune.beta1);
    c.tune.beta2 = t.value("beta2", c.tune.beta2);
    c.tune.weight_decay = t.value("weight_decay", c.tune.weight_decay);
    c.tune.epsilon = t.value("epsilon", c.tune.epsilon);
    c.tune.peak_lr = t.value("peak_lr", c.tune.peak_lr);
  }
  if (j.contains("baseline")) {
    const auto& b = j.at("baseline");
    c.baseline.c1 = b.value("c1", c.baseline.c1);
    c.baseline.c2 = b.value("c2", c.baseline.c2);
    c.baseline.epochs = b.value("epochs", c.baseline.epochs);
    c.baseline.batch = b.value("batch", c.baseline.batch);
    c.baseline.peak_lr = b.value("peak_lr", c.baseline.peak_lr);
    c.baseline.adam.weight_decay = b.value("weight_decay", c.baseline.adam.weight_decay);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    c.eval.subsets = subset_choice_from_name(e.value("subsets", "seen"));
    c.eval.with_pseudo = e.value("with_pseudo", c.eval.with_pseudo);
    const std::string vs = e.value("vstar", "checkpoint");
    if (vs != "checkpoint" && vs != "random")
      throw ExperimentError("eval.vstar must be checkpoint or random");
    c.eval.vstar = vs == "random" ? VstarSource::Random : VstarSource::Checkpoint;
    c.eval.max_len = e.value("max_len", c.eval.max_len);
    c.eval.tag = e.value("tag", c.eval.tag);
  }
  return c;
}

inline std::string experiment_config_hash(const ExperimentConfig& c) {
  nlohmann::ordered_json j = experiment_config_to_json(c);
  j.erase("eval");  // provenance pins the trained artifacts, not the eval routing
  const std::string dump = j.dump();
  return hex64(fnv1a(dump.data(), dump.size()));
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ExperimentError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ExperimentError("config parse error in " + path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Stage: corpus
// ---------------------------------------------------------------------------

inline CorpusManifest run_corpus(const ExperimentConfig& cfg) {
  return build_corpus(cfg.corpus_with_seed(), cfg.corpus_dir());
}

inline CorpusManifest require_manifest(const ExperimentConfig& cfg) {
  if (!std::filesystem::exists(cfg.manifest_path()))
    throw ExperimentError("missing corpus manifest " + cfg.manifest_path().string() +
                          " (run the corpus stage first)");
  return load_manifest(cfg.manifest_path());
}

inline std::vector<ImageSample> load_split_images(const CorpusManifest& manifest, Split split) {
  const std::vector<const SampleRecord*> records = manifest.select(split);
  std::vector<ImageSample> out(records.size());
  parallel_for(static_cast<int>(records.size()), [&](int i) {
    const SampleRecord& r = *records[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = {load_sample_pixels(manifest, r), r.label, r.split};
  });
  return out;
}

inline nlohmann::ordered_json run_provenance(const ExperimentConfig& cfg,
                                             const CorpusManifest& manifest) {
  return nlohmann::ordered_json{{"config_hash", experiment_config_hash(cfg)},
                                {"corpus_seed", manifest.config.seed},
                                {"corpus_config_hash", manifest.config_hash}};
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExperimentError("cannot write " + path.string());
  out << text;
  if (!out) throw ExperimentError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Stage: pretrain (vlm backbone or baseline cnn)
// ---------------------------------------------------------------------------

inline void run_pretrain(const ExperimentConfig& cfg) {
  const CorpusManifest manifest = require_manifest(cfg);
  const std::vector<ImageSample> train = load_split_images(manifest, Split::Train);
  ModelConfig model_cfg = cfg.model;
  model_cfg.image_size = manifest.config.resolution;
  PretrainConfig pre_cfg = cfg.pretrain;
  pre_cfg.seed = mix_seed(cfg.seed, 0x20);
  const PretrainResult result = pretrain_backbone(train, Vocab::standard(), model_cfg, pre_cfg);
  std::filesystem::create_directories(cfg.checkpoints_dir());
  nlohmann::ordered_json extra;
  for (auto& [k, v] : run_provenance(cfg, manifest).items()) extra[k] = v;
  save_vlm_checkpoint(cfg.pretrained_path(), result.params, nullptr, extra);
  write_text_file(cfg.history_dir() / "pretrain_history.csv", history_csv(result.history));
}

inline void run_train_baseline(const ExperimentConfig& cfg) {
  const CorpusManifest manifest = require_manifest(cfg);
  const std::vector<ImageSample> train = load_split_images(manifest, Split::Train);
  BaselineConfig bl_cfg = cfg.baseline;
  bl_cfg.seed = mix_seed(cfg.seed, 0x40);
  const BaselineResult result = train_baseline(train, manifest.config.resolution, bl_cfg);
  std::filesystem::create_directories(cfg.checkpoints_dir());
  nlohmann::ordered_json extra;
  for (auto& [k, v] : run_provenance(cfg, manifest).items()) extra[k] = v;
  save_baseline_checkpoint(cfg.baseline_path(), result.params, extra);
  write_text_file(cfg.history_dir() / "baseline_history.csv", history_csv(result.history));
}

// ---------------------------------------------------------------------------
// Stage: tune
// ---------------------------------------------------------------------------

inline void run_tune(const ExperimentConfig& cfg) {
  const CorpusManifest manifest = require_manifest(cfg);
  if (!std::filesystem::exists(cfg.pretrained_path()))
    throw ExperimentError("missing checkpoint " + cfg.pretrained_path().string() +
                          " (run the pretrain stage first)");
  const VlmCheckpoint ckpt = load_vlm_checkpoint(cfg.pretrained_path());
  const std::vector<ImageSample> train = load_split_images(manifest, Split::Train);
  const Vocab& vocab = Vocab::standard();
  const std::vector<TuneTriplet> triplets = make_tune_triplets(train, vocab);
  TuneConfig tune_cfg = cfg.tune;
  tune_cfg.seed = mix_seed(cfg.seed, 0x30);
  const PromptEmbedding init = init_pseudo_embedding(mix_seed(cfg.seed, 0x31), ckpt.params.config.dim);
  const TuneResult result = tune(ckpt.params, vocab, init, triplets, tune_cfg);

  // Rewrite the checkpoint with the frozen sections copied through
  // byte-for-byte; tuning adds only the vstar record and its own metadata.
  ckpt::Sections sections = ckpt::read_file(cfg.pretrained_path());
  sections["vstar"] = ckpt::pack_tensors({&result.vstar.v});
  nlohmann::ordered_json tuning_meta{
      {"epochs", tune_cfg.epochs},
      {"batch", tune_cfg.batch},
      {"peak_lr", tune_cfg.peak_lr},
      {"final_mean_loss", result.history.back().mean_loss},
      {"vstar_init_seed", mix_seed(cfg.seed, 0x31)}};
  const std::string dump = tuning_meta.dump();
  sections["tuning"].assign(dump.begin(), dump.end());
  ckpt::write_file(cfg.tuned_path(), sections);
  write_text_file(cfg.history_dir() / "tune_history.csv", history_csv(result.history));
}

// ---------------------------------------------------------------------------
// Stage: eval
// ---------------------------------------------------------------------------

inline std::vector<GeneratorId> subset_generators(SubsetChoice choice) {
  std::vector<GeneratorId> out;
  if (choice == SubsetChoice::Seen || choice == SubsetChoice::All)
    out.insert(out.end(), kSeenFakes.begin(), kSeenFakes.end());
  if (choice == SubsetChoice::Unseen || choice == SubsetChoice::All)
    out.insert(out.end(), kUnseenFakes.begin(), kUnseenFakes.end());
  return out;
}

inline nlohmann::ordered_json parsed_to_json(const ParsedAnswer& p) {
  nlohmann::ordered_json j;
  if (p.unparseable()) j["is_fake"] = "unparseable";
  else j["is_fake"] = p.is_fake();
  j["model_name"] = p.model_name ? nlohmann::ordered_json(std::string(slug_of(*p.model_name)))
                                 : nlohmann::ordered_json(nullptr);
  j["model_category"] = p.model_category
                            ? nlohmann::ordered_json(std::string(family_name(*p.model_category)))
                            : nlohmann::ordered_json(nullptr);
  j["family_mismatch"] = p.family_mismatch;
  return j;
}

inline nlohmann::ordered_json truth_to_json(GeneratorId g) {
  nlohmann::ordered_json j;
  j["is_fake"] = is_fake(g);
  j["model_name"] =
      is_fake(g) ? nlohmann::ordered_json(std::string(slug_of(g))) : nlohmann::ordered_json(nullptr);
  j["model_category"] = is_fake(g)
                            ? nlohmann::ordered_json(std::string(family_name(family_of(g))))
                            : nlohmann::ordered_json(nullptr);
  return j;
}

inline nlohmann::ordered_json matrix_json(const std::vector<std::string>& rows,
                                          const std::vector<std::string>& cols,
                                          const std::vector<std::vector<long>>& cells) {
  return nlohmann::ordered_json{{"rows", rows}, {"cols", cols}, {"cells", cells}};
}

inline std::vector<std::vector<long>> binary_cells(const BinaryMatrix& m) {
  return {{m.cells[0][0], m.cells[0][1], m.cells[0][2]},
          {m.cells[1][0], m.cells[1][1], m.cells[1][2]}};
}

inline std::vector<std::vector<long>> family_cells(const FamilyMatrix& m) {
  return {{m.cells[0][0], m.cells[0][1], m.cells[0][2]},
          {m.cells[1][0], m.cells[1][1], m.cells[1][2]}};
}

inline std::vector<std::vector<long>> model_cells(const ModelMatrix& m) {
  std::vector<std::vector<long>> out;
  for (const auto& row : m.cells) out.emplace_back(row.begin(), row.end());
  return out;
}

inline std::vector<std::string> model_matrix_cols() {
  std::vector<std::string> cols;
  for (GeneratorId g : kAllFakes) cols.emplace_back(slug_of(g));
  cols.emplace_back("none");
  return cols;
}

inline std::vector<std::string> model_matrix_rows() {
  std::vector<std::string> rows;
  for (GeneratorId g : kAllFakes) rows.emplace_back(slug_of(g));
  return rows;
}

inline std::string matrix_csv(const std::string& provenance_line,
                              const std::vector<std::string>& rows,
                              const std::vector<std::string>& cols,
                              const std::vector<std::vector<long>>& cells) {
  std::string out = "# " + provenance_line + "\n";
  out += "truth\\pred";
  for (const std::string& c : cols) out += "," + c;
  out += "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += rows[i];
    for (long v : cells[i]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

// Grayscale heatmap, one block per cell, scaled to the matrix maximum.
inline void write_matrix_pgm(const std::filesystem::path& path,
                             const std::vector<std::vector<long>>& cells,
                             const std::string& provenance_line, int block = 24) {
  long max_cell = 1;
  for (const auto& row : cells)
    for (long v : row) max_cell = std::max(max_cell, v);
  const int rows = static_cast<int>(cells.size());
  const int cols = static_cast<int>(cells[0].size());
  Tensor img = Tensor::zeros({rows * block, cols * block});
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const real v = static_cast<real>(cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) /
                     static_cast<real>(max_cell);
      for (int y = 0; y < block; ++y)
        for (int x = 0; x < block; ++x) img.at(i * block + y, j * block + x) = v;
    }
  write_pgm(path, img, provenance_line);
}

struct EvalArtifacts {
  MetricsReport report;
  std::filesystem::path dir;
  std::filesystem::path predictions_path;
  std::filesystem::path metrics_path;
};

namespace detail {

inline std::string eval_tag(const ExperimentConfig& cfg, bool baseline) {
  if (!cfg.eval.tag.empty()) return cfg.eval.tag;
  std::string tag = baseline ? "baseline" : "vlm";
  tag += "_";
  tag += subset_choice_name(cfg.eval.subsets);
  if (!baseline) {
    if (!cfg.eval.with_pseudo) tag += "_plain";
    else tag += cfg.eval.vstar == VstarSource::Random ? "_randomvstar" : "_pseudo";
  }
  return tag;
}

}  // namespace detail

// Runs generation (or the baseline detector) over every unique test sample of
// the selected subsets plus the shared real pool, then aggregates the full
// metric battery and writes predictions, report JSON and matrix CSV/PGM
// files. Output ordering is sorted by sample id.
inline EvalArtifacts run_eval(const ExperimentConfig& cfg, bool baseline = false) {
  const CorpusManifest manifest = require_manifest(cfg);
  const Vocab& vocab = Vocab::standard();
  const std::vector<GeneratorId> subsets = subset_generators(cfg.eval.subsets);

  // unique samples: shared real pool + each subset's fakes
  std::vector<const SampleRecord*> samples;
  for (const SampleRecord& r : manifest.records) {
    if (r.split != Split::Test) continue;
    if (r.label == GeneratorId::Real ||
        std::find(subsets.begin(), subsets.end(), r.label) != subsets.end())
      samples.push_back(&r);
  }
  std::sort(samples.begin(), samples.end(),
            [](const SampleRecord* a, const SampleRecord* b) { return a->id < b->id; });

  // model + question routing
  ModelParams params;
  PromptEmbedding vstar;
  bool has_vstar = false;
  BaselineParams bl_params;
  std::uint64_t artifact_checksum = 0;
  std::string vstar_mode = "none";
  if (baseline) {
    if (!std::filesystem::exists(cfg.baseline_path()))
      throw ExperimentError("missing checkpoint " + cfg.baseline_path().string() +
                            " (run pretrain --baseline first)");
    bl_params = load_baseline_checkpoint(cfg.baseline_path());
    artifact_checksum = bl_params.checksum();
  } else {
    const bool want_tuned = cfg.eval.with_pseudo && cfg.eval.vstar == VstarSource::Checkpoint;
    const std::filesystem::path ckpt_path = want_tuned ? cfg.tuned_path() : cfg.pretrained_path();
    if (!std::filesystem::exists(ckpt_path))
      throw ExperimentError("missing checkpoint " + ckpt_path.string());
    const VlmCheckpoint ckpt = load_vlm_checkpoint(ckpt_path);
    params = ckpt.params;
    artifact_checksum = params.checksum();
    if (cfg.eval.with_pseudo) {
      if (cfg.eval.vstar == VstarSource::Random) {
        vstar = init_pseudo_embedding(mix_seed(cfg.seed, 0x31), params.config.dim);
        vstar_mode = "random";
      } else {
        if (!ckpt.has_vstar)
          throw ExperimentError("checkpoint has no pseudo-word record: " + ckpt_path.string());
        vstar = ckpt.vstar;
        vstar_mode = "tuned";
      }
      has_vstar = true;
    }
  }

  const TokenSequence question =
      tokenize(vocab, build_question(!baseline && cfg.eval.with_pseudo), TokenRole::Prompt);
  const std::string question_text = baseline ? "" : build_question(cfg.eval.with_pseudo);

  std::vector<PredictionRecord> records(samples.size());
  parallel_for(static_cast<int>(samples.size()), [&](int i) {
    const SampleRecord& r = *samples[static_cast<std::size_t>(i)];
    const Tensor pixels = load_sample_pixels(manifest, r);
    PredictionRecord& rec = records[static_cast<std::size_t>(i)];
    rec.id = r.id;
    rec.truth = r.label;
    rec.question = question_text;
    if (baseline) {
      rec.generated = baseline_predict_fake(bl_params, pixels) ? "fake" : "real";
    } else {
      rec.generated =
          generate(params, vocab, pixels, question, has_vstar ? &vstar : nullptr, cfg.eval.max_len);
    }
    rec.parsed = parse_answer(rec.generated);
  });

  // aggregate
  MetricsReport report;
  std::vector<PredictionRecord> pool_reals;
  for (const PredictionRecord& rec : records)
    if (rec.truth == GeneratorId::Real) pool_reals.push_back(rec);
  for (GeneratorId g : subsets) {
    std::vector<PredictionRecord> population;
    for (const PredictionRecord& rec : records)
      if (rec.truth == g) population.push_back(rec);
    const long fake_count = static_cast<long>(population.size());
    population.insert(population.end(), pool_reals.begin(), pool_reals.end());
    SubsetReport s;
    s.subset = slug_of(g);
    s.population = static_cast<long>(population.size());
    s.fake_count = fake_count;
    s.real_count = static_cast<long>(pool_reals.size());
    s.detection = detection_metrics(population);
    if (!baseline) s.attribution = attribution_metrics(population, g);
    const ConfusionMatrices cm = confusion_matrices(population);
    s.binary = cm.binary;
    s.family = cm.family;
    for (std::size_t r = 0; r < cm.model.cells.size(); ++r)
      for (std::size_t c = 0; c < cm.model.cells[r].size(); ++c)
        report.model_matrix.cells[r][c] += cm.model.cells[r][c];
    report.subsets.push_back(std::move(s));
  }
  report.finalize_averages();

  // emit
  EvalArtifacts artifacts;
  artifacts.report = report;
  artifacts.dir = cfg.out_dir / "eval" / detail::eval_tag(cfg, baseline);
  std::filesystem::create_directories(artifacts.dir / "matrices");

  nlohmann::ordered_json provenance = run_provenance(cfg, manifest);
  provenance["artifact_checksum"] = hex64(artifact_checksum);
  provenance["vstar"] = vstar_mode;
  provenance["method"] = baseline ? "baseline_cnn" : "vlm_prompt";

  std::ostringstream pred;
  pred << nlohmann::ordered_json{{"provenance", provenance}}.dump() << "\n";
  for (const PredictionRecord& rec : records) {
    nlohmann::ordered_json line{{"id", rec.id},
                                {"question", rec.question},
                                {"generated", rec.generated},
                                {"parsed", parsed_to_json(rec.parsed)},
                                {"truth", truth_to_json(rec.truth)}};
    pred << line.dump() << "\n";
  }
  artifacts.predictions_path = artifacts.dir / "predictions.jsonl";
  write_text_file(artifacts.predictions_path, pred.str());

  const std::string prov_line = "config_hash=" + provenance["config_hash"].get<std::string>() +
                                " corpus_seed=" + std::to_string(manifest.config.seed);
  const std::vector<std::string> bin_rows{"real", "fake"};
  const std::vector<std::string> bin_cols{"real", "fake", "unparseable"};
  const std::vector<std::string> fam_rows{"gan", "diffusion"};
  const std::vector<std::string> fam_cols{"gan", "diffusion", "none"};

  nlohmann::ordered_json jsubsets = nlohmann::ordered_json::array();
  for (const SubsetReport& s : report.subsets) {
    nlohmann::ordered_json js{
        {"subset", s.subset},
        {"population", s.population},
        {"fakes", s.fake_count},
        {"reals", s.real_count},
        {"detection",
         {{"acc", s.detection.acc},
          {"f1", s.detection.f1},
          {"tp", s.detection.tp},
          {"fp", s.detection.fp},
          {"fn", s.detection.fn},
          {"tn", s.detection.tn},
          {"unparseable", s.detection.unparseable}}},
        {"attribution",
         baseline ? nlohmann::ordered_json(nullptr)
                  : nlohmann::ordered_json{{"acc", s.attribution.acc},
                                           {"f1", s.attribution.f1},
                                           {"rouge2", s.attribution.rouge2_mean},
                                           {"rougeL", s.attribution.rougeL_mean}}},
        {"binary_matrix", matrix_json(bin_rows, bin_cols, binary_cells(s.binary))},
        {"family_matrix", baseline
                              ? nlohmann::ordered_json(nullptr)
                              : matrix_json(fam_rows, fam_cols, family_cells(s.family))}};
    jsubsets.push_back(js);
    write_text_file(artifacts.dir / "matrices" / ("binary_" + s.subset + ".csv"),
                    matrix_csv(prov_line, bin_rows, bin_cols, binary_cells(s.binary)));
    write_matrix_pgm(artifacts.dir / "matrices" / ("binary_" + s.subset + ".pgm"),
                     binary_cells(s.binary), prov_line);
    if (!baseline) {
      write_text_file(artifacts.dir / "matrices" / ("family_" + s.subset + ".csv"),
                      matrix_csv(prov_line, fam_rows, fam_cols, family_cells(s.family)));
      write_matrix_pgm(artifacts.dir / "matrices" / ("family_" + s.subset + ".pgm"),
                       family_cells(s.family), prov_line);
    }
  }

  nlohmann::ordered_json averages{{"detection_acc", report.avg_detection_acc},
                                  {"detection_f1", report.avg_detection_f1}};
  if (!baseline) {
    averages["attribution_acc"] = report.avg_attribution_acc;
    averages["attribution_f1"] = report.avg_attribution_f1;
    averages["rouge2"] = report.avg_rouge2;
    averages["rougeL"] = report.avg_rougeL;
  }

  nlohmann::ordered_json jreport{
      {"provenance", provenance},
      {"method", baseline ? "baseline_cnn" : "vlm_prompt"},
      {"subsets_choice", std::string(subset_choice_name(cfg.eval.subsets))},
      {"config", experiment_config_to_json(cfg)},
      {"subsets", jsubsets},
      {"averages", averages},
      {"model_matrix", baseline ? nlohmann::ordered_json(nullptr)
                                : matrix_json(model_matrix_rows(), model_matrix_cols(),
                                              model_cells(report.model_matrix))}};
  artifacts.metrics_path = artifacts.dir / "metrics.json";
  write_text_file(artifacts.metrics_path, jreport.dump(2) + "\n");
  if (!baseline) {
    write_text_file(artifacts.dir / "matrices" / "model_all.csv",
                    matrix_csv(prov_line, model_matrix_rows(), model_matrix_cols(),
                               model_cells(report.model_matrix)));
    write_matrix_pgm(artifacts.dir / "matrices" / "model_all.pgm",
                     model_cells(report.model_matrix), prov_line);
  }
  return artifacts;
}

// ---------------------------------------------------------------------------
// Stage: report (merge metrics.json files into comparison tables)
// ---------------------------------------------------------------------------

struct ReportPaths {
  std::filesystem::path csv;
  std::filesystem::path text;
};

inline ReportPaths run_report(const std::vector<std::filesystem::path>& metrics_paths,
                              const std::filesystem::path& out_prefix) {
  if (metrics_paths.empty()) throw ExperimentError("report: no metrics files given");
  std::vector<nlohmann::json> runs;
  for (const auto& p : metrics_paths) {
    std::ifstream in(p);
    if (!in) throw ExperimentError("report: cannot open " + p.string());
    nlohmann::json j;
    in >> j;
    runs.push_back(std::move(j));
  }
  const auto& first_prov = runs.front().at("provenance");
  for (const nlohmann::json& r : runs) {
    const auto& prov = r.at("provenance");
    if (prov.at("corpus_seed") != first_prov.at("corpus_seed") ||
        prov.at("corpus_config_hash") != first_prov.at("corpus_config_hash"))
      throw ExperimentError("report: refusing to merge runs with mismatched corpora");
  }

  // union of subsets in first-seen order
  std::vector<std::string> subsets;
  for (const nlohmann::json& r : runs)
    for (const auto& s : r.at("subsets")) {
      const std::string name = s.at("subset").get<std::string>();
      if (std::find(subsets.begin(), subsets.end(), name) == subsets.end()) subsets.push_back(name);
    }

  auto method_tag = [](const nlohmann::json& r) {
    std::string tag = r.at("method").get<std::string>();
    if (tag == "vlm_prompt") tag += "(" + r.at("provenance").value("vstar", "none") + " s*)";
    return tag;
  };

  auto fmt = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v * 100.0);
    return std::string(buf);
  };

  // cell value for (run, subset, block, key); "-" when the subset or block is
  // absent from that run
  auto cell = [&](const nlohmann::json& r, const std::string& sname, const std::string& block,
                  const std::string& key) -> std::string {
    for (const auto& s : r.at("subsets"))
      if (s.at("subset") == sname && !s.at(block).is_null())
        return fmt(s.at(block).at(key).get<double>());
    return "-";
  };

  std::string csv = "table,method,metric";
  for (const std::string& s : subsets) csv += "," + s;
  csv += ",average\n";
  std::ostringstream text;

  auto emit_table = [&](const std::string& table, const std::string& metric_a,
                        const std::string& metric_b, const std::string& block,
                        const std::string& key_a, const std::string& key_b,
                        const std::string& avg_a, const std::string& avg_b) {
    text << table << " (" << metric_a << " / " << metric_b << ", %)\n";
    for (const nlohmann::json& r : runs) {
      if (block == "attribution" && r.at("method") != "vlm_prompt") continue;
      const auto& av = r.at("averages");
      const std::string avg_cell_a = av.contains(avg_a) ? fmt(av.at(avg_a).get<double>()) : "-";
      const std::string avg_cell_b = av.contains(avg_b) ? fmt(av.at(avg_b).get<double>()) : "-";
      std::string line = method_tag(r);
      std::string row_a = table + "," + method_tag(r) + "," + metric_a;
      std::string row_b = table + "," + method_tag(r) + "," + metric_b;
      for (const std::string& sname : subsets) {
        const std::string a = cell(r, sname, block, key_a);
        const std::string b = cell(r, sname, block, key_b);
        line += " | " + a + " / " + b;
        row_a += "," + a;
        row_b += "," + b;
      }
      line += " | " + avg_cell_a + " / " + avg_cell_b;
      text << "  " << line << "\n";
      csv += row_a + "," + avg_cell_a + "\n";
      csv += row_b + "," + avg_cell_b + "\n";
    }
    text << "\n";
  };

  emit_table("detection", "ACC", "F1", "detection", "acc", "f1", "detection_acc", "detection_f1");
  emit_table("attribution_rouge", "ROUGE-2", "ROUGE-L", "attribution", "rouge2", "rougeL", "rouge2",
             "rougeL");
  emit_table("attribution", "ACC", "F1", "attribution", "acc", "f1", "attribution_acc",
             "attribution_f1");

  ReportPaths out;
  out.csv = out_prefix;
  out.csv += ".csv";
  out.text = out_prefix;
  out.text += ".txt";
  std::string header = "# corpus_seed=" + first_prov.at("corpus_seed").dump() +
                       " corpus_config_hash=" + first_prov.at("corpus_config_hash").get<std::string>() +
                       "\n";
  write_text_file(out.csv, header + csv);
  write_text_file(out.text, header + text.str());
  return out;
}

}  // namespace svqa
