#pragma once

#include <string>
#include <vector>

#include "svqa/answer.hpp"
#include "svqa/corpus.hpp"
#include "svqa/model.hpp"
#include "svqa/optimizer.hpp"
#include "svqa/parallel.hpp"
#include "svqa/rng.hpp"

namespace svqa {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0;
  double lr = 0;
};

struct PretrainConfig {
  int epochs = 3;
  int batch = 16;
  double peak_lr = 3e-3;
  AdamWConfig adam{};
  std::uint64_t seed = 1;
};

// The deliberately partial pretraining target: detection plus family only,
// with the family word standing in for the model name. Model-level
// attribution is left for the soft prompt to unlock.
inline std::string render_partial_label(GeneratorId g) {
  if (g == GeneratorId::Real) return render_label(g);
  const std::string_view fam = family_name(family_of(g));
  std::string out = "Yes, it is a fake sample generated by ";
  out += fam;
  out += ", a ";
  out += fam;
  out += " model.";
  return out;
}

struct PretrainResult {
  ModelParams params;
  std::vector<EpochStats> history;
};

namespace detail {

struct BatchGradients {
  std::vector<Tensor> sum;  // canonical parameter order
  double loss = 0;
};

}  // namespace detail

// Train every backbone parameter on the partial task with the plain question
// (no S*). Deterministic under the config seed.
inline PretrainResult pretrain_backbone(const std::vector<ImageSample>& train,
                                        const Vocab& vocab, const ModelConfig& model_cfg,
                                        const PretrainConfig& cfg) {
  if (train.empty()) throw TrainingError("pretrain: empty training set");
  if (cfg.epochs < 1 || cfg.batch < 1) throw TrainingError("pretrain: epochs/batch must be >= 1");

  PretrainResult result;
  result.params = ModelParams::init(model_cfg, vocab.size(), mix_seed(cfg.seed, 0x1));
  ModelParams& params = result.params;

  const TokenSequence question = tokenize(vocab, build_question(false), TokenRole::Prompt);
  std::map<GeneratorId, std::vector<int>> answers;
  for (GeneratorId g : kAllGenerators) {
    std::vector<int> ids = encode_words(vocab, render_partial_label(g));
    ids.push_back(vocab.eos());
    answers.emplace(g, std::move(ids));
  }

  const int n = static_cast<int>(train.size());
  const long batches_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const long total_steps = static_cast<long>(cfg.epochs) * batches_per_epoch;

  AdamW opt(cfg.adam);
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  long global_step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0x2, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0;
    double lr = 0;
    for (long b = 0; b < batches_per_epoch; ++b) {
      const int begin = static_cast<int>(b) * cfg.batch;
      const int count = std::min(cfg.batch, n - begin);
      std::vector<std::vector<Tensor>> grads(static_cast<std::size_t>(count));
      std::vector<double> losses(static_cast<std::size_t>(count), 0.0);
      try {
        parallel_for(count, [&](int s) {
          const ImageSample& sample = train[static_cast<std::size_t>(order[static_cast<std::size_t>(begin + s)])];
          Tape tape;
          const TapeForward fwd =
              forward_on_tape(tape, params, vocab, sample.pixels, question,
                              answers.at(sample.label), nullptr, /*params_as_leaves=*/true,
                              /*vstar_as_leaf=*/false);
          losses[static_cast<std::size_t>(s)] = tape.value(fwd.loss).scalar_value();
          const Tape::Gradients g = tape.backward(fwd.loss);
          std::vector<Tensor>& slot = grads[static_cast<std::size_t>(s)];
          slot.reserve(fwd.bound.ordered.size());
          for (NodeId id : fwd.bound.ordered) slot.push_back(g.wrt(id));
        });
      } catch (const TensorError& e) {
        throw TrainingError("pretrain diverged at epoch " + std::to_string(epoch) + " step " +
                            std::to_string(global_step) + ": " + e.what());
      }
      // in-order reduction keeps the update independent of thread scheduling
      std::vector<Tensor> batch_grad = std::move(grads[0]);
      for (int s = 1; s < count; ++s)
        for (std::size_t t = 0; t < batch_grad.size(); ++t)
          for (std::size_t i = 0; i < batch_grad[t].data.size(); ++i)
            batch_grad[t].data[i] += grads[static_cast<std::size_t>(s)][t].data[i];
      const real inv = real(1) / static_cast<real>(count);
      for (Tensor& t : batch_grad)
        for (real& v : t.data) v *= inv;
      for (int s = 0; s < count; ++s) epoch_loss += losses[static_cast<std::size_t>(s)];

      lr = cosine_lr(global_step, total_steps, cfg.peak_lr);
      std::vector<Tensor*> param_ptrs;
      params.visit([&param_ptrs](const std::string&, Tensor& t) { param_ptrs.push_back(&t); });
      opt.step(param_ptrs, batch_grad, lr);
      ++global_step;
    }
    result.history.push_back({epoch, epoch_loss / n, lr});
  }
  return result;
}

}  // namespace svqa
