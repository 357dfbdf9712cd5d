#pragma once

#include <vector>

#include "svqa/answer.hpp"
#include "svqa/model.hpp"
#include "svqa/optimizer.hpp"
#include "svqa/parallel.hpp"
#include "svqa/pretrain.hpp"
#include "svqa/rng.hpp"

namespace svqa {

// Hyperparameters for optimizing the pseudo-word embedding: AdamW with
// decoupled weight decay and per-step cosine decay to zero. The peak rate is
// calibrated to this model scale; set it to the full-scale value through the
// config if you want that regime.
struct TuneConfig {
  int epochs = 5;
  int batch = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.05;
  double epsilon = 1e-8;
  double peak_lr = 5e-2;
  std::uint64_t seed = 1;

  AdamWConfig adam() const { return {beta1, beta2, epsilon, weight_decay}; }

  void validate() const {
    if (epochs < 1) throw TrainingError("tune config: epochs must be >= 1");
    if (batch < 1) throw TrainingError("tune config: batch must be >= 1");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
      throw TrainingError("tune config: betas must be in (0, 1)");
  }
};

// Entries i.i.d. normal with std 0.02, matching the backbone init scale.
inline PromptEmbedding init_pseudo_embedding(std::uint64_t seed, int dim) {
  if (dim < 1) throw TrainingError("init_pseudo_embedding: dim must be >= 1");
  Rng rng(mix_seed(seed, 0x7073657564ULL));
  PromptEmbedding e{Tensor::zeros({1, dim})};
  for (real& v : e.v.data) v = static_cast<real>(0.02 * rng.normal());
  return e;
}

// One training example: image, adjusted prompt (exactly one S*), target
// answer. Images are borrowed from the corpus vector that outlives the run.
struct TuneTriplet {
  const Tensor* image = nullptr;
  TokenSequence question;
  std::vector<int> answer_with_eos;
};

inline std::vector<TuneTriplet> make_tune_triplets(const std::vector<ImageSample>& samples,
                                                   const Vocab& vocab) {
  const TokenSequence question = tokenize(vocab, build_question(true), TokenRole::Prompt);
  std::map<GeneratorId, std::vector<int>> answers;
  for (GeneratorId g : kAllGenerators) {
    std::vector<int> ids = encode_words(vocab, render_label(g));
    ids.push_back(vocab.eos());
    answers.emplace(g, std::move(ids));
  }
  std::vector<TuneTriplet> out;
  out.reserve(samples.size());
  for (const ImageSample& s : samples)
    out.push_back({&s.pixels, question, answers.at(s.label)});
  return out;
}

struct TuneResult {
  PromptEmbedding vstar;
  std::vector<EpochStats> history;
};

// Mean gradient of the batch loss w.r.t. the pseudo-word embedding. Exposed
// for the finite-difference acceptance check.
inline Tensor tune_batch_gradient(const ModelParams& frozen, const Vocab& vocab,
                                  const std::vector<TuneTriplet>& batch,
                                  const PromptEmbedding& vstar, double* mean_loss = nullptr) {
  if (batch.empty()) throw TrainingError("tune: empty batch");
  Tensor sum = Tensor::zeros(vstar.v.shape);
  double loss = 0;
  std::vector<Tensor> grads(batch.size());
  std::vector<double> losses(batch.size(), 0.0);
  parallel_for(static_cast<int>(batch.size()), [&](int s) {
    const TuneTriplet& t = batch[static_cast<std::size_t>(s)];
    Tape tape;
    const TapeForward fwd =
        forward_on_tape(tape, frozen, vocab, *t.image, t.question, t.answer_with_eos, &vstar.v,
                        /*params_as_leaves=*/false, /*vstar_as_leaf=*/true);
    losses[static_cast<std::size_t>(s)] = tape.value(fwd.loss).scalar_value();
    grads[static_cast<std::size_t>(s)] = tape.backward(fwd.loss).wrt(fwd.vstar_node);
  });
  for (std::size_t s = 0; s < batch.size(); ++s) {
    loss += losses[s];
    for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += grads[s].data[i];
  }
  const real inv = real(1) / static_cast<real>(batch.size());
  for (real& v : sum.data) v *= inv;
  if (mean_loss != nullptr) *mean_loss = loss / static_cast<double>(batch.size());
  return sum;
}

// Optimize the pseudo-word embedding alone over the triplet set. The backbone
// is never touched: its checksum is asserted unchanged after the run.
inline TuneResult tune(const ModelParams& frozen, const Vocab& vocab,
                       PromptEmbedding vstar, const std::vector<TuneTriplet>& triplets,
                       const TuneConfig& cfg) {
  cfg.validate();
  if (triplets.empty()) throw TrainingError("tune: empty triplet set");
  if (vstar.v.shape != std::vector<int>{1, frozen.config.dim})
    throw TrainingError("tune: pseudo-word embedding width does not match the model");
  for (const TuneTriplet& t : triplets) {
    int pseudo = 0;
    for (int id : t.question.ids)
      if (id == vocab.pseudo()) ++pseudo;
    if (pseudo != 1) throw TrainingError("tune: every prompt must contain exactly one S*");
  }

  const std::uint64_t theta_before = frozen.checksum();
  const int n = static_cast<int>(triplets.size());
  const long batches_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const long total_steps = static_cast<long>(cfg.epochs) * batches_per_epoch;

  TuneResult result;
  result.vstar = std::move(vstar);
  AdamWState state;
  const AdamWConfig adam = cfg.adam();
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  long global_step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0x3, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0;
    double lr = 0;
    for (long b = 0; b < batches_per_epoch; ++b) {
      const int begin = static_cast<int>(b) * cfg.batch;
      const int count = std::min(cfg.batch, n - begin);
      std::vector<TuneTriplet> batch;
      batch.reserve(static_cast<std::size_t>(count));
      for (int s = 0; s < count; ++s)
        batch.push_back(triplets[static_cast<std::size_t>(order[static_cast<std::size_t>(begin + s)])]);
      double mean_loss = 0;
      Tensor grad;
      try {
        grad = tune_batch_gradient(frozen, vocab, batch, result.vstar, &mean_loss);
      } catch (const TensorError& e) {
        throw TrainingError("tune diverged at epoch " + std::to_string(epoch) + " step " +
                            std::to_string(global_step) + ": " + e.what());
      }
      epoch_loss += mean_loss * count;
      lr = cosine_lr(global_step, total_steps, cfg.peak_lr);
      adamw_step(result.vstar.v, grad, state, global_step + 1, lr, adam);
      ++global_step;
    }
    result.history.push_back({epoch, epoch_loss / n, lr});
  }

  if (frozen.checksum() != theta_before)
    throw TrainingError("tune: frozen parameters changed during tuning");
  return result;
}

inline std::string history_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,mean_loss,lr\n";
  char buf[96];
  for (const EpochStats& e : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", e.epoch, e.mean_loss, e.lr);
    out += buf;
  }
  return out;
}

}  // namespace svqa
