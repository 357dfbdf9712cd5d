#pragma once

#include <vector>

#include "svqa/corpus.hpp"
#include "svqa/optimizer.hpp"
#include "svqa/parallel.hpp"
#include "svqa/pretrain.hpp"
#include "svqa/tape.hpp"

namespace svqa {

// Small convolutional detector: two stride-2 conv layers, global average
// pooling, one-unit head with sigmoid. Optimizer settings mirror TuneConfig.
struct BaselineConfig {
  int c1 = 8;
  int c2 = 16;
  int kernel = 3;
  int stride = 2;
  int pad = 1;
  int epochs = 5;
  int batch = 16;
  double peak_lr = 5e-2;
  AdamWConfig adam{};
  std::uint64_t seed = 1;
};

struct BaselineParams {
  BaselineConfig config;
  int resolution = 0;
  Tensor w1, b1, w2, b2, w3, b3;

  template <typename F>
  void visit(F&& f) {
    f("w1", w1);
    f("b1", b1);
    f("w2", w2);
    f("b2", b2);
    f("w3", w3);
    f("b3", b3);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<BaselineParams*>(this)->visit(
        [&f](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }

  static BaselineParams init(const BaselineConfig& cfg, int resolution, std::uint64_t seed) {
    BaselineParams p;
    p.config = cfg;
    p.resolution = resolution;
    const int kk = cfg.kernel * cfg.kernel;
    p.w1 = Tensor::zeros({kk, cfg.c1});
    p.b1 = Tensor::zeros({1, cfg.c1});
    p.w2 = Tensor::zeros({kk * cfg.c1, cfg.c2});
    p.b2 = Tensor::zeros({1, cfg.c2});
    p.w3 = Tensor::zeros({cfg.c2, 1});
    p.b3 = Tensor::zeros({1, 1});
    Rng rng(mix_seed(seed, 0x636e6eULL));
    p.visit([&](const std::string& name, Tensor& t) {
      if (name[0] == 'b') return;
      // He-style scale for the conv fan-in
      const double std = std::sqrt(2.0 / static_cast<double>(t.shape[0]));
      for (real& v : t.data) v = static_cast<real>(std * rng.normal());
    });
    return p;
  }

  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&h](const void* data, std::size_t len) {
      const auto* b = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < len; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
      }
    };
    const int header[4] = {config.c1, config.c2, config.kernel, resolution};
    mix_bytes(header, sizeof header);
    visit([&](const std::string&, const Tensor& t) {
      mix_bytes(t.data.data(), t.data.size() * sizeof(real));
    });
    return h;
  }
};

struct BoundBaseline {
  NodeId w1, b1, w2, b2, w3, b3;
  std::vector<NodeId> ordered;
};

inline BoundBaseline bind_baseline(Tape& tape, const BaselineParams& p, bool as_leaves) {
  BoundBaseline m;
  auto put = [&](const Tensor& t) {
    const NodeId id = as_leaves ? tape.leaf(t) : tape.constant(t);
    m.ordered.push_back(id);
    return id;
  };
  m.w1 = put(p.w1);
  m.b1 = put(p.b1);
  m.w2 = put(p.w2);
  m.b2 = put(p.b2);
  m.w3 = put(p.w3);
  m.b3 = put(p.b3);
  return m;
}

// Logit node for one image; shared by training and evaluation.
inline NodeId baseline_logit(Tape& tape, const BoundBaseline& m, const BaselineParams& p,
                             const Tensor& image) {
  image.require_matrix();
  const int n = p.resolution;
  if (image.shape[0] != n || image.shape[1] != n)
    throw TensorError("baseline: image resolution mismatch");
  const BaselineConfig& c = p.config;
  Tensor flat({n * n, 1}, image.data);
  const int h1 = (n + 2 * c.pad - c.kernel) / c.stride + 1;
  NodeId x = tape.constant(std::move(flat));
  x = tape.gelu(tape.add_row(tape.matmul(tape.im2col(x, n, n, 1, c.kernel, c.stride, c.pad), m.w1), m.b1));
  x = tape.gelu(tape.add_row(tape.matmul(tape.im2col(x, h1, h1, c.c1, c.kernel, c.stride, c.pad), m.w2), m.b2));
  return tape.add_row(tape.matmul(tape.mean_rows(x), m.w3), m.b3);
}

inline double baseline_probability(const BaselineParams& p, const Tensor& image) {
  Tape tape;
  const BoundBaseline m = bind_baseline(tape, p, /*as_leaves=*/false);
  const NodeId logit = baseline_logit(tape, m, p, image);
  return static_cast<double>(sigmoid_scalar(tape.value(logit).scalar_value()));
}

// Threshold rule: probability >= 0.5 means fake.
inline bool baseline_predict_fake(const BaselineParams& p, const Tensor& image) {
  return baseline_probability(p, image) >= 0.5;
}

struct BaselineResult {
  BaselineParams params;
  std::vector<EpochStats> history;
};

// Binary cross-entropy training (fake = 1) with the shared AdamW/cosine
// settings.
inline BaselineResult train_baseline(const std::vector<ImageSample>& train, int resolution,
                                     const BaselineConfig& cfg) {
  if (train.empty()) throw TrainingError("baseline: empty training set");
  if (cfg.epochs < 1 || cfg.batch < 1) throw TrainingError("baseline: epochs/batch must be >= 1");
  BaselineResult result;
  result.params = BaselineParams::init(cfg, resolution, mix_seed(cfg.seed, 0x4));
  BaselineParams& params = result.params;

  const int n = static_cast<int>(train.size());
  const long batches_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const long total_steps = static_cast<long>(cfg.epochs) * batches_per_epoch;
  AdamW opt(cfg.adam);
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  long global_step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0x5, static_cast<std::uint64_t>(epoch)));
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
          const ImageSample& sample =
              train[static_cast<std::size_t>(order[static_cast<std::size_t>(begin + s)])];
          Tape tape;
          const BoundBaseline m = bind_baseline(tape, params, /*as_leaves=*/true);
          const NodeId logit = baseline_logit(tape, m, params, sample.pixels);
          const NodeId loss =
              tape.bce_with_logit(logit, sample.label == GeneratorId::Real ? real(0) : real(1));
          losses[static_cast<std::size_t>(s)] = tape.value(loss).scalar_value();
          const Tape::Gradients g = tape.backward(loss);
          for (NodeId id : m.ordered) grads[static_cast<std::size_t>(s)].push_back(g.wrt(id));
        });
      } catch (const TensorError& e) {
        throw TrainingError("baseline diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
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
