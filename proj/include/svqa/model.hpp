#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "svqa/rng.hpp"
#include "svqa/tape.hpp"
#include "svqa/tensor.hpp"
#include "svqa/vocab.hpp"

namespace svqa {

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int dim = 32;
  int blocks = 2;
  int heads = 2;
  int patch = 4;
  int max_context = 96;
  int image_size = 32;
  double init_std = 0.02;

  int head_dim() const { return dim / heads; }
  int visual_tokens() const { return (image_size / patch) * (image_size / patch); }

  void validate() const {
    if (dim < 2 || blocks < 1 || heads < 1 || patch < 1) throw ModelError("model config: bad dims");
    if (dim % heads != 0) throw ModelError("model config: dim must divide into heads");
    if (image_size % patch != 0) throw ModelError("model config: image size not divisible by patch");
    if (max_context <= visual_tokens()) throw ModelError("model config: context too small for image");
  }
};

struct BlockParams {
  Tensor ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

// The backbone parameters. The output projection is tied to token_embed, so
// the embedding table is the only vocabulary-sized tensor.
struct ModelParams {
  ModelConfig config;
  int vocab_size = 0;
  Tensor patch_w, patch_b, pos;
  std::vector<BlockParams> blocks;
  Tensor lnf_g, lnf_b, token_embed;

  // Canonical parameter order; init, checksum, checkpointing and the
  // optimizer all iterate through here.
  template <typename F>
  void visit(F&& f) {
    f("patch_w", patch_w);
    f("patch_b", patch_b);
    f("pos", pos);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "block" + std::to_string(i) + ".";
      BlockParams& b = blocks[i];
      f(p + "ln1_g", b.ln1_g);
      f(p + "ln1_b", b.ln1_b);
      f(p + "wq", b.wq);
      f(p + "bq", b.bq);
      f(p + "wk", b.wk);
      f(p + "bk", b.bk);
      f(p + "wv", b.wv);
      f(p + "bv", b.bv);
      f(p + "wo", b.wo);
      f(p + "bo", b.bo);
      f(p + "ln2_g", b.ln2_g);
      f(p + "ln2_b", b.ln2_b);
      f(p + "w1", b.w1);
      f(p + "b1", b.b1);
      f(p + "w2", b.w2);
      f(p + "b2", b.b2);
    }
    f("lnf_g", lnf_g);
    f("lnf_b", lnf_b);
    f("token_embed", token_embed);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<ModelParams*>(this)->visit(
        [&f](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }

  static ModelParams init(const ModelConfig& cfg, int vocab_size, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    p.vocab_size = vocab_size;
    const int d = cfg.dim;
    const int pd = cfg.patch * cfg.patch;
    p.patch_w = Tensor::zeros({pd, d});
    p.patch_b = Tensor::zeros({1, d});
    p.pos = Tensor::zeros({cfg.max_context, d});
    p.blocks.resize(static_cast<std::size_t>(cfg.blocks));
    for (BlockParams& b : p.blocks) {
      b.ln1_g = Tensor::full({1, d}, real(1));
      b.ln1_b = Tensor::zeros({1, d});
      b.wq = Tensor::zeros({d, d});
      b.bq = Tensor::zeros({1, d});
      b.wk = Tensor::zeros({d, d});
      b.bk = Tensor::zeros({1, d});
      b.wv = Tensor::zeros({d, d});
      b.bv = Tensor::zeros({1, d});
      b.wo = Tensor::zeros({d, d});
      b.bo = Tensor::zeros({1, d});
      b.ln2_g = Tensor::full({1, d}, real(1));
      b.ln2_b = Tensor::zeros({1, d});
      b.w1 = Tensor::zeros({d, 4 * d});
      b.b1 = Tensor::zeros({1, 4 * d});
      b.w2 = Tensor::zeros({4 * d, d});
      b.b2 = Tensor::zeros({1, d});
    }
    p.lnf_g = Tensor::full({1, d}, real(1));
    p.lnf_b = Tensor::zeros({1, d});
    p.token_embed = Tensor::zeros({vocab_size, d});

    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    p.visit([&](const std::string& name, Tensor& t) {
      const bool is_gain = name.size() >= 2 && name.compare(name.size() - 2, 2, "_g") == 0;
      const bool is_bias = name.find("_b") != std::string::npos ||
                           name.find(".b") != std::string::npos;
      if (is_gain || is_bias) return;  // gains stay 1, biases stay 0
      for (real& v : t.data) v = static_cast<real>(cfg.init_std * rng.normal());
    });
    return p;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&n](const std::string&, const Tensor& t) { n += t.data.size(); });
    return n;
  }

  // FNV-1a over dims plus every parameter byte in canonical order. Constant
  // across tuning by the freeze contract.
  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&h](const void* data, std::size_t len) {
      const auto* b = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < len; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
      }
    };
    const int header[7] = {config.dim,         config.blocks,    config.heads, config.patch,
                           config.max_context, config.image_size, vocab_size};
    mix_bytes(header, sizeof header);
    visit([&](const std::string&, const Tensor& t) {
      mix_bytes(t.data.data(), t.data.size() * sizeof(real));
    });
    return h;
  }
};

// The single trainable vector: the embedding of the pseudo-word.
struct PromptEmbedding {
  Tensor v;  // [1, dim]
};

// Split an image into non-overlapping patch rows (patch-grid raster order,
// row-major pixels inside each patch).
inline Tensor patchify(const Tensor& image, int patch) {
  image.require_matrix();
  const int h = image.shape[0], w = image.shape[1];
  if (h % patch != 0 || w % patch != 0) throw ModelError("patchify: image not divisible by patch");
  const int gy = h / patch, gx = w / patch;
  Tensor out = Tensor::zeros({gy * gx, patch * patch});
  for (int py = 0; py < gy; ++py)
    for (int px = 0; px < gx; ++px) {
      real* row = out.row_ptr(py * gx + px);
      int c = 0;
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x, ++c) row[c] = image.at(py * patch + y, px * patch + x);
    }
  return out;
}

inline Tensor causal_mask(int t) {
  Tensor m = Tensor::zeros({t, t});
  for (int i = 0; i < t; ++i)
    for (int j = i + 1; j < t; ++j) m.at(i, j) = real(-1e9);
  return m;
}

// Model parameters registered on a tape, either as frozen constants or as
// gradient leaves (full pretraining).
struct BoundModel {
  NodeId patch_w, patch_b, pos, lnf_g, lnf_b, token_embed;
  struct Block {
    NodeId ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  std::vector<Block> blocks;
  std::vector<NodeId> ordered;  // canonical order, parallel to ModelParams::visit
};

inline BoundModel bind_model(Tape& tape, const ModelParams& p, bool as_leaves) {
  BoundModel m;
  auto put = [&](const Tensor& t) {
    const NodeId id = as_leaves ? tape.leaf(t) : tape.constant(t);
    m.ordered.push_back(id);
    return id;
  };
  m.patch_w = put(p.patch_w);
  m.patch_b = put(p.patch_b);
  m.pos = put(p.pos);
  for (const BlockParams& b : p.blocks) {
    BoundModel::Block bb;
    bb.ln1_g = put(b.ln1_g);
    bb.ln1_b = put(b.ln1_b);
    bb.wq = put(b.wq);
    bb.bq = put(b.bq);
    bb.wk = put(b.wk);
    bb.bk = put(b.bk);
    bb.wv = put(b.wv);
    bb.bv = put(b.bv);
    bb.wo = put(b.wo);
    bb.bo = put(b.bo);
    bb.ln2_g = put(b.ln2_g);
    bb.ln2_b = put(b.ln2_b);
    bb.w1 = put(b.w1);
    bb.b1 = put(b.b1);
    bb.w2 = put(b.w2);
    bb.b2 = put(b.b2);
    m.blocks.push_back(bb);
  }
  m.lnf_g = put(p.lnf_g);
  m.lnf_b = put(p.lnf_b);
  m.token_embed = put(p.token_embed);
  return m;
}

// Context layout: visual tokens, then prompt tokens, then answer tokens.
// pseudo_index points at the S* token inside `tokens` (-1 when absent); its
// embedding row comes from the vstar node instead of the frozen table.
inline NodeId hidden_states(Tape& tape, const BoundModel& m, const ModelConfig& cfg,
                            const Tensor& image, const std::vector<int>& tokens, int pseudo_index,
                            NodeId vstar = -1) {
  const Tensor patches = patchify(image, cfg.patch);
  const int p_count = patches.shape[0];
  const int t_len = p_count + static_cast<int>(tokens.size());
  if (t_len > cfg.max_context) throw ModelError("forward: sequence exceeds max context");

  NodeId visual = tape.add_row(tape.matmul(tape.constant(patches), m.patch_w), m.patch_b);

  NodeId text;
  if (pseudo_index >= 0) {
    if (vstar < 0) throw ModelError("forward: prompt has S* but no pseudo-word embedding bound");
    std::vector<NodeId> pieces;
    if (pseudo_index > 0) {
      std::vector<int> head(tokens.begin(), tokens.begin() + pseudo_index);
      pieces.push_back(tape.embed_rows(m.token_embed, std::move(head)));
    }
    pieces.push_back(vstar);
    if (pseudo_index + 1 < static_cast<int>(tokens.size())) {
      std::vector<int> tail(tokens.begin() + pseudo_index + 1, tokens.end());
      pieces.push_back(tape.embed_rows(m.token_embed, std::move(tail)));
    }
    text = pieces.size() == 1 ? pieces[0] : tape.concat_rows(pieces);
  } else {
    text = tape.embed_rows(m.token_embed, tokens);
  }

  NodeId x = tape.concat_rows({visual, text});
  x = tape.add(x, tape.slice_rows(m.pos, 0, t_len));

  const NodeId mask = tape.constant(causal_mask(t_len));
  const int dh = cfg.head_dim();
  const real att_scale = static_cast<real>(1.0 / std::sqrt(static_cast<double>(dh)));

  for (const BoundModel::Block& b : m.blocks) {
    const NodeId h = tape.layer_norm(x, b.ln1_g, b.ln1_b);
    const NodeId q = tape.add_row(tape.matmul(h, b.wq), b.bq);
    const NodeId k = tape.add_row(tape.matmul(h, b.wk), b.bk);
    const NodeId v = tape.add_row(tape.matmul(h, b.wv), b.bv);
    std::vector<NodeId> heads;
    for (int hd = 0; hd < cfg.heads; ++hd) {
      const NodeId qh = tape.slice_cols(q, hd * dh, dh);
      const NodeId kh = tape.slice_cols(k, hd * dh, dh);
      const NodeId vh = tape.slice_cols(v, hd * dh, dh);
      NodeId scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), att_scale);
      scores = tape.add(scores, mask);
      heads.push_back(tape.matmul(tape.softmax_rows(scores), vh));
    }
    const NodeId att = tape.add_row(tape.matmul(tape.concat_cols(heads), b.wo), b.bo);
    x = tape.add(x, att);
    const NodeId h2 = tape.layer_norm(x, b.ln2_g, b.ln2_b);
    const NodeId inner = tape.gelu(tape.add_row(tape.matmul(h2, b.w1), b.b1));
    const NodeId mlp = tape.add_row(tape.matmul(inner, b.w2), b.b2);
    x = tape.add(x, mlp);
  }
  return tape.layer_norm(x, m.lnf_g, m.lnf_b);
}

inline NodeId logits_from_hidden(Tape& tape, const BoundModel& m, NodeId hidden) {
  return tape.matmul(hidden, tape.transpose(m.token_embed));
}

// Teacher-forced layout for one (image, question, answer) example.
struct ForwardPlan {
  std::vector<int> tokens;    // prompt then answer inputs (BOS-shifted)
  int pseudo_index = -1;      // within tokens
  int context_len = 0;        // visual + tokens
  std::vector<int> targets;   // per context position
  std::vector<bool> mask;     // true on answer positions
};

inline ForwardPlan plan_teacher_forced(const ModelConfig& cfg, const Vocab& vocab,
                                       const TokenSequence& question,
                                       const std::vector<int>& answer_with_eos) {
  int pseudo_count = 0;
  for (int id : question.ids)
    if (id == vocab.pseudo()) ++pseudo_count;
  if (pseudo_count > 1) throw ModelError("forward: question contains multiple S* tokens");
  if (answer_with_eos.empty() || answer_with_eos.back() != vocab.eos())
    throw ModelError("forward: answer must end in <eos>");
  for (int id : answer_with_eos)
    if (id == vocab.pseudo()) throw ModelError("forward: S* not allowed in the answer");

  ForwardPlan plan;
  plan.tokens = question.ids;
  if (pseudo_count == 1) {
    for (std::size_t i = 0; i < plan.tokens.size(); ++i)
      if (plan.tokens[i] == vocab.pseudo()) plan.pseudo_index = static_cast<int>(i);
  }
  const int answer_begin = static_cast<int>(plan.tokens.size());
  plan.tokens.push_back(vocab.bos());
  plan.tokens.insert(plan.tokens.end(), answer_with_eos.begin(), answer_with_eos.end() - 1);

  const int p_count = cfg.visual_tokens();
  plan.context_len = p_count + static_cast<int>(plan.tokens.size());
  if (plan.context_len > cfg.max_context) throw ModelError("forward: sequence exceeds max context");
  plan.targets.assign(static_cast<std::size_t>(plan.context_len), 0);
  plan.mask.assign(static_cast<std::size_t>(plan.context_len), false);
  const int base = p_count + answer_begin;
  for (std::size_t i = 0; i < answer_with_eos.size(); ++i) {
    plan.targets[static_cast<std::size_t>(base) + i] = answer_with_eos[i];
    plan.mask[static_cast<std::size_t>(base) + i] = true;
  }
  return plan;
}

struct TapeForward {
  NodeId loss = -1;
  NodeId logits = -1;
  NodeId vstar_node = -1;
  BoundModel bound;
  ForwardPlan plan;
};

// Full teacher-forced pass on a tape. vstar must be supplied iff the question
// carries S*; bind_vstar_leaf registers it as the gradient leaf for tuning.
inline TapeForward forward_on_tape(Tape& tape, const ModelParams& params, const Vocab& vocab,
                                   const Tensor& image, const TokenSequence& question,
                                   const std::vector<int>& answer_with_eos, const Tensor* vstar,
                                   bool params_as_leaves, bool vstar_as_leaf) {
  TapeForward out;
  out.plan = plan_teacher_forced(params.config, vocab, question, answer_with_eos);
  out.bound = bind_model(tape, params, params_as_leaves);
  if (out.plan.pseudo_index >= 0) {
    if (vstar == nullptr) throw ModelError("forward: prompt has S* but no pseudo-word embedding");
    out.vstar_node = vstar_as_leaf ? tape.leaf(*vstar) : tape.constant(*vstar);
  }
  const NodeId hidden = hidden_states(tape, out.bound, params.config, image, out.plan.tokens,
                                      out.plan.pseudo_index, out.vstar_node);
  out.logits = logits_from_hidden(tape, out.bound, hidden);
  out.loss = tape.cross_entropy(out.logits, out.plan.targets, out.plan.mask);
  return out;
}

// Greedy argmax decoding from BOS until EOS or max_len tokens; ties break to
// the lowest token id. Deterministic by construction.
inline std::string generate(const ModelParams& params, const Vocab& vocab, const Tensor& image,
                            const TokenSequence& question, const PromptEmbedding* vstar,
                            int max_len) {
  if (max_len < 0) throw ModelError("generate: max_len must be >= 0");
  int pseudo_count = 0;
  for (int id : question.ids)
    if (id == vocab.pseudo()) ++pseudo_count;
  if (pseudo_count > 1) throw ModelError("generate: question contains multiple S* tokens");
  if (pseudo_count == 1 && vstar == nullptr)
    throw ModelError("generate: prompt has S* but no pseudo-word embedding");

  std::vector<int> emitted;
  for (int step = 0; step < max_len; ++step) {
    Tape tape;
    const BoundModel bound = bind_model(tape, params, /*as_leaves=*/false);
    NodeId vstar_node = -1;
    int pseudo_index = -1;
    std::vector<int> tokens = question.ids;
    if (pseudo_count == 1) {
      vstar_node = tape.constant(vstar->v);
      for (std::size_t i = 0; i < tokens.size(); ++i)
        if (tokens[i] == vocab.pseudo()) pseudo_index = static_cast<int>(i);
    }
    tokens.push_back(vocab.bos());
    tokens.insert(tokens.end(), emitted.begin(), emitted.end());
    const NodeId hidden =
        hidden_states(tape, bound, params.config, image, tokens, pseudo_index, vstar_node);
    const NodeId logits = logits_from_hidden(tape, bound, hidden);
    const Tensor& lv = tape.value(logits);
    const real* row = lv.row_ptr(lv.shape[0] - 1);
    int best = 0;
    for (int j = 1; j < lv.shape[1]; ++j)
      if (row[j] > row[best]) best = j;
    if (best == vocab.eos()) break;
    emitted.push_back(best);
  }
  return detokenize(vocab, emitted);
}

}  // namespace svqa
