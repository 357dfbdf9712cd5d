#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "svqa/baseline.hpp"
#include "svqa/model.hpp"

namespace svqa {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Versioned section container: magic, version, then named byte sections.
// "meta" holds a JSON header (dims, vocab hash, parameter checksums); "theta"
// and "vstar" hold little-endian raw parameter payloads. Tuning rewrites the
// file with the theta section copied through byte-for-byte.
namespace ckpt {

inline constexpr char kMagic[8] = {'S', 'V', 'Q', 'A', 'C', 'K', 'P', '1'};
inline constexpr std::uint32_t kVersion = 1;

using Sections = std::map<std::string, std::vector<unsigned char>>;

inline void write_file(const std::filesystem::path& path, const Sections& sections) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("checkpoint: cannot open " + path.string() + " for write");
  out.write(kMagic, sizeof kMagic);
  auto put_u32 = [&out](std::uint32_t v) {
    unsigned char b[4];
    std::memcpy(b, &v, 4);
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  auto put_u64 = [&out](std::uint64_t v) {
    unsigned char b[8];
    std::memcpy(b, &v, 8);
    out.write(reinterpret_cast<const char*>(b), 8);
  };
  put_u32(kVersion);
  put_u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, payload] : sections) {
    put_u32(static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(payload.size());
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
  }
  if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

inline Sections read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw CheckpointError("checkpoint: bad magic in " + path.string());
  auto get_u32 = [&in]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto get_u64 = [&in]() {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  const std::uint32_t version = get_u32();
  if (version != kVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t count = get_u32();
  Sections sections;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32();
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint64_t payload_len = get_u64();
    std::vector<unsigned char> payload(payload_len);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload_len));
    if (!in) throw CheckpointError("checkpoint: truncated section in " + path.string());
    sections.emplace(std::move(name), std::move(payload));
  }
  return sections;
}

inline const std::vector<unsigned char>& require(const Sections& s, const std::string& name,
                                                 const std::filesystem::path& path) {
  auto it = s.find(name);
  if (it == s.end())
    throw CheckpointError("checkpoint: missing section '" + name + "' in " + path.string());
  return it->second;
}

inline std::vector<unsigned char> pack_tensors(const std::vector<const Tensor*>& tensors) {
  std::size_t total = 0;
  for (const Tensor* t : tensors) total += t->data.size() * sizeof(real);
  std::vector<unsigned char> bytes(total);
  std::size_t off = 0;
  for (const Tensor* t : tensors) {
    const std::size_t len = t->data.size() * sizeof(real);
    std::memcpy(bytes.data() + off, t->data.data(), len);
    off += len;
  }
  return bytes;
}

inline void unpack_tensors(const std::vector<unsigned char>& bytes,
                           const std::vector<Tensor*>& tensors, const char* what) {
  std::size_t total = 0;
  for (Tensor* t : tensors) total += t->data.size() * sizeof(real);
  if (total != bytes.size())
    throw CheckpointError(std::string("checkpoint: ") + what + " payload size mismatch");
  std::size_t off = 0;
  for (Tensor* t : tensors) {
    const std::size_t len = t->data.size() * sizeof(real);
    std::memcpy(t->data.data(), bytes.data() + off, len);
    off += len;
  }
}

}  // namespace ckpt

struct VlmCheckpoint {
  ModelParams params;
  bool has_vstar = false;
  PromptEmbedding vstar;  // valid when has_vstar
  nlohmann::json meta;
};

inline nlohmann::ordered_json model_meta(const ModelParams& p) {
  return nlohmann::ordered_json{{"kind", "vlm"},
                                {"dim", p.config.dim},
                                {"blocks", p.config.blocks},
                                {"heads", p.config.heads},
                                {"patch", p.config.patch},
                                {"max_context", p.config.max_context},
                                {"image_size", p.config.image_size},
                                {"vocab_size", p.vocab_size},
                                {"vocab_hash", hex64(Vocab::standard().hash())},
                                {"theta_checksum", hex64(p.checksum())}};
}

inline void save_vlm_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                                const PromptEmbedding* vstar,
                                nlohmann::ordered_json extra_meta = {}) {
  nlohmann::ordered_json meta = model_meta(params);
  for (auto& [k, v] : extra_meta.items()) meta[k] = v;
  std::vector<const Tensor*> tensors;
  params.visit([&tensors](const std::string&, const Tensor& t) { tensors.push_back(&t); });
  ckpt::Sections sections;
  const std::string meta_dump = meta.dump();
  sections["meta"].assign(meta_dump.begin(), meta_dump.end());
  sections["theta"] = ckpt::pack_tensors(tensors);
  if (vstar != nullptr) sections["vstar"] = ckpt::pack_tensors({&vstar->v});
  ckpt::write_file(path, sections);
}

inline VlmCheckpoint load_vlm_checkpoint(const std::filesystem::path& path) {
  const ckpt::Sections sections = ckpt::read_file(path);
  const auto& meta_bytes = ckpt::require(sections, "meta", path);
  VlmCheckpoint out;
  out.meta = nlohmann::json::parse(std::string(meta_bytes.begin(), meta_bytes.end()));
  if (out.meta.value("kind", "") != "vlm")
    throw CheckpointError("checkpoint: not a vlm checkpoint: " + path.string());
  ModelConfig cfg;
  cfg.dim = out.meta.at("dim").get<int>();
  cfg.blocks = out.meta.at("blocks").get<int>();
  cfg.heads = out.meta.at("heads").get<int>();
  cfg.patch = out.meta.at("patch").get<int>();
  cfg.max_context = out.meta.at("max_context").get<int>();
  cfg.image_size = out.meta.at("image_size").get<int>();
  const int vocab_size = out.meta.at("vocab_size").get<int>();
  if (out.meta.at("vocab_hash").get<std::string>() != hex64(Vocab::standard().hash()))
    throw CheckpointError("checkpoint: vocabulary hash mismatch in " + path.string());
  out.params = ModelParams::init(cfg, vocab_size, 0);
  std::vector<Tensor*> tensors;
  out.params.visit([&tensors](const std::string&, Tensor& t) { tensors.push_back(&t); });
  ckpt::unpack_tensors(ckpt::require(sections, "theta", path), tensors, "theta");
  if (out.meta.at("theta_checksum").get<std::string>() != hex64(out.params.checksum()))
    throw CheckpointError("checkpoint: theta checksum mismatch in " + path.string());
  if (sections.count("vstar") != 0) {
    out.has_vstar = true;
    out.vstar.v = Tensor::zeros({1, cfg.dim});
    std::vector<Tensor*> vt{&out.vstar.v};
    ckpt::unpack_tensors(sections.at("vstar"), vt, "vstar");
  }
  return out;
}

inline void save_baseline_checkpoint(const std::filesystem::path& path,
                                     const BaselineParams& params,
                                     nlohmann::ordered_json extra_meta = {}) {
  nlohmann::ordered_json meta{{"kind", "baseline"},
                              {"c1", params.config.c1},
                              {"c2", params.config.c2},
                              {"kernel", params.config.kernel},
                              {"stride", params.config.stride},
                              {"pad", params.config.pad},
                              {"resolution", params.resolution},
                              {"checksum", hex64(params.checksum())}};
  for (auto& [k, v] : extra_meta.items()) meta[k] = v;
  std::vector<const Tensor*> tensors;
  params.visit([&tensors](const std::string&, const Tensor& t) { tensors.push_back(&t); });
  ckpt::Sections sections;
  const std::string meta_dump = meta.dump();
  sections["meta"].assign(meta_dump.begin(), meta_dump.end());
  sections["baseline"] = ckpt::pack_tensors(tensors);
  ckpt::write_file(path, sections);
}

inline BaselineParams load_baseline_checkpoint(const std::filesystem::path& path,
                                               nlohmann::json* meta_out = nullptr) {
  const ckpt::Sections sections = ckpt::read_file(path);
  const auto& meta_bytes = ckpt::require(sections, "meta", path);
  const nlohmann::json meta = nlohmann::json::parse(std::string(meta_bytes.begin(), meta_bytes.end()));
  if (meta.value("kind", "") != "baseline")
    throw CheckpointError("checkpoint: not a baseline checkpoint: " + path.string());
  BaselineConfig cfg;
  cfg.c1 = meta.at("c1").get<int>();
  cfg.c2 = meta.at("c2").get<int>();
  cfg.kernel = meta.at("kernel").get<int>();
  cfg.stride = meta.at("stride").get<int>();
  cfg.pad = meta.at("pad").get<int>();
  BaselineParams params = BaselineParams::init(cfg, meta.at("resolution").get<int>(), 0);
  std::vector<Tensor*> tensors;
  params.visit([&tensors](const std::string&, Tensor& t) { tensors.push_back(&t); });
  ckpt::unpack_tensors(ckpt::require(sections, "baseline", path), tensors, "baseline");
  if (meta.at("checksum").get<std::string>() != hex64(params.checksum()))
    throw CheckpointError("checkpoint: baseline checksum mismatch in " + path.string());
  if (meta_out != nullptr) *meta_out = meta;
  return params;
}

// Raw bytes of one section, for byte-level freeze comparisons.
inline std::vector<unsigned char> checkpoint_section(const std::filesystem::path& path,
                                                     const std::string& name) {
  const ckpt::Sections sections = ckpt::read_file(path);
  return ckpt::require(sections, name, path);
}

}  // namespace svqa
