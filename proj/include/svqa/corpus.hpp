#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "svqa/generators.hpp"
#include "svqa/rng.hpp"
#include "svqa/tensor.hpp"

namespace svqa {

struct CorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Split { Train, Test };

inline std::string_view split_name(Split s) { return s == Split::Train ? "train" : "test"; }

inline Split split_from_name(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw CorpusError("bad split name: " + std::string(s));
}

// Knobs for the procedural corpus. Defaults are the desk-scale protocol:
// 600/300 train/test per seen generator, a matched real pool, 300 test per
// held-out generator.
struct CorpusConfig {
  std::uint64_t seed = 7;
  int resolution = 32;
  int train_per_seen = 600;
  int test_per_seen = 300;
  int train_real = 3600;
  int test_real = 300;
  int test_per_unseen = 300;
  double alpha_family = 0.10;
  double alpha_model = 0.15;
  double noise_sigma = 0.05;
  double base_amp = 0.12;
  // Experiment flag: gives the ldm pattern a component along the gan family
  // pattern, reproducing the ldm-vs-gan confusion regime. Off by default.
  double ldm_gan_projection = 0.0;
};

inline void validate(const CorpusConfig& c) {
  if (c.resolution < 16) throw CorpusError("corpus: resolution must be >= 16");
  if (c.train_per_seen < 1 || c.test_per_seen < 1 || c.train_real < 1 || c.test_real < 1 ||
      c.test_per_unseen < 1)
    throw CorpusError("corpus: counts must be >= 1");
}

namespace detail {

struct Wave {
  int kx, ky;
  bool cosine;
};

// Distinct integer spatial frequencies, one wave per family and per model.
// Integer frequencies over the full grid make the bank exactly orthogonal;
// everything stays below the Nyquist band of the minimum resolution.
inline Wave wave_for_family(Family f) {
  return f == Family::Gan ? Wave{2, 5, true} : Wave{5, 2, true};
}

inline Wave wave_for_model(GeneratorId g) {
  switch (g) {
    case GeneratorId::Ldm: return {5, 5, false};
    case GeneratorId::Sd14: return {3, 6, false};
    case GeneratorId::Glide: return {6, 3, false};
    case GeneratorId::ProGan: return {3, 3, false};
    case GeneratorId::StyleGan: return {4, 2, false};
    case GeneratorId::DiffProjectedGan: return {2, 4, false};
    case GeneratorId::Adm: return {7, 2, false};
    case GeneratorId::Ddpm: return {2, 7, false};
    case GeneratorId::Iddpm: return {6, 6, false};
    case GeneratorId::Pndm: return {4, 7, false};
    case GeneratorId::DiffStyleGan2: return {7, 4, false};
    case GeneratorId::ProjectedGan: return {5, 7, false};
    default: throw CorpusError("wave_for_model: real has no fingerprint");
  }
}

inline Tensor render_wave(int n, const Wave& w, double phase = 0.0) {
  Tensor t = Tensor::zeros({n, n});
  const double step = 2.0 * kPi / n;
  const double shift = w.cosine ? kPi / 2.0 : 0.0;
  const double amp = std::sqrt(2.0);  // unit RMS over the grid
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      t.at(y, x) = static_cast<real>(amp * std::sin(step * (w.kx * x + w.ky * y) + shift + phase));
  return t;
}

}  // namespace detail

// Fixed spatial-frequency patterns, unit RMS and mutually orthogonal: one per
// family, one per model. Held-out generators share their family's pattern but
// carry fresh model patterns.
class FingerprintBank {
 public:
  explicit FingerprintBank(int resolution, double ldm_gan_projection = 0.0)
      : resolution_(resolution) {
    gan_ = detail::render_wave(resolution, detail::wave_for_family(Family::Gan));
    diffusion_ = detail::render_wave(resolution, detail::wave_for_family(Family::Diffusion));
    for (GeneratorId g : kAllFakes) {
      Tensor p = detail::render_wave(resolution, detail::wave_for_model(g));
      if (g == GeneratorId::Ldm && ldm_gan_projection != 0.0) {
        double ms = 0.0;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
          p.data[i] += static_cast<real>(ldm_gan_projection) * gan_.data[i];
          ms += static_cast<double>(p.data[i]) * p.data[i];
        }
        const real inv = static_cast<real>(1.0 / std::sqrt(ms / p.data.size()));
        for (real& v : p.data) v *= inv;  // back to unit RMS
      }
      models_.emplace(g, std::move(p));
    }
  }

  int resolution() const { return resolution_; }

  const Tensor& family_pattern(Family f) const {
    if (f == Family::Gan) return gan_;
    if (f == Family::Diffusion) return diffusion_;
    throw CorpusError("family_pattern: no pattern for real");
  }

  const Tensor& model_pattern(GeneratorId g) const {
    auto it = models_.find(g);
    if (it == models_.end()) throw CorpusError("model_pattern: real has no fingerprint");
    return it->second;
  }

 private:
  int resolution_;
  Tensor gan_, diffusion_;
  std::map<GeneratorId, Tensor> models_;
};

struct ImageSample {
  Tensor pixels;  // [H, W], values in [0, 1]
  GeneratorId label = GeneratorId::Real;
  Split split = Split::Train;
};

namespace detail {

// Low-frequency modes for the real-style base field; disjoint from every
// fingerprint frequency so the base is exactly orthogonal to the bank.
inline constexpr std::array<Wave, 5> kBaseWaves{
    Wave{0, 1, false}, Wave{1, 0, false}, Wave{1, 1, false}, Wave{1, 2, false}, Wave{2, 1, false}};

inline std::uint64_t sample_key(const CorpusConfig& cfg, GeneratorId label, Split split,
                                std::uint64_t index) {
  return mix_seed(cfg.seed, static_cast<std::uint64_t>(label),
                  static_cast<std::uint64_t>(split), index);
}

// Smooth random field around 0.5 plus broadband noise, clipped to [0, 1].
// Optional fingerprint patterns are mixed in before the noise.
inline Tensor synth_pixels(const CorpusConfig& cfg, GeneratorId label, Split split,
                           std::uint64_t index, const FingerprintBank* bank) {
  const int n = cfg.resolution;
  Rng rng(sample_key(cfg, label, split, index));
  Tensor img = Tensor::full({n, n}, real(0.5));
  const double step = 2.0 * kPi / n;
  for (const Wave& w : kBaseWaves) {
    const double amp = cfg.base_amp * rng.uniform(-1.0, 1.0);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        img.at(y, x) += static_cast<real>(amp * std::sin(step * (w.kx * x + w.ky * y) + phase));
  }
  if (label != GeneratorId::Real) {
    const Tensor& fam = bank->family_pattern(family_of(label));
    const Tensor& mod = bank->model_pattern(label);
    for (std::size_t i = 0; i < img.data.size(); ++i)
      img.data[i] += static_cast<real>(cfg.alpha_family) * fam.data[i] +
                     static_cast<real>(cfg.alpha_model) * mod.data[i];
  }
  for (real& v : img.data) {
    v += static_cast<real>(cfg.noise_sigma * rng.normal());
    v = std::min(real(1), std::max(real(0), v));
  }
  return img;
}

}  // namespace detail

inline ImageSample synth_real(const CorpusConfig& cfg, Split split, std::uint64_t index) {
  return {detail::synth_pixels(cfg, GeneratorId::Real, split, index, nullptr), GeneratorId::Real,
          split};
}

inline ImageSample synth_fake(const CorpusConfig& cfg, const FingerprintBank& bank,
                              GeneratorId gen, Split split, std::uint64_t index) {
  if (gen == GeneratorId::Real) throw CorpusError("synth_fake: generator must not be real");
  return {detail::synth_pixels(cfg, gen, split, index, &bank), gen, split};
}

// ---------------------------------------------------------------------------
// PGM files (binary P5, 8-bit) with a provenance comment line.
// ---------------------------------------------------------------------------

inline void write_pgm(const std::filesystem::path& path, const Tensor& pixels,
                      const std::string& provenance) {
  pixels.require_matrix();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("write_pgm: cannot open " + path.string());
  out << "P5\n";
  if (!provenance.empty()) out << "# " << provenance << "\n";
  out << pixels.cols() << " " << pixels.rows() << "\n255\n";
  std::string bytes;
  bytes.reserve(pixels.data.size());
  for (real v : pixels.data) {
    const double c = std::min(1.0, std::max(0.0, static_cast<double>(v)));
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CorpusError("write_pgm: write failed for " + path.string());
}

inline Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("read_pgm: cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw CorpusError("read_pgm: not a P5 file: " + path.string());
  auto next_int = [&in, &path]() {
    for (;;) {
      int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
        continue;
      }
      if (std::isspace(c)) {
        in.get();
        continue;
      }
      break;
    }
    long v = 0;
    in >> v;
    if (!in) throw CorpusError("read_pgm: bad header in " + path.string());
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (maxval != 255) throw CorpusError("read_pgm: expected maxval 255");
  in.get();  // single whitespace after header
  std::vector<char> bytes(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw CorpusError("read_pgm: truncated pixel data in " + path.string());
  Tensor t = Tensor::zeros({static_cast<int>(h), static_cast<int>(w)});
  for (std::size_t i = 0; i < bytes.size(); ++i)
    t.data[i] = static_cast<real>(static_cast<unsigned char>(bytes[i])) / real(255);
  return t;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct SampleRecord {
  std::string id;
  GeneratorId label = GeneratorId::Real;
  Split split = Split::Train;
  std::string path;  // relative to the manifest directory
};

struct CorpusManifest {
  CorpusConfig config;
  std::string config_hash;
  std::vector<SampleRecord> records;
  std::filesystem::path root;  // directory holding manifest.jsonl

  std::vector<const SampleRecord*> select(Split split) const {
    std::vector<const SampleRecord*> out;
    for (const SampleRecord& r : records)
      if (r.split == split) out.push_back(&r);
    return out;
  }

  // A testing subset's population: the subset's test fakes plus the shared
  // real test pool.
  std::vector<const SampleRecord*> test_population(GeneratorId gen) const {
    if (gen == GeneratorId::Real) throw CorpusError("test_population: subset must be fake");
    std::vector<const SampleRecord*> out;
    for (const SampleRecord& r : records) {
      if (r.split != Split::Test) continue;
      if (r.label == gen || r.label == GeneratorId::Real) out.push_back(&r);
    }
    return out;
  }
};

inline nlohmann::ordered_json corpus_config_to_json(const CorpusConfig& c) {
  return nlohmann::ordered_json{{"seed", c.seed},
                                {"resolution", c.resolution},
                                {"train_per_seen", c.train_per_seen},
                                {"test_per_seen", c.test_per_seen},
                                {"train_real", c.train_real},
                                {"test_real", c.test_real},
                                {"test_per_unseen", c.test_per_unseen},
                                {"alpha_family", c.alpha_family},
                                {"alpha_model", c.alpha_model},
                                {"noise_sigma", c.noise_sigma},
                                {"base_amp", c.base_amp},
                                {"ldm_gan_projection", c.ldm_gan_projection}};
}

inline CorpusConfig corpus_config_from_json(const nlohmann::json& j) {
  CorpusConfig c;
  c.seed = j.value("seed", c.seed);
  c.resolution = j.value("resolution", c.resolution);
  c.train_per_seen = j.value("train_per_seen", c.train_per_seen);
  c.test_per_seen = j.value("test_per_seen", c.test_per_seen);
  c.train_real = j.value("train_real", c.train_real);
  c.test_real = j.value("test_real", c.test_real);
  c.test_per_unseen = j.value("test_per_unseen", c.test_per_unseen);
  c.alpha_family = j.value("alpha_family", c.alpha_family);
  c.alpha_model = j.value("alpha_model", c.alpha_model);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.base_amp = j.value("base_amp", c.base_amp);
  c.ldm_gan_projection = j.value("ldm_gan_projection", c.ldm_gan_projection);
  return c;
}

inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string corpus_config_hash(const CorpusConfig& c) {
  const std::string dump = corpus_config_to_json(c).dump();
  return hex64(fnv1a(dump.data(), dump.size()));
}

namespace detail {

inline std::string sample_id(GeneratorId label, Split split, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", index);
  std::string id(slug_of(label));
  id += '_';
  id += split_name(split);
  id += '_';
  id += buf;
  return id;
}

}  // namespace detail

// Writes every image as PGM plus a JSONL manifest. Record order is fixed:
// real train, real test, each seen generator's train then test, each unseen
// generator's test. The real test records form the single pool shared by
// every testing subset.
inline CorpusManifest build_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir) {
  validate(cfg);
  CorpusManifest manifest;
  manifest.config = cfg;
  manifest.config_hash = corpus_config_hash(cfg);
  manifest.root = out_dir;

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw CorpusError("build_corpus: cannot create " + (out_dir / "images").string());

  const FingerprintBank bank(cfg.resolution, cfg.ldm_gan_projection);
  const std::string provenance =
      "config_hash=" + manifest.config_hash + " corpus_seed=" + std::to_string(cfg.seed);

  auto emit = [&](GeneratorId label, Split split, int count) {
    for (int i = 0; i < count; ++i) {
      const ImageSample s = label == GeneratorId::Real
                                ? synth_real(cfg, split, static_cast<std::uint64_t>(i))
                                : synth_fake(cfg, bank, label, split, static_cast<std::uint64_t>(i));
      SampleRecord rec;
      rec.id = detail::sample_id(label, split, i);
      rec.label = label;
      rec.split = split;
      rec.path = "images/" + rec.id + ".pgm";
      write_pgm(out_dir / rec.path, s.pixels, provenance);
      manifest.records.push_back(std::move(rec));
    }
  };

  emit(GeneratorId::Real, Split::Train, cfg.train_real);
  emit(GeneratorId::Real, Split::Test, cfg.test_real);
  for (GeneratorId g : kSeenFakes) {
    emit(g, Split::Train, cfg.train_per_seen);
    emit(g, Split::Test, cfg.test_per_seen);
  }
  for (GeneratorId g : kUnseenFakes) emit(g, Split::Test, cfg.test_per_unseen);

  std::ofstream out(out_dir / "manifest.jsonl", std::ios::binary);
  if (!out) throw CorpusError("build_corpus: cannot write manifest");
  nlohmann::ordered_json header{
      {"provenance",
       nlohmann::ordered_json{{"config_hash", manifest.config_hash}, {"corpus_seed", cfg.seed}}},
      {"config", corpus_config_to_json(cfg)}};
  out << header.dump() << "\n";
  for (const SampleRecord& r : manifest.records) {
    nlohmann::ordered_json line{{"id", r.id},
                                {"label", slug_of(r.label)},
                                {"family", family_name(family_of(r.label))},
                                {"split", split_name(r.split)},
                                {"path", r.path}};
    out << line.dump() << "\n";
  }
  if (!out) throw CorpusError("build_corpus: manifest write failed");
  return manifest;
}

inline CorpusManifest load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw CorpusError("load_manifest: cannot open " + manifest_path.string());
  CorpusManifest manifest;
  manifest.root = manifest_path.parent_path();
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    if (j.contains("provenance")) {
      manifest.config = corpus_config_from_json(j.at("config"));
      manifest.config_hash = j.at("provenance").at("config_hash").get<std::string>();
      have_header = true;
      continue;
    }
    SampleRecord rec;
    rec.id = j.at("id").get<std::string>();
    const auto label = generator_from_slug(j.at("label").get<std::string>());
    if (!label) throw CorpusError("load_manifest: unknown label in " + rec.id);
    rec.label = *label;
    rec.split = split_from_name(j.at("split").get<std::string>());
    rec.path = j.at("path").get<std::string>();
    manifest.records.push_back(std::move(rec));
  }
  if (!have_header) throw CorpusError("load_manifest: missing provenance header");
  return manifest;
}

inline Tensor load_sample_pixels(const CorpusManifest& manifest, const SampleRecord& rec) {
  return read_pgm(manifest.root / rec.path);
}

}  // namespace svqa
