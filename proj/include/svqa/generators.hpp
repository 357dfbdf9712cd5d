#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace svqa {

// Source labels: the real class, six generators present in training, and six
// generators held out for the generalization protocol.
enum class GeneratorId {
  Real,
  ProGan,
  StyleGan,
  DiffProjectedGan,
  Ldm,
  Glide,
  Sd14,
  Adm,
  Ddpm,
  Iddpm,
  Pndm,
  DiffStyleGan2,
  ProjectedGan,
};

enum class Family { None, Gan, Diffusion };

inline constexpr std::array<GeneratorId, 6> kSeenFakes{
    GeneratorId::Ldm,      GeneratorId::Sd14,     GeneratorId::Glide,
    GeneratorId::ProGan,   GeneratorId::StyleGan, GeneratorId::DiffProjectedGan,
};

inline constexpr std::array<GeneratorId, 6> kUnseenFakes{
    GeneratorId::Adm,  GeneratorId::Ddpm,          GeneratorId::Iddpm,
    GeneratorId::Pndm, GeneratorId::DiffStyleGan2, GeneratorId::ProjectedGan,
};

inline constexpr std::array<GeneratorId, 12> kAllFakes{
    GeneratorId::Ldm,  GeneratorId::Sd14,          GeneratorId::Glide,
    GeneratorId::ProGan, GeneratorId::StyleGan,    GeneratorId::DiffProjectedGan,
    GeneratorId::Adm,  GeneratorId::Ddpm,          GeneratorId::Iddpm,
    GeneratorId::Pndm, GeneratorId::DiffStyleGan2, GeneratorId::ProjectedGan,
};

inline constexpr std::array<GeneratorId, 13> kAllGenerators{
    GeneratorId::Real, GeneratorId::Ldm,           GeneratorId::Sd14,
    GeneratorId::Glide, GeneratorId::ProGan,       GeneratorId::StyleGan,
    GeneratorId::DiffProjectedGan, GeneratorId::Adm, GeneratorId::Ddpm,
    GeneratorId::Iddpm, GeneratorId::Pndm,         GeneratorId::DiffStyleGan2,
    GeneratorId::ProjectedGan,
};

inline bool is_fake(GeneratorId g) { return g != GeneratorId::Real; }

inline bool is_seen_fake(GeneratorId g) {
  for (GeneratorId s : kSeenFakes)
    if (s == g) return true;
  return false;
}

inline Family family_of(GeneratorId g) {
  switch (g) {
    case GeneratorId::Real:
      return Family::None;
    case GeneratorId::ProGan:
    case GeneratorId::StyleGan:
    case GeneratorId::DiffProjectedGan:
    case GeneratorId::DiffStyleGan2:
    case GeneratorId::ProjectedGan:
      return Family::Gan;
    default:
      return Family::Diffusion;
  }
}

// Display name used inside answer templates ("stable diffusion" is two words).
inline std::string_view name_of(GeneratorId g) {
  switch (g) {
    case GeneratorId::Real: return "real";
    case GeneratorId::ProGan: return "progan";
    case GeneratorId::StyleGan: return "stylegan";
    case GeneratorId::DiffProjectedGan: return "diff-projectedgan";
    case GeneratorId::Ldm: return "ldm";
    case GeneratorId::Glide: return "glide";
    case GeneratorId::Sd14: return "stable diffusion";
    case GeneratorId::Adm: return "adm";
    case GeneratorId::Ddpm: return "ddpm";
    case GeneratorId::Iddpm: return "iddpm";
    case GeneratorId::Pndm: return "pndm";
    case GeneratorId::DiffStyleGan2: return "diff-stylegan2";
    case GeneratorId::ProjectedGan: return "projectedgan";
  }
  throw std::logic_error("name_of: bad generator");
}

// Filesystem/manifest identifier (no spaces).
inline std::string_view slug_of(GeneratorId g) {
  return g == GeneratorId::Sd14 ? std::string_view("sd14") : name_of(g);
}

inline std::optional<GeneratorId> generator_from_slug(std::string_view s) {
  for (GeneratorId g : kAllGenerators)
    if (slug_of(g) == s) return g;
  return std::nullopt;
}

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::None: return "none";
    case Family::Gan: return "gan";
    case Family::Diffusion: return "diffusion";
  }
  throw std::logic_error("family_name: bad family");
}

}  // namespace svqa
