#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "svqa/generators.hpp"
#include "svqa/vocab.hpp"

namespace svqa {

// Fixed question; the pseudo-word S* is appended before the question mark for
// the soft-tuned prompt.
inline std::string build_question(bool with_pseudo) {
  return with_pseudo ? "Is this photo fake, and what is its source generator S*?"
                     : "Is this photo fake, and what is its source generator?";
}

// Ground-truth answer templates. Held-out generators render with their own
// names; those strings serve as parser targets in the generalization report.
inline std::string render_label(GeneratorId g) {
  if (g == GeneratorId::Real) return "No, it is a real sample.";
  std::string out = "Yes, it is a fake sample generated by ";
  out += name_of(g);
  out += ", a ";
  out += family_name(family_of(g));
  out += " model.";
  return out;
}

enum class Verdict { Real, Fake, Unparseable };

// Structured reading of a free-form answer. A real verdict carries no source
// fields; a name/category disagreement is flagged, never repaired.
struct ParsedAnswer {
  Verdict verdict = Verdict::Unparseable;
  std::optional<GeneratorId> model_name;
  std::optional<Family> model_category;
  bool family_mismatch = false;

  bool is_fake() const { return verdict == Verdict::Fake; }
  bool is_real() const { return verdict == Verdict::Real; }
  bool unparseable() const { return verdict == Verdict::Unparseable; }
};

namespace detail {

struct NameMatch {
  GeneratorId gen;
  std::size_t begin = 0;  // token span [begin, end)
  std::size_t end = 0;
};

// Earliest token position wins; at equal positions the longer name wins, so
// "diff-projectedgan" (one token) and "stable diffusion" (two) never lose to
// their shorter relatives.
inline std::optional<NameMatch> find_model_name(const std::vector<std::string>& toks) {
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i] == "stable" && i + 1 < toks.size() && toks[i + 1] == "diffusion")
      return NameMatch{GeneratorId::Sd14, i, i + 2};
    for (GeneratorId g : kAllFakes) {
      if (g == GeneratorId::Sd14) continue;
      if (toks[i] == name_of(g)) return NameMatch{g, i, i + 1};
    }
  }
  return std::nullopt;
}

}  // namespace detail

// Lowercase token scan per the fixed output constraints: leading yes/no
// decides detection, otherwise the presence of "fake"/"real"; the first
// generator-name hit (longest match) gives the source; the first family word
// outside that name span gives the category. No signal at all is Unparseable.
inline ParsedAnswer parse_answer(std::string_view text) {
  ParsedAnswer out;
  std::vector<std::string> toks;
  for (std::string& t : word_tokenize(text)) {
    if (t == "," || t == "." || t == "?") continue;
    toks.push_back(std::move(t));
  }
  if (toks.empty()) return out;

  if (toks[0] == "yes") {
    out.verdict = Verdict::Fake;
  } else if (toks[0] == "no") {
    out.verdict = Verdict::Real;
  } else {
    for (const std::string& t : toks) {
      if (t == "fake") {
        out.verdict = Verdict::Fake;
        break;
      }
      if (t == "real") {
        out.verdict = Verdict::Real;
        break;
      }
    }
  }
  if (out.verdict != Verdict::Fake) return out;

  const auto match = detail::find_model_name(toks);
  if (match) out.model_name = match->gen;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (match && i >= match->begin && i < match->end) continue;
    if (toks[i] == "gan") {
      out.model_category = Family::Gan;
      break;
    }
    if (toks[i] == "diffusion") {
      out.model_category = Family::Diffusion;
      break;
    }
  }
  if (out.model_name && out.model_category)
    out.family_mismatch = family_of(*out.model_name) != *out.model_category;
  return out;
}

}  // namespace svqa
