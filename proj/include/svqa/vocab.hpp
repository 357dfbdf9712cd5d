#pragma once

#include <cctype>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace svqa {

struct UnknownTokenError : std::runtime_error {
  explicit UnknownTokenError(const std::string& tok)
      : std::runtime_error("unknown token: \"" + tok + "\""), token(tok) {}
  std::string token;
};

enum class TokenRole { Image, Prompt, Answer };

struct TokenSequence {
  std::vector<int> ids;
  std::vector<TokenRole> roles;

  std::size_t size() const { return ids.size(); }
  void append(int id, TokenRole role) {
    ids.push_back(id);
    roles.push_back(role);
  }
};

// Lowercase word tokens; ',' '.' '?' are standalone tokens; '-' and '*' are
// word characters so hyphenated generator names and "s*" stay single tokens.
inline std::vector<std::string> word_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (char ch : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '*') {
      word.push_back(c);
    } else if (c == ',' || c == '.' || c == '?') {
      flush();
      out.emplace_back(1, c);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

// Closed word-level vocabulary over the question/answer templates, generator
// and family names, plus specials.
class Vocab {
 public:
  static const Vocab& standard() {
    static const Vocab v{{
        "<bos>", "<eos>", "<pad>", "<img>", "s*",
        "is", "this", "photo", "fake", ",", "and", "what", "its", "source",
        "generator", "?", "no", "it", "a", "real", "sample", ".", "yes",
        "generated", "by", "model", "progan", "stylegan", "diff-projectedgan",
        "ldm", "glide", "stable", "diffusion", "gan", "adm", "ddpm", "iddpm",
        "pndm", "diff-stylegan2", "projectedgan",
    }};
    return v;
  }

  explicit Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!by_token_.emplace(tokens_[i], static_cast<int>(i)).second)
        throw std::logic_error("vocab: duplicate token");
    }
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  int id(const std::string& tok) const {
    auto it = by_token_.find(tok);
    if (it == by_token_.end()) throw UnknownTokenError(tok);
    return it->second;
  }

  bool contains(const std::string& tok) const { return by_token_.count(tok) != 0; }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocab: bad token id");
    return tokens_[static_cast<std::size_t>(id)];
  }

  int bos() const { return 0; }
  int eos() const { return 1; }
  int pad() const { return 2; }
  int img() const { return 3; }
  int pseudo() const { return 4; }

  bool is_special(int id) const { return id >= 0 && id <= 3; }  // s* is renderable

  // FNV-1a over the token list; pins checkpoints to this vocabulary.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const std::string& t : tokens_) {
      for (char c : t) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
      }
      h ^= 0xff;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> by_token_;
};

inline std::vector<int> encode_words(const Vocab& vocab, std::string_view text) {
  std::vector<int> ids;
  for (const std::string& w : word_tokenize(text)) ids.push_back(vocab.id(w));
  return ids;
}

inline TokenSequence tokenize(const Vocab& vocab, std::string_view text, TokenRole role) {
  TokenSequence seq;
  for (int id : encode_words(vocab, text)) seq.append(id, role);
  return seq;
}

// Join tokens with spaces, attaching ',' '.' '?' to the preceding word.
// Specials other than s* are skipped.
inline std::string detokenize(const Vocab& vocab, const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (vocab.is_special(id)) continue;
    const std::string& tok = vocab.token(id);
    const bool punct = tok == "," || tok == "." || tok == "?";
    if (!out.empty() && !punct) out.push_back(' ');
    out += tok;
  }
  return out;
}

}  // namespace svqa
