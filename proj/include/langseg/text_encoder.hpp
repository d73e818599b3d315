#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "langseg/autodiff.hpp"
#include "langseg/tensor.hpp"

namespace langseg {

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;

// Closed word list; ids are line numbers, 0 and 1 reserved for <PAD>/<UNK>.
class Vocabulary {
 public:
  Vocabulary();  // just the two reserved entries
  explicit Vocabulary(const std::vector<std::string>& words);  // reserved + words

  std::size_t size() const { return tokens_.size(); }
  std::size_t lookup(const std::string& token) const;  // kUnkId if absent
  const std::string& token_at(std::size_t id) const;
  bool contains(const std::string& token) const;

  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);
  void save_file(const std::string& path) const;
  static Vocabulary load_file(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  void push(const std::string& token);
};

struct TokenSequence {
  std::vector<std::size_t> ids;  // PAD-filled to max_len
};

inline constexpr std::size_t kMaxPromptTokens = 32;

// Lowercase, split on whitespace and punctuation, map (UNK for unknown),
// truncate or PAD to max_len.
TokenSequence tokenize(const std::string& prompt, const Vocabulary& vocab,
                       std::size_t max_len = kMaxPromptTokens);

// Registers text_encoder.{embedding, proj.weight, proj.bias} with seeded init.
void init_text_encoder(ParamStore& params, std::size_t vocab_size,
                       std::size_t embed_dim, SplitMix64& rng);

// Mean of non-PAD embedding rows (all-PAD -> zero), then tanh(x W + b).
Var encode_text(const TokenSequence& seq, ParamStore& params);

}  // namespace langseg
