#include "langseg/text_encoder.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "langseg/errors.hpp"
#include "langseg/ops.hpp"

namespace langseg {

Vocabulary::Vocabulary() {
  push("<PAD>");
  push("<UNK>");
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const std::string& w : words) {
    if (!index_.count(w)) push(w);
  }
}

void Vocabulary::push(const std::string& token) {
  index_.emplace(token, tokens_.size());
  tokens_.push_back(token);
}

std::size_t Vocabulary::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_at(std::size_t id) const {
  if (id >= tokens_.size()) throw DataError("vocabulary id out of range");
  return tokens_[id];
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) != 0;
}

void Vocabulary::save(std::ostream& out) const {
  for (const std::string& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < 2 || lines[0] != "<PAD>" || lines[1] != "<UNK>") {
    throw DataError("vocabulary file must start with <PAD> and <UNK>");
  }
  Vocabulary v;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) throw DataError("vocabulary file has an empty token line");
    if (v.index_.count(lines[i])) throw DataError("duplicate vocabulary token: " + lines[i]);
    v.push(lines[i]);
  }
  return v;
}

void Vocabulary::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  save(out);
}

Vocabulary Vocabulary::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary file: " + path);
  return load(in);
}

TokenSequence tokenize(const std::string& prompt, const Vocabulary& vocab,
                       std::size_t max_len) {
  TokenSequence seq;
  seq.ids.reserve(max_len);
  std::string word;
  auto flush = [&] {
    if (!word.empty() && seq.ids.size() < max_len) {
      seq.ids.push_back(vocab.lookup(word));
    }
    word.clear();
  };
  for (char ch : prompt) {
    unsigned char u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      word.push_back(static_cast<char>(std::tolower(u)));
    } else {
      flush();  // whitespace and punctuation both end a word
    }
  }
  flush();
  seq.ids.resize(max_len, kPadId);
  return seq;
}

void init_text_encoder(ParamStore& params, std::size_t vocab_size,
                       std::size_t embed_dim, SplitMix64& rng) {
  // modest rows: mean pooling attenuates the bag, so the prompt is audible
  // but the embedding space still has to be organized by training
  params.add("text_encoder.embedding",
             Tensor::uniform({vocab_size, embed_dim}, -0.3, 0.3, rng));
  double a_proj = std::sqrt(6.0 / double(embed_dim + embed_dim));
  params.add("text_encoder.proj.weight",
             Tensor::uniform({embed_dim, embed_dim}, -a_proj, a_proj, rng));
  params.add("text_encoder.proj.bias", Tensor({embed_dim}));
}

Var encode_text(const TokenSequence& seq, ParamStore& params) {
  Var pooled = embed_mean(params.var("text_encoder.embedding"), seq.ids, kPadId);
  return tanh(linear(pooled, params.var("text_encoder.proj.weight"),
                     params.var("text_encoder.proj.bias")));
}

}  // namespace langseg
