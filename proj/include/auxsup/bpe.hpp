// auxsup/bpe.hpp
//
// Copyright 2026 The auxsup Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace auxsup {

// Byte-pair-encoding subword model. The end-of-word marker is a suffix on the
// word-final token, which makes merging tokens back into words unambiguous.
// Unknown characters map to a reserved token instead of failing.
struct BpeModel {
  static constexpr const char* kEow = "</w>";
  static constexpr const char* kEos = "</s>";
  static constexpr const char* kUnk = "<unk>";

  std::vector<std::pair<std::string, std::string>> merges;  // order is significant
  std::unordered_map<std::string, int> vocab;               // token -> dense id
  std::vector<std::string> id_to_token;

  int eos_id() const { return vocab.at(kEos); }
  std::size_t vocab_size() const { return id_to_token.size(); }

  const std::string& token_of(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token.size())
      throw std::invalid_argument("bpe: invalid token id " + std::to_string(id));
    return id_to_token[static_cast<std::size_t>(id)];
  }

  bool operator==(const BpeModel& other) const {
    return merges == other.merges && id_to_token == other.id_to_token;
  }
};

namespace detail {

// Initial symbol sequence of a word: single characters, with the end-of-word
// marker attached to the final one.
inline std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> symbols;
  for (std::size_t i = 0; i < word.size(); ++i) {
    std::string s(1, word[i]);
    if (i + 1 == word.size()) s += BpeModel::kEow;
    symbols.push_back(std::move(s));
  }
  return symbols;
}

// One left-to-right non-overlapping pass of a single merge rule.
inline void apply_merge(std::vector<std::string>& symbols, const std::string& a,
                        const std::string& b) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  std::size_t i = 0;
  while (i < symbols.size()) {
    if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
      out.push_back(a + b);
      i += 2;
    } else {
      out.push_back(symbols[i]);
      ++i;
    }
  }
  symbols = std::move(out);
}

}  // namespace detail

// Greedy highest-frequency pair merging over the transcript words, with the
// lexicographically smallest pair breaking frequency ties.
inline BpeModel learn_bpe(const std::vector<std::vector<std::string>>& transcripts,
                          int target_merges) {
  if (transcripts.empty()) throw std::invalid_argument("learn_bpe: no transcripts");
  if (target_merges < 0) throw std::invalid_argument("learn_bpe: target_merges must be >= 0");

  std::map<std::string, long> word_freq;
  for (const auto& words : transcripts)
    for (const auto& w : words)
      if (!w.empty()) ++word_freq[w];
  if (word_freq.empty()) throw std::invalid_argument("learn_bpe: transcripts contain no words");

  std::vector<std::pair<std::vector<std::string>, long>> items;
  std::map<char, bool> alphabet;
  for (const auto& [word, freq] : word_freq) {
    for (char c : word) alphabet[c] = true;
    items.emplace_back(detail::word_symbols(word), freq);
  }

  BpeModel model;
  for (int step = 0; step < target_merges; ++step) {
    std::map<std::pair<std::string, std::string>, long> pair_freq;
    for (const auto& [symbols, freq] : items)
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i)
        pair_freq[{symbols[i], symbols[i + 1]}] += freq;
    if (pair_freq.empty()) break;
    // std::map iterates keys in ascending order, so the first maximum is the
    // lexicographically smallest pair with the top count.
    auto best = pair_freq.begin();
    for (auto it = pair_freq.begin(); it != pair_freq.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [a, b] = best->first;
    model.merges.emplace_back(a, b);
    for (auto& [symbols, freq] : items) detail::apply_merge(symbols, a, b);
  }

  // Vocabulary: every character symbol in both positions, the merge outputs,
  // and the reserved unknown/sentence-end entries. Ids are dense.
  auto add_token = [&model](const std::string& tok) {
    if (model.vocab.emplace(tok, static_cast<int>(model.id_to_token.size())).second)
      model.id_to_token.push_back(tok);
  };
  for (const auto& [c, seen] : alphabet) {
    (void)seen;
    add_token(std::string(1, c));
    add_token(std::string(1, c) + BpeModel::kEow);
  }
  for (const auto& [a, b] : model.merges) add_token(a + b);
  add_token(BpeModel::kUnk);
  add_token(std::string(BpeModel::kUnk) + BpeModel::kEow);
  add_token(BpeModel::kEos);
  return model;
}

// Greedy application of the learned merges in order. Characters unseen at
// learn time become the reserved unknown token.
inline std::vector<int> encode(const std::vector<std::string>& words, const BpeModel& model) {
  std::vector<int> ids;
  for (const auto& word : words) {
    if (word.empty()) continue;
    std::vector<std::string> symbols;
    for (std::size_t i = 0; i < word.size(); ++i) {
      std::string base(1, word[i]);
      const bool last = i + 1 == word.size();
      if (!model.vocab.count(base)) base = BpeModel::kUnk;
      symbols.push_back(last ? base + BpeModel::kEow : base);
    }
    for (const auto& [a, b] : model.merges) detail::apply_merge(symbols, a, b);
    for (const auto& s : symbols) {
      const auto it = model.vocab.find(s);
      if (it == model.vocab.end())
        throw std::logic_error("bpe: produced token outside vocabulary: " + s);
      ids.push_back(it->second);
    }
  }
  return ids;
}

// Inverse of encode for word sequences over the learn-time alphabet. The
// sentence-end token is skipped.
inline std::vector<std::string> merge_tokens(const std::vector<int>& ids, const BpeModel& model) {
  std::vector<std::string> words;
  std::string current;
  const std::string eow = BpeModel::kEow;
  for (int id : ids) {
    const std::string& tok = model.token_of(id);
    if (tok == BpeModel::kEos) continue;
    if (tok.size() >= eow.size() && tok.compare(tok.size() - eow.size(), eow.size(), eow) == 0) {
      current += tok.substr(0, tok.size() - eow.size());
      words.push_back(current);
      current.clear();
    } else {
      current += tok;
    }
  }
  if (!current.empty()) words.push_back(current);
  return words;
}

// Model file: `#version 1`, one merge pair per line, then a `#vocab` section
// of `token id` lines.
inline void write_bpe_model(const std::string& path, const BpeModel& model) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("bpe: cannot write " + path);
  os << "#version 1\n";
  for (const auto& [a, b] : model.merges) os << a << " " << b << "\n";
  os << "#vocab\n";
  for (std::size_t id = 0; id < model.id_to_token.size(); ++id)
    os << model.id_to_token[id] << " " << id << "\n";
}

inline BpeModel read_bpe_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("bpe: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("#version", 0) != 0)
    throw std::runtime_error("bpe: missing #version header in " + path);
  BpeModel model;
  bool in_vocab = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line == "#vocab") {
      in_vocab = true;
      continue;
    }
    std::istringstream ls(line);
    if (!in_vocab) {
      std::string a, b;
      if (!(ls >> a >> b)) throw std::runtime_error("bpe: bad merge line in " + path + ": " + line);
      model.merges.emplace_back(a, b);
    } else {
      std::string tok;
      int id;
      if (!(ls >> tok >> id)) throw std::runtime_error("bpe: bad vocab line in " + path + ": " + line);
      if (id != static_cast<int>(model.id_to_token.size()))
        throw std::runtime_error("bpe: non-dense vocab ids in " + path);
      model.vocab[tok] = id;
      model.id_to_token.push_back(tok);
    }
  }
  if (model.id_to_token.empty()) throw std::runtime_error("bpe: empty vocabulary in " + path);
  return model;
}

}  // namespace auxsup
