// tests/bpe_test.cpp
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

#include "auxsup/bpe.hpp"

#include <gtest/gtest.h>

#include <set>

#include "auxsup/rng.hpp"

namespace auxsup {
namespace {

std::vector<std::vector<std::string>> corpus(std::initializer_list<const char*> lines) {
  std::vector<std::vector<std::string>> out;
  for (const char* line : lines) {
    std::vector<std::string> words;
    std::istringstream is(line);
    std::string w;
    while (is >> w) words.push_back(w);
    out.push_back(std::move(words));
  }
  return out;
}

TEST(BpeLearnTest, ZeroMergesGivesCharacterTokens) {
  BpeModel model = learn_bpe(corpus({"abc ab"}), 0);
  EXPECT_TRUE(model.merges.empty());
  std::vector<int> ids = encode({"abc"}, model);
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(model.token_of(ids[0]), "a");
  EXPECT_EQ(model.token_of(ids[1]), "b");
  EXPECT_EQ(model.token_of(ids[2]), "c</w>");
}

TEST(BpeLearnTest, FirstMergeIsMostFrequentPair) {
  // "aaab" twice: pair (a,a) occurs 4 times, (a,b</w>) twice.
  BpeModel model = learn_bpe(corpus({"aaab aaab"}), 1);
  ASSERT_EQ(model.merges.size(), 1u);
  EXPECT_EQ(model.merges[0].first, "a");
  EXPECT_EQ(model.merges[0].second, "a");
}

TEST(BpeLearnTest, DeterministicAcrossRuns) {
  auto text = corpus({"the cat sat on the mat", "the cat ran"});
  BpeModel a = learn_bpe(text, 20);
  BpeModel b = learn_bpe(text, 20);
  EXPECT_TRUE(a == b);
}

TEST(BpeEncodeTest, GreedyMergeApplicationInLearnedOrder) {
  BpeModel model = learn_bpe(corpus({"aaab aaab"}), 1);
  std::vector<int> ids = encode({"aaab"}, model);
  std::vector<std::string> tokens;
  for (int id : ids) tokens.push_back(model.token_of(id));
  EXPECT_EQ(tokens, (std::vector<std::string>{"aa", "a", "b</w>"}));
}

TEST(BpeEncodeTest, EmptyInOutAndRoundTrip) {
  auto text = corpus({"hello world", "held well"});
  BpeModel model = learn_bpe(text, 10);
  EXPECT_TRUE(encode({}, model).empty());
  EXPECT_TRUE(merge_tokens({}, model).empty());
  for (const auto& words : text) EXPECT_EQ(merge_tokens(encode(words, model), model), words);
}

TEST(BpeEncodeTest, UnknownCharactersMapToReservedToken) {
  BpeModel model = learn_bpe(corpus({"abc"}), 2);
  std::vector<int> ids = encode({"axz"}, model);
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(model.token_of(ids[1]), BpeModel::kUnk);
  EXPECT_EQ(model.token_of(ids[2]), std::string(BpeModel::kUnk) + BpeModel::kEow);
}

TEST(BpeEncodeTest, InvalidIdRejected) {
  BpeModel model = learn_bpe(corpus({"ab"}), 0);
  EXPECT_THROW(merge_tokens({static_cast<int>(model.vocab_size())}, model),
               std::invalid_argument);
  EXPECT_THROW(merge_tokens({-1}, model), std::invalid_argument);
}

TEST(BpeInvariantTest, TokenCountNeverExceedsCharacterCount) {
  auto text = corpus({"banana bandana", "ananas and bananas"});
  BpeModel model = learn_bpe(text, 30);
  for (const auto& words : text) {
    std::size_t chars = 0;
    for (const auto& w : words) chars += w.size();
    EXPECT_LE(encode(words, model).size(), chars);
  }
}

TEST(BpeInvariantTest, VocabularySizeBound) {
  auto text = corpus({"some words with several letters", "more words here"});
  const int merges = 15;
  BpeModel model = learn_bpe(text, merges);
  std::set<char> alphabet;
  for (const auto& words : text)
    for (const auto& w : words)
      for (char c : w) alphabet.insert(c);
  // Character symbols (plain and end-of-word marked, including the unknown
  // placeholder's two forms) + merge outputs + sentence-end.
  const std::size_t char_symbols = 2 * (alphabet.size() + 1);
  EXPECT_LE(model.vocab_size(), char_symbols + merges + 2);
  // Ids are dense in [0, vocab size).
  std::set<int> ids;
  for (const auto& [tok, id] : model.vocab) {
    (void)tok;
    ids.insert(id);
  }
  EXPECT_EQ(ids.size(), model.vocab_size());
  EXPECT_EQ(*ids.begin(), 0);
  EXPECT_EQ(*ids.rbegin(), static_cast<int>(model.vocab_size()) - 1);
}

TEST(BpeInvariantTest, RoundTripOnRandomStringsOverLearnedAlphabet) {
  auto text = corpus({"abcd bcda cdab dabc", "aabb ccdd abab cdcd"});
  BpeModel model = learn_bpe(text, 25);
  Rng rng(53);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> words;
    const int num_words = 1 + static_cast<int>(rng.integer(4));
    for (int w = 0; w < num_words; ++w) {
      std::string word;
      const int len = 1 + static_cast<int>(rng.integer(8));
      for (int i = 0; i < len; ++i)
        word += static_cast<char>('a' + rng.integer(4));
      words.push_back(std::move(word));
    }
    EXPECT_EQ(merge_tokens(encode(words, model), model), words);
  }
}

TEST(BpeIoTest, ModelFileRoundTrip) {
  auto text = corpus({"spoken words here", "more spoken text"});
  BpeModel model = learn_bpe(text, 12);
  const std::string path = ::testing::TempDir() + "/model.bpe";
  write_bpe_model(path, model);
  BpeModel loaded = read_bpe_model(path);
  EXPECT_TRUE(model == loaded);
  for (const auto& words : text)
    EXPECT_EQ(encode(words, model), encode(words, loaded));
}

}  // namespace
}  // namespace auxsup
