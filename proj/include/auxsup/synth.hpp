// auxsup/synth.hpp
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

#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "auxsup/dataio.hpp"
#include "auxsup/rng.hpp"

namespace auxsup {

// Synthetic speech-like corpus with exact ground-truth frame alignments.
// Each phone emits frames around a fixed random prototype vector; words are
// spelled from phone letters so transcripts and pronunciations agree by
// construction.
struct SynthSpec {
  int phones = 10;               // inventory size, 2..26
  int lexicon_words = 20;
  int feat_dim = 16;
  int train_utterances = 200;
  int dev_utterances = 20;
  int test_utterances = 20;
  int words_min = 3, words_max = 6;
  int phones_per_word_min = 2, phones_per_word_max = 4;
  int frames_per_phone_min = 3, frames_per_phone_max = 6;
  double noise_level = 0.3;
  std::uint64_t seed = 1234;

  void validate() const {
    if (phones < 2 || phones > 26)
      throw std::invalid_argument("synth: phone inventory must be in [2, 26]");
    if (lexicon_words < 1) throw std::invalid_argument("synth: lexicon must be non-empty");
    if (feat_dim < 1) throw std::invalid_argument("synth: feat_dim must be >= 1");
    if (train_utterances < 1) throw std::invalid_argument("synth: need train utterances");
    if (words_min < 1 || words_max < words_min)
      throw std::invalid_argument("synth: bad words-per-utterance range");
    if (phones_per_word_min < 1 || phones_per_word_max < phones_per_word_min)
      throw std::invalid_argument("synth: bad phones-per-word range");
    if (frames_per_phone_min < 1 || frames_per_phone_max < frames_per_phone_min)
      throw std::invalid_argument("synth: bad frames-per-phone range");
    if (noise_level < 0) throw std::invalid_argument("synth: noise level must be >= 0");
  }
};

namespace detail {

inline char phone_letter(int index) { return static_cast<char>('a' + index); }

inline std::vector<std::vector<int>> make_lexicon(const SynthSpec& spec, Rng& rng) {
  std::set<std::vector<int>> seen;
  std::vector<std::vector<int>> lexicon;
  int attempts = 0;
  while (static_cast<int>(lexicon.size()) < spec.lexicon_words) {
    if (++attempts > spec.lexicon_words * 1000)
      throw std::invalid_argument("synth: cannot draw a distinct lexicon; enlarge the phone "
                                  "inventory or word length range");
    const int len = spec.phones_per_word_min +
                    static_cast<int>(rng.integer(spec.phones_per_word_max -
                                                 spec.phones_per_word_min + 1));
    std::vector<int> word(len);
    for (int i = 0; i < len; ++i) word[i] = static_cast<int>(rng.integer(spec.phones));
    if (seen.insert(word).second) lexicon.push_back(std::move(word));
  }
  return lexicon;
}

}  // namespace detail

inline PhoneMap synth_phone_map(int phones) {
  PhoneMap map;
  for (int p = 0; p < phones; ++p) map.label_to_index[std::string(1, detail::phone_letter(p))] = p;
  map.inventory_size = phones;
  return map;
}

// Deterministic given the spec seed; the split is disjoint by utterance id.
inline Corpus synth_corpus(const SynthSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0x5159));

  // Prototypes: fixed unit-norm random directions, drawn once.
  const std::size_t D = static_cast<std::size_t>(spec.feat_dim);
  std::vector<std::vector<double>> prototypes(spec.phones, std::vector<double>(D));
  for (auto& proto : prototypes) {
    double norm = 0.0;
    for (auto& v : proto) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : proto) v /= norm;
  }

  const auto lexicon = detail::make_lexicon(spec, rng);

  const int total = spec.train_utterances + spec.dev_utterances + spec.test_utterances;
  Corpus corpus;
  corpus.inventory_size = spec.phones;
  for (int u = 0; u < total; ++u) {
    Utterance utt;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "utt%05d", u);
    utt.id = idbuf;

    const int num_words =
        spec.words_min + static_cast<int>(rng.integer(spec.words_max - spec.words_min + 1));
    std::vector<int> frame_labels;
    std::vector<double> frame_values;
    for (int w = 0; w < num_words; ++w) {
      const auto& word = lexicon[rng.integer(lexicon.size())];
      std::string word_str;
      for (int phone : word) word_str += detail::phone_letter(phone);
      utt.transcript.push_back(word_str);
      for (int phone : word) {
        const int dur = spec.frames_per_phone_min +
                        static_cast<int>(rng.integer(spec.frames_per_phone_max -
                                                     spec.frames_per_phone_min + 1));
        for (int f = 0; f < dur; ++f) {
          frame_labels.push_back(phone);
          for (std::size_t d = 0; d < D; ++d)
            frame_values.push_back(prototypes[phone][d] + spec.noise_level * rng.normal());
        }
      }
    }

    utt.features.frames = Tensor({frame_labels.size(), D}, std::move(frame_values));
    utt.alignment = AlignmentTrack{std::move(frame_labels), spec.phones};

    if (u < spec.train_utterances)
      corpus.train.push_back(std::move(utt));
    else if (u < spec.train_utterances + spec.dev_utterances)
      corpus.dev.push_back(std::move(utt));
    else
      corpus.test.push_back(std::move(utt));
  }
  return corpus;
}

// Writes the corpus in the on-disk formats: per-split manifests, AUXF feature
// caches, one run-length alignment file, and the phone map.
inline void write_corpus_dir(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "feats");
  const PhoneMap phones = synth_phone_map(corpus.inventory_size);
  write_phone_map((fs::path(dir) / "phones.map").string(), phones);

  std::vector<Utterance> all;
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test})
    for (const auto& utt : *split) all.push_back(utt);
  write_alignment_file((fs::path(dir) / "alignments.txt").string(), all, phones);
  for (const auto& utt : all)
    write_feature_cache((fs::path(dir) / "feats" / (utt.id + ".auxf")).string(), utt.features);

  write_manifest((fs::path(dir) / "train.manifest").string(), corpus.train, "feats");
  write_manifest((fs::path(dir) / "dev.manifest").string(), corpus.dev, "feats");
  write_manifest((fs::path(dir) / "test.manifest").string(), corpus.test, "feats");
}

// Loads a corpus from manifests plus (optionally) an alignment file and phone
// map. Alignments are attached where a block exists; frame counts must match.
inline Corpus load_corpus(const std::string& train_manifest, const std::string& dev_manifest,
                          const std::string& test_manifest, const std::string& alignment_path = "",
                          const std::string& phone_map_path = "") {
  Corpus corpus;
  std::map<std::string, AlignmentRuns> blocks;
  PhoneMap phones;
  if (!alignment_path.empty()) {
    if (phone_map_path.empty())
      throw std::invalid_argument("load_corpus: alignment file requires a phone map");
    blocks = read_alignment_file(alignment_path);
    phones = read_phone_map(phone_map_path);
    corpus.inventory_size = phones.inventory_size;
  }
  auto load_split = [&](const std::string& manifest, std::vector<Utterance>& out) {
    for (const auto& entry : read_manifest(manifest)) {
      Utterance utt;
      utt.id = entry.id;
      utt.features = read_feature_cache(entry.path);
      utt.transcript = entry.words;
      const auto it = blocks.find(entry.id);
      if (it != blocks.end())
        utt.alignment = expand_alignment(it->second, phones, utt.features.num_frames(), entry.id);
      out.push_back(std::move(utt));
    }
  };
  load_split(train_manifest, corpus.train);
  load_split(dev_manifest, corpus.dev);
  load_split(test_manifest, corpus.test);
  return corpus;
}

}  // namespace auxsup
