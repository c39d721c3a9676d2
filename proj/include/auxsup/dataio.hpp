// auxsup/dataio.hpp
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
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "auxsup/rng.hpp"
#include "auxsup/tensor.hpp"

namespace auxsup {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct Waveform {
  std::vector<double> samples;  // range [-1, 1]
  double sample_rate = 16000.0;
};

struct FeatureMatrix {
  Tensor frames;                // T x D
  double frame_step = 0.010;    // seconds per frame

  std::size_t num_frames() const { return frames.rows(); }
  std::size_t dim() const { return frames.cols(); }
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;   // floored, strictly positive
};

struct AlignmentTrack {
  std::vector<int> labels;      // one phone-class index per feature frame
  int inventory_size = 0;
};

struct Utterance {
  std::string id;
  FeatureMatrix features;
  std::vector<std::string> transcript;
  std::optional<AlignmentTrack> alignment;
};

struct Corpus {
  std::vector<Utterance> train, dev, test;
  int inventory_size = 0;
};

// ---------------------------------------------------------------------------
// MFCC extraction
// ---------------------------------------------------------------------------

struct MfccConfig {
  double window_seconds = 0.025;
  double step_seconds = 0.010;
  int mel_filters = 40;
  int cepstra = 40;
  double preemphasis = 0.97;
  double log_floor = 1e-10;
};

inline std::size_t mfcc_frame_count(std::size_t num_samples, std::size_t window_samples,
                                    std::size_t step_samples) {
  return 1 + (num_samples - window_samples) / step_samples;
}

namespace detail {

inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace detail

// Pre-emphasis -> Hamming window -> power spectrum -> mel filterbank ->
// floored log -> DCT-II. Output is T x cepstra with
// T = 1 + floor((N - window) / step).
inline FeatureMatrix extract_mfcc(const Waveform& wave, const MfccConfig& cfg = {}) {
  if (wave.sample_rate <= 0) throw std::invalid_argument("extract_mfcc: sample_rate must be > 0");
  if (cfg.window_seconds <= 0 || cfg.step_seconds <= 0 || cfg.mel_filters <= 0 ||
      cfg.cepstra <= 0)
    throw std::invalid_argument("extract_mfcc: config values must be positive");
  if (cfg.cepstra > cfg.mel_filters)
    throw std::invalid_argument("extract_mfcc: cepstra exceed mel filter count");
  const std::size_t win = static_cast<std::size_t>(std::lround(cfg.window_seconds * wave.sample_rate));
  const std::size_t step = static_cast<std::size_t>(std::lround(cfg.step_seconds * wave.sample_rate));
  if (win == 0 || step == 0) throw std::invalid_argument("extract_mfcc: window/step too small");
  if (wave.samples.size() < win)
    throw std::invalid_argument("extract_mfcc: audio has " + std::to_string(wave.samples.size()) +
                                " samples, shorter than one " + std::to_string(win) +
                                "-sample window");

  // Pre-emphasis over the whole signal.
  std::vector<double> x(wave.samples.size());
  x[0] = wave.samples[0];
  for (std::size_t i = 1; i < x.size(); ++i)
    x[i] = wave.samples[i] - cfg.preemphasis * wave.samples[i - 1];

  std::size_t nfft = 1;
  while (nfft < win) nfft <<= 1;
  const std::size_t nbins = nfft / 2 + 1;

  std::vector<double> hamming(win);
  for (std::size_t i = 0; i < win; ++i)
    hamming[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(i) /
                                        static_cast<double>(win - 1));

  // Triangular mel filters between 0 Hz and Nyquist.
  const int M = cfg.mel_filters;
  const double mel_hi = detail::hz_to_mel(wave.sample_rate / 2.0);
  std::vector<double> centers(M + 2);
  for (int m = 0; m < M + 2; ++m)
    centers[m] = detail::mel_to_hz(mel_hi * static_cast<double>(m) / static_cast<double>(M + 1));
  const double hz_per_bin = wave.sample_rate / static_cast<double>(nfft);
  std::vector<std::vector<double>> filters(M, std::vector<double>(nbins, 0.0));
  for (int m = 0; m < M; ++m) {
    const double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (std::size_t b = 0; b < nbins; ++b) {
      const double f = static_cast<double>(b) * hz_per_bin;
      if (f > lo && f < mid)
        filters[m][b] = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        filters[m][b] = (hi - f) / (hi - mid);
    }
  }

  const std::size_t T = mfcc_frame_count(wave.samples.size(), win, step);
  const int C = cfg.cepstra;
  FeatureMatrix out;
  out.frames = Tensor({T, static_cast<std::size_t>(C)});
  out.frame_step = cfg.step_seconds;

  std::vector<std::complex<double>> spec(nfft);
  std::vector<double> mel_log(M);
  for (std::size_t t = 0; t < T; ++t) {
    const double* frame = x.data() + t * step;
    for (std::size_t i = 0; i < nfft; ++i)
      spec[i] = i < win ? std::complex<double>(frame[i] * hamming[i], 0.0)
                        : std::complex<double>(0.0, 0.0);
    detail::fft_inplace(spec);
    for (int m = 0; m < M; ++m) {
      double e = 0.0;
      for (std::size_t b = 0; b < nbins; ++b) {
        const double p = std::norm(spec[b]);
        e += filters[m][b] * p;
      }
      mel_log[m] = std::log(std::max(e, cfg.log_floor));
    }
    for (int k = 0; k < C; ++k) {
      double acc = 0.0;
      for (int m = 0; m < M; ++m)
        acc += mel_log[m] *
               std::cos(M_PI * static_cast<double>(k) * (static_cast<double>(m) + 0.5) /
                        static_cast<double>(M));
      const double scale = k == 0 ? std::sqrt(1.0 / M) : std::sqrt(2.0 / M);
      out.frames(t, static_cast<std::size_t>(k)) = scale * acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

inline constexpr double kStddevFloor = 1e-8;

// Per-dimension mean/stddev (population) over all frames of all utterances.
inline NormStats estimate_norm(const std::vector<FeatureMatrix>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("estimate_norm: empty corpus");
  const std::size_t D = corpus.front().dim();
  std::size_t total = 0;
  std::vector<double> sum(D, 0.0), sumsq(D, 0.0);
  for (const auto& f : corpus) {
    if (f.dim() != D)
      throw std::invalid_argument("estimate_norm: dimension mismatch across utterances");
    for (std::size_t t = 0; t < f.num_frames(); ++t)
      for (std::size_t d = 0; d < D; ++d) {
        const double v = f.frames(t, d);
        sum[d] += v;
        sumsq[d] += v * v;
      }
    total += f.num_frames();
  }
  if (total < 2) throw std::invalid_argument("estimate_norm: need at least 2 frames");
  NormStats stats;
  stats.mean.resize(D);
  stats.stddev.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    stats.mean[d] = sum[d] / static_cast<double>(total);
    const double var = sumsq[d] / static_cast<double>(total) - stats.mean[d] * stats.mean[d];
    stats.stddev[d] = std::max(std::sqrt(std::max(var, 0.0)), kStddevFloor);
  }
  return stats;
}

inline FeatureMatrix apply_norm(const FeatureMatrix& f, const NormStats& s) {
  if (f.dim() != s.mean.size() || f.dim() != s.stddev.size())
    throw std::invalid_argument("apply_norm: dimension mismatch, features " +
                                std::to_string(f.dim()) + " vs stats " +
                                std::to_string(s.mean.size()));
  FeatureMatrix out = f;
  for (std::size_t t = 0; t < f.num_frames(); ++t)
    for (std::size_t d = 0; d < f.dim(); ++d)
      out.frames(t, d) = (f.frames(t, d) - s.mean[d]) / s.stddev[d];
  return out;
}

// ---------------------------------------------------------------------------
// SpecAugment
// ---------------------------------------------------------------------------

struct SpecAugmentPolicy {
  std::size_t max_time_mask_width = 0;
  std::size_t time_masks = 0;
  std::size_t max_freq_mask_width = 0;
  std::size_t freq_masks = 0;
  std::uint64_t seed = 0;
};

// Masked regions are replaced by the per-utterance per-dimension mean; a
// zero-count policy is the identity. Deterministic given the policy seed.
inline FeatureMatrix spec_augment(const FeatureMatrix& f, const SpecAugmentPolicy& policy) {
  const std::size_t T = f.num_frames(), D = f.dim();
  if (policy.time_masks > 0 && policy.max_time_mask_width >= T)
    throw std::invalid_argument("spec_augment: time mask width must be < frame count");
  if (policy.freq_masks > 0 && policy.max_freq_mask_width >= D)
    throw std::invalid_argument("spec_augment: freq mask width must be < feature dim");
  FeatureMatrix out = f;
  if (policy.time_masks == 0 && policy.freq_masks == 0) return out;

  std::vector<double> mean(D, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d) mean[d] += f.frames(t, d);
  for (std::size_t d = 0; d < D; ++d) mean[d] /= static_cast<double>(T);

  Rng rng(policy.seed);
  for (std::size_t m = 0; m < policy.time_masks; ++m) {
    const std::size_t w = rng.integer(policy.max_time_mask_width + 1);
    if (w == 0) continue;
    const std::size_t t0 = rng.integer(T - w + 1);
    for (std::size_t t = t0; t < t0 + w; ++t)
      for (std::size_t d = 0; d < D; ++d) out.frames(t, d) = mean[d];
  }
  for (std::size_t m = 0; m < policy.freq_masks; ++m) {
    const std::size_t w = rng.integer(policy.max_freq_mask_width + 1);
    if (w == 0) continue;
    const std::size_t d0 = rng.integer(D - w + 1);
    for (std::size_t d = d0; d < d0 + w; ++d)
      for (std::size_t t = 0; t < T; ++t) out.frames(t, d) = mean[d];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Alignments
// ---------------------------------------------------------------------------

// Phone map file: one `label index` pair per line; indices must be dense.
struct PhoneMap {
  std::map<std::string, int> label_to_index;
  int inventory_size = 0;

  std::string label_of(int index) const {
    for (const auto& [label, idx] : label_to_index)
      if (idx == index) return label;
    throw std::invalid_argument("PhoneMap: no label for index " + std::to_string(index));
  }
};

inline PhoneMap read_phone_map(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("phone map: cannot open " + path);
  PhoneMap map;
  std::string line;
  std::vector<bool> seen;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string label;
    int index;
    if (!(ls >> label >> index) || index < 0)
      throw std::runtime_error("phone map: bad line in " + path + ": " + line);
    if (map.label_to_index.count(label))
      throw std::runtime_error("phone map: duplicate label " + label);
    map.label_to_index[label] = index;
    if (static_cast<std::size_t>(index) >= seen.size()) seen.resize(index + 1, false);
    seen[index] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw std::runtime_error("phone map: indices not dense, missing " +
                                           std::to_string(i));
  map.inventory_size = static_cast<int>(seen.size());
  return map;
}

inline void write_phone_map(const std::string& path, const PhoneMap& map) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("phone map: cannot write " + path);
  for (const auto& [label, idx] : map.label_to_index) os << label << " " << idx << "\n";
}

// Run-length alignment text: per utterance a `#<id>` line followed by
// space-separated `label:count` tokens (possibly over several lines).
using AlignmentRuns = std::vector<std::pair<std::string, std::size_t>>;

inline std::map<std::string, AlignmentRuns> read_alignment_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("alignment: cannot open " + path);
  std::map<std::string, AlignmentRuns> blocks;
  std::string line, current;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      current = line.substr(1);
      if (current.empty()) throw std::runtime_error("alignment: empty utterance id in " + path);
      if (blocks.count(current))
        throw std::runtime_error("alignment: duplicate utterance id " + current);
      blocks[current];  // create
      continue;
    }
    if (current.empty())
      throw std::runtime_error("alignment: tokens before any utterance header in " + path);
    std::istringstream ls(line);
    std::string token;
    while (ls >> token) {
      const auto colon = token.rfind(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 >= token.size())
        throw std::runtime_error("alignment: bad token '" + token + "' for " + current);
      const std::string label = token.substr(0, colon);
      const long count = std::stol(token.substr(colon + 1));
      if (count <= 0) throw std::runtime_error("alignment: non-positive count for " + current);
      blocks[current].emplace_back(label, static_cast<std::size_t>(count));
    }
  }
  return blocks;
}

inline AlignmentTrack expand_alignment(const AlignmentRuns& runs, const PhoneMap& phones,
                                       std::size_t expected_frames, const std::string& id) {
  AlignmentTrack track;
  track.inventory_size = phones.inventory_size;
  for (const auto& [label, count] : runs) {
    const auto it = phones.label_to_index.find(label);
    if (it == phones.label_to_index.end())
      throw std::runtime_error("alignment: unknown label '" + label + "' for utterance " + id);
    track.labels.insert(track.labels.end(), count, it->second);
  }
  if (track.labels.empty())
    throw std::runtime_error("alignment: utterance " + id + " has no frames");
  if (track.labels.size() != expected_frames)
    throw std::runtime_error("alignment: utterance " + id + " has " +
                             std::to_string(track.labels.size()) + " frames, expected " +
                             std::to_string(expected_frames));
  return track;
}

inline AlignmentTrack load_alignment(const std::string& path, const std::string& id,
                                     const PhoneMap& phones, std::size_t expected_frames) {
  const auto blocks = read_alignment_file(path);
  const auto it = blocks.find(id);
  if (it == blocks.end())
    throw std::runtime_error("alignment: utterance " + id + " not found in " + path);
  return expand_alignment(it->second, phones, expected_frames, id);
}

inline void write_alignment_file(const std::string& path,
                                 const std::vector<Utterance>& utterances,
                                 const PhoneMap& phones) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("alignment: cannot write " + path);
  for (const auto& utt : utterances) {
    if (!utt.alignment) continue;
    os << "#" << utt.id << "\n";
    const auto& labels = utt.alignment->labels;
    std::size_t i = 0;
    bool first = true;
    while (i < labels.size()) {
      std::size_t j = i;
      while (j < labels.size() && labels[j] == labels[i]) ++j;
      os << (first ? "" : " ") << phones.label_of(labels[i]) << ":" << (j - i);
      first = false;
      i = j;
    }
    os << "\n";
  }
}

// First-frame selection per sub-sampled window; output length is
// ceil(T / factor).
inline AlignmentTrack downsample_alignment(const AlignmentTrack& a, std::size_t factor) {
  if (factor < 1) throw std::invalid_argument("downsample_alignment: factor must be >= 1");
  AlignmentTrack out;
  out.inventory_size = a.inventory_size;
  out.labels.reserve((a.labels.size() + factor - 1) / factor);
  for (std::size_t i = 0; i < a.labels.size(); i += factor) out.labels.push_back(a.labels[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Feature cache (AUXF): magic, u32 T, u32 D, then T*D float32 row-major.
// ---------------------------------------------------------------------------

inline void write_feature_cache(const std::string& path, const FeatureMatrix& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("feature cache: cannot write " + path);
  os.write("AUXF", 4);
  const std::uint32_t T = static_cast<std::uint32_t>(f.num_frames());
  const std::uint32_t D = static_cast<std::uint32_t>(f.dim());
  os.write(reinterpret_cast<const char*>(&T), 4);
  os.write(reinterpret_cast<const char*>(&D), 4);
  std::vector<float> buf(f.frames.numel());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(f.frames[i]);
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw std::runtime_error("feature cache: write failed: " + path);
}

inline FeatureMatrix read_feature_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("feature cache: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "AUXF", 4) != 0)
    throw std::runtime_error("feature cache: bad magic in " + path);
  std::uint32_t T = 0, D = 0;
  is.read(reinterpret_cast<char*>(&T), 4);
  is.read(reinterpret_cast<char*>(&D), 4);
  if (!is || T == 0 || D == 0) throw std::runtime_error("feature cache: bad header in " + path);
  std::vector<float> buf(static_cast<std::size_t>(T) * D);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw std::runtime_error("feature cache: truncated " + path);
  FeatureMatrix f;
  f.frames = Tensor({T, D});
  for (std::size_t i = 0; i < buf.size(); ++i) f.frames[i] = static_cast<double>(buf[i]);
  return f;
}

// ---------------------------------------------------------------------------
// Corpus manifest: one line per utterance `id<TAB>path<TAB>transcript`.
// Relative feature paths resolve against the manifest's directory.
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string path;
  std::vector<std::string> words;
};

inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream is(text);
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

inline std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("manifest: cannot open " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos)
      throw std::runtime_error("manifest: " + path + ":" + std::to_string(lineno) +
                               ": expected id<TAB>path<TAB>transcript");
    ManifestEntry e;
    e.id = line.substr(0, tab1);
    std::string p = line.substr(tab1 + 1, tab2 - tab1 - 1);
    std::filesystem::path fp(p);
    e.path = fp.is_absolute() ? fp.string() : (base / fp).string();
    e.words = split_words(line.substr(tab2 + 1));
    entries.push_back(std::move(e));
  }
  return entries;
}

inline void write_manifest(const std::string& path, const std::vector<Utterance>& utterances,
                           const std::string& feature_subdir) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("manifest: cannot write " + path);
  for (const auto& utt : utterances)
    os << utt.id << "\t" << feature_subdir << "/" << utt.id << ".auxf\t"
       << join_words(utt.transcript) << "\n";
}

}  // namespace auxsup
