// auxsup/losses.hpp
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

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "auxsup/autodiff.hpp"
#include "auxsup/dataio.hpp"
#include "auxsup/tensor.hpp"

namespace auxsup {

inline constexpr double kProbFloor = 1e-12;
inline const double kLogProbFloor = std::log(kProbFloor);

// ---------------------------------------------------------------------------
// Task descriptors and per-step reporting
// ---------------------------------------------------------------------------

// Where an auxiliary head attaches: a BLSTM layer (1-based) or the encoder
// output.
struct TapPoint {
  bool encoder_output = false;
  int layer = 0;

  static TapPoint output() { return TapPoint{true, 0}; }
  static TapPoint at_layer(int layer) { return TapPoint{false, layer}; }

  static TapPoint parse(const std::string& s) {
    if (s == "E" || s == "e") return output();
    const int layer = std::stoi(s);
    if (layer < 1) throw std::invalid_argument("tap: layer must be >= 1, got " + s);
    return at_layer(layer);
  }

  std::string str() const { return encoder_output ? "E" : std::to_string(layer); }

  bool operator==(const TapPoint& o) const {
    return encoder_output == o.encoder_output && (encoder_output || layer == o.layer);
  }
  bool operator<(const TapPoint& o) const {
    if (encoder_output != o.encoder_output) return !encoder_output;  // layers before E
    return layer < o.layer;
  }
};

enum class AuxKind { CE_LS, CE_LW, CTC_LW };

inline std::string aux_kind_str(AuxKind kind) {
  switch (kind) {
    case AuxKind::CE_LS: return "ce_ls";
    case AuxKind::CE_LW: return "ce_lw";
    case AuxKind::CTC_LW: return "ctc_lw";
  }
  return "?";
}

inline AuxKind parse_aux_kind(const std::string& s) {
  if (s == "ce_ls") return AuxKind::CE_LS;
  if (s == "ce_lw") return AuxKind::CE_LW;
  if (s == "ctc_lw") return AuxKind::CTC_LW;
  throw std::invalid_argument("aux kind must be ce_ls, ce_lw or ctc_lw, got '" + s + "'");
}

// The smoothed mechanism fixes lambda = 1 and varies m; the loss-weighted
// mechanisms fix m = 0 and vary lambda.
struct AuxTaskSpec {
  AuxKind kind = AuxKind::CE_LS;
  TapPoint tap;
  double lambda = 1.0;
  double m = 0.0;

  double effective_weight() const { return kind == AuxKind::CE_LS ? 1.0 : lambda; }

  void validate() const {
    if (lambda < 0) throw std::invalid_argument("aux: lambda must be >= 0");
    if (m < 0 || m > 1) throw std::invalid_argument("aux: m must be in [0, 1]");
    if (kind == AuxKind::CE_LS && lambda != 1.0)
      throw std::invalid_argument("aux: ce_ls fixes lambda = 1");
    if (kind != AuxKind::CE_LS && m != 0.0)
      throw std::invalid_argument("aux: loss-weighted tasks fix m = 0");
  }
};

struct LossReport {
  double l_all = 0.0;
  double l_asr = 0.0;
  double l_aux = 0.0;     // total weighted auxiliary contribution
  double l_ce = 0.0;      // decomposition of the smoothed alignment CE, when present
  double l_smooth = 0.0;
  bool has_decomposition = false;
};

// ---------------------------------------------------------------------------
// Cross-entropy losses (probability / log-probability domain)
// ---------------------------------------------------------------------------

inline double one_hot_ce(const std::vector<double>& q, int target) {
  const int V = static_cast<int>(q.size());
  if (target < 0 || target >= V) throw std::invalid_argument("one_hot_ce: target out of range");
  return -std::log(std::max(q[target], kProbFloor));
}

struct SmoothedCe {
  double loss = 0.0;
  double l_ce = 0.0;
  double l_smooth = 0.0;
};

// Eq.-style smoothed cross entropy: the target carries weight 1-m, every
// other class m/(V-1); the weights sum to 1. Returns the loss together with
// its (l_ce, l_smooth) decomposition, computed by its own route so the
// identity loss = (1-m) l_ce + m l_smooth stays checkable.
inline SmoothedCe label_smoothed_ce(const std::vector<double>& q, int target, double m) {
  const int V = static_cast<int>(q.size());
  if (V < 2) throw std::invalid_argument("label_smoothed_ce: need V >= 2, got " +
                                         std::to_string(V));
  if (target < 0 || target >= V)
    throw std::invalid_argument("label_smoothed_ce: target out of range");
  if (m < 0 || m > 1) throw std::invalid_argument("label_smoothed_ce: m must be in [0, 1]");
  SmoothedCe out;
  const double off_weight = m / static_cast<double>(V - 1);
  double off_log_sum = 0.0;
  for (int v = 0; v < V; ++v) {
    const double logq = std::log(std::max(q[v], kProbFloor));
    const double w = v == target ? 1.0 - m : off_weight;
    out.loss -= w * logq;
    if (v == target)
      out.l_ce = -logq;
    else
      off_log_sum += logq;
  }
  out.l_smooth = -off_log_sum / static_cast<double>(V - 1);
  return out;
}

// Mean over frames of the smoothed per-frame CE, on log-posterior rows.
inline double framewise_aux_ce(const Tensor& log_posts, const AlignmentTrack& alignment,
                               double m) {
  if (log_posts.rank() != 2)
    throw std::invalid_argument("framewise_aux_ce: expected T x V log-posteriors");
  if (log_posts.rows() != alignment.labels.size())
    throw std::invalid_argument("framewise_aux_ce: " + std::to_string(log_posts.rows()) +
                                " posterior frames vs " +
                                std::to_string(alignment.labels.size()) + " alignment frames");
  const std::size_t T = log_posts.rows(), V = log_posts.cols();
  if (V < 2) throw std::invalid_argument("framewise_aux_ce: need V >= 2");
  const double off_weight = m / static_cast<double>(V - 1);
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const int target = alignment.labels[t];
    if (target < 0 || static_cast<std::size_t>(target) >= V)
      throw std::invalid_argument("framewise_aux_ce: label out of range at frame " +
                                  std::to_string(t));
    for (std::size_t v = 0; v < V; ++v) {
      const double logq = std::max(log_posts(t, v), kLogProbFloor);
      total -= (static_cast<int>(v) == target ? 1.0 - m : off_weight) * logq;
    }
  }
  return total / static_cast<double>(T);
}

// Differentiable version over a T x V log-posterior node: mean over rows of
// the smoothed CE against per-row targets.
inline Var smoothed_ce_sequence_loss(Tape& tape, const Var& log_posts,
                                     const std::vector<int>& targets, double m) {
  const Tensor& lp = log_posts.value();
  if (lp.rank() != 2) throw std::invalid_argument("smoothed_ce: expected T x V log-posteriors");
  const std::size_t T = lp.rows(), V = lp.cols();
  if (V < 2) throw std::invalid_argument("smoothed_ce: need V >= 2");
  if (targets.size() != T)
    throw std::invalid_argument("smoothed_ce: " + std::to_string(T) + " posterior frames vs " +
                                std::to_string(targets.size()) + " targets");
  Tensor weights({T, V});
  const double off_weight = m / static_cast<double>(V - 1);
  for (std::size_t t = 0; t < T; ++t) {
    const int target = targets[t];
    if (target < 0 || static_cast<std::size_t>(target) >= V)
      throw std::invalid_argument("smoothed_ce: target out of range at position " +
                                  std::to_string(t));
    for (std::size_t v = 0; v < V; ++v)
      weights(t, v) = static_cast<int>(v) == target ? 1.0 - m : off_weight;
  }
  Var floored = clamp_min(log_posts, kLogProbFloor);
  return scale(sum(mul(floored, tape.constant(std::move(weights)))),
               -1.0 / static_cast<double>(T));
}

// ---------------------------------------------------------------------------
// CTC loss (forward algorithm in log space over the blank-augmented labels)
// ---------------------------------------------------------------------------

namespace detail {

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double mx = std::max(a, b);
  return mx + std::log(std::exp(a - mx) + std::exp(b - mx));
}

struct CtcLattice {
  std::vector<int> ext;  // blank-augmented label sequence, length 2L+1
  int blank = 0;

  explicit CtcLattice(const std::vector<int>& labels, int blank_index) : blank(blank_index) {
    ext.reserve(2 * labels.size() + 1);
    ext.push_back(blank);
    for (int l : labels) {
      ext.push_back(l);
      ext.push_back(blank);
    }
  }

  bool skip_allowed(std::size_t s) const {
    // s-2 -> s allowed only between distinct non-blank labels
    return ext[s] != blank && s >= 2 && ext[s] != ext[s - 2];
  }
};

}  // namespace detail

// Frames required for a feasible path: every label plus a separating blank
// between equal neighbours.
inline std::size_t ctc_min_frames(const std::vector<int>& labels) {
  std::size_t n = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i)
    if (labels[i] == labels[i - 1]) ++n;
  return n;
}

struct CtcResult {
  double loss = 0.0;  // -log p(labels); +infinity when infeasible
  bool feasible = true;
};

// Standalone -log p(labels | log_posts). The blank is the last class
// (index V for a width V+1 posterior). Infeasible instances report
// +infinity instead of being silently trained on.
inline CtcResult ctc_loss(const Tensor& log_posts, const std::vector<int>& labels) {
  if (log_posts.rank() != 2 || log_posts.cols() < 2)
    throw std::invalid_argument("ctc_loss: expected T x (V+1) log-posteriors");
  const std::size_t T = log_posts.rows();
  const int blank = static_cast<int>(log_posts.cols()) - 1;
  for (int l : labels)
    if (l < 0 || l >= blank)
      throw std::invalid_argument("ctc_loss: label " + std::to_string(l) +
                                  " outside [0, " + std::to_string(blank) + ")");
  if (T < ctc_min_frames(labels))
    return {std::numeric_limits<double>::infinity(), false};

  const detail::CtcLattice lat(labels, blank);
  const std::size_t S = lat.ext.size();
  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> alpha(S, ninf), next(S, ninf);
  alpha[0] = log_posts(0, lat.ext[0]);
  if (S > 1) alpha[1] = log_posts(0, lat.ext[1]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double acc = alpha[s];
      if (s >= 1) acc = detail::log_sum_exp(acc, alpha[s - 1]);
      if (lat.skip_allowed(s)) acc = detail::log_sum_exp(acc, alpha[s - 2]);
      next[s] = acc == ninf ? ninf : acc + log_posts(t, lat.ext[s]);
    }
    std::swap(alpha, next);
  }
  double logp = alpha[S - 1];
  if (S > 1) logp = detail::log_sum_exp(logp, alpha[S - 2]);
  return {-logp, true};
}

// Differentiable CTC node; the backward pass uses the forward/backward
// lattice sums. Infeasible instances must be filtered by the caller
// (see ctc_min_frames).
inline Var ctc_loss_node(Tape& tape, const Var& log_posts, const std::vector<int>& labels) {
  const Tensor& lp = log_posts.value();
  if (lp.rank() != 2 || lp.cols() < 2)
    throw std::invalid_argument("ctc_loss: expected T x (V+1) log-posteriors");
  const std::size_t T = lp.rows();
  const int blank = static_cast<int>(lp.cols()) - 1;
  if (T < ctc_min_frames(labels))
    throw std::invalid_argument("ctc_loss: " + std::to_string(T) +
                                " frames infeasible for " + std::to_string(labels.size()) +
                                " labels (needs " + std::to_string(ctc_min_frames(labels)) +
                                ")");
  for (int l : labels)
    if (l < 0 || l >= blank)
      throw std::invalid_argument("ctc_loss: label " + std::to_string(l) +
                                  " outside [0, " + std::to_string(blank) + ")");

  const auto lat = std::make_shared<detail::CtcLattice>(labels, blank);
  const std::size_t S = lat->ext.size();
  const double ninf = -std::numeric_limits<double>::infinity();

  // Full alpha table, kept for the backward pass.
  auto alpha = std::make_shared<std::vector<double>>(T * S, ninf);
  auto& a = *alpha;
  a[0] = lp(0, lat->ext[0]);
  if (S > 1) a[1] = lp(0, lat->ext[1]);
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      double acc = a[(t - 1) * S + s];
      if (s >= 1) acc = detail::log_sum_exp(acc, a[(t - 1) * S + s - 1]);
      if (lat->skip_allowed(s)) acc = detail::log_sum_exp(acc, a[(t - 1) * S + s - 2]);
      a[t * S + s] = acc == ninf ? ninf : acc + lp(t, lat->ext[s]);
    }
  double logp = a[(T - 1) * S + S - 1];
  if (S > 1) logp = detail::log_sum_exp(logp, a[(T - 1) * S + S - 2]);

  Tape& t = detail::tape_of(log_posts);
  auto* in = t.node_of(log_posts);
  Var out = t.alloc(Tensor::scalar(-logp), nullptr);
  auto* no = t.node_of(out);
  no->backward = [in, no, lat, alpha, T, S, logp, ninf]() {
    // beta with the emission at t included, mirroring alpha.
    const Tensor& lp = in->value;
    std::vector<double> beta(T * S, ninf);
    beta[(T - 1) * S + S - 1] = lp(T - 1, lat->ext[S - 1]);
    if (S > 1) beta[(T - 1) * S + S - 2] = lp(T - 1, lat->ext[S - 2]);
    for (std::size_t t2 = T - 1; t2-- > 0;)
      for (std::size_t s = 0; s < S; ++s) {
        double acc = beta[(t2 + 1) * S + s];
        if (s + 1 < S) acc = detail::log_sum_exp(acc, beta[(t2 + 1) * S + s + 1]);
        if (s + 2 < S && lat->skip_allowed(s + 2))
          acc = detail::log_sum_exp(acc, beta[(t2 + 1) * S + s + 2]);
        beta[t2 * S + s] = acc == ninf ? ninf : acc + lp(t2, lat->ext[s]);
      }
    // d(-log p)/d(log q_t(k)) = -exp(lse_{s: lab(s)=k}(alpha+beta) - log p - log q_t(k))
    const double g = no->grad[0];
    const auto& a = *alpha;
    for (std::size_t t2 = 0; t2 < T; ++t2) {
      std::vector<double> acc(lp.cols(), ninf);
      for (std::size_t s = 0; s < S; ++s) {
        const double ab = a[t2 * S + s] == ninf || beta[t2 * S + s] == ninf
                              ? ninf
                              : a[t2 * S + s] + beta[t2 * S + s];
        acc[lat->ext[s]] = detail::log_sum_exp(acc[lat->ext[s]], ab);
      }
      for (std::size_t k = 0; k < lp.cols(); ++k) {
        if (acc[k] == ninf) continue;
        in->grad(t2, k) -= g * std::exp(acc[k] - logp - lp(t2, k));
      }
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// Composite loss
// ---------------------------------------------------------------------------

struct AuxContribution {
  AuxTaskSpec spec;
  double value = 0.0;  // unweighted task loss
  double l_ce = 0.0, l_smooth = 0.0;
  bool has_decomposition = false;
};

// L_all = L_ASR + sum_i w_i L_AUX_i, where smoothed tasks carry weight 1 and
// their m lives inside the task loss.
inline LossReport total_loss(double l_asr, const std::vector<AuxContribution>& tasks) {
  LossReport report;
  report.l_asr = l_asr;
  report.l_all = l_asr;
  for (const auto& task : tasks) {
    task.spec.validate();
    if (!std::isfinite(task.value))
      throw std::invalid_argument("total_loss: non-finite auxiliary value (infeasible CTC must "
                                  "be excluded upstream)");
    const double contribution = task.spec.effective_weight() * task.value;
    report.l_aux += contribution;
    report.l_all += contribution;
    if (task.has_decomposition) {
      report.l_ce = task.l_ce;
      report.l_smooth = task.l_smooth;
      report.has_decomposition = true;
    }
  }
  return report;
}

}  // namespace auxsup
