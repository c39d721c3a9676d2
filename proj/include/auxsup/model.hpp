// auxsup/model.hpp
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

#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "auxsup/autodiff.hpp"
#include "auxsup/losses.hpp"
#include "auxsup/rng.hpp"
#include "auxsup/tensor.hpp"

namespace auxsup {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct EncoderConfig {
  int num_layers = 6;
  int hidden_dim = 64;  // per direction
  std::vector<int> subsample_factors = {2, 2, 1, 1, 1, 1};
  double dropout = 0.0;

  void validate() const {
    if (num_layers < 1) throw std::invalid_argument("encoder: num_layers must be >= 1");
    if (hidden_dim < 1) throw std::invalid_argument("encoder: hidden_dim must be >= 1");
    if (static_cast<int>(subsample_factors.size()) != num_layers)
      throw std::invalid_argument("encoder: need one subsample factor per layer");
    for (int f : subsample_factors)
      if (f < 1) throw std::invalid_argument("encoder: subsample factors must be >= 1");
    if (dropout < 0 || dropout >= 1)
      throw std::invalid_argument("encoder: dropout must be in [0, 1)");
  }

  int total_reduction() const {
    return std::accumulate(subsample_factors.begin(), subsample_factors.end(), 1,
                           std::multiplies<int>());
  }

  // Product of the factors up to and including a tap point.
  int reduction_at(const TapPoint& tap) const {
    const int upto = tap.encoder_output ? num_layers : tap.layer;
    int r = 1;
    for (int l = 0; l < upto; ++l) r *= subsample_factors[l];
    return r;
  }
};

struct DecoderConfig {
  int attention_dim = 64;
  int state_dim = 64;
  int embed_dim = 32;
  int vocab_size = 0;  // target vocabulary including sentence-end
  int eos_id = -1;

  void validate() const {
    if (attention_dim < 1 || state_dim < 1 || embed_dim < 1 || vocab_size < 1)
      throw std::invalid_argument("decoder: dimensions must be positive");
    if (eos_id < 0 || eos_id >= vocab_size)
      throw std::invalid_argument("decoder: eos_id outside vocabulary");
  }
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  int feat_dim = 0;
  int phone_inventory = 0;  // required when an alignment CE task is configured
  int aux_hidden_dim = 64;  // rectified hidden layer of the alignment CE heads
};

inline std::size_t ceil_div(std::size_t n, std::size_t k) { return (n + k - 1) / k; }

// ---------------------------------------------------------------------------
// LSTM building block
// ---------------------------------------------------------------------------

// Fused gate weights, order [input, forget, cell, output].
struct LstmParams {
  ParameterPtr wx;  // Din x 4H
  ParameterPtr wh;  // H x 4H
  ParameterPtr b;   // 4H
  int hidden = 0;
};

namespace detail {

inline Tensor uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

inline LstmParams create_lstm(ParameterStore& params, const std::string& prefix, int input_dim,
                              int hidden, Rng& rng) {
  LstmParams p;
  p.hidden = hidden;
  const std::size_t h = static_cast<std::size_t>(hidden);
  p.wx = params.create(prefix + ".wx",
                       uniform_init({static_cast<std::size_t>(input_dim), 4 * h}, input_dim, rng));
  p.wh = params.create(prefix + ".wh", uniform_init({h, 4 * h}, hidden, rng));
  Tensor bias({4 * h});
  for (std::size_t i = h; i < 2 * h; ++i) bias[i] = 1.0;  // forget gate starts open
  p.b = params.create(prefix + ".b", std::move(bias));
  return p;
}

struct LstmState {
  Var h, c;
};

inline LstmState lstm_cell(Tape& tape, const Var& x_pre, const LstmState& prev,
                           const LstmParams& p) {
  // x_pre already carries x . Wx + b
  const std::size_t h = static_cast<std::size_t>(p.hidden);
  Var pre = add(x_pre, matmul(prev.h, tape.param(p.wh)));
  Var i = sigmoid(slice_cols(pre, 0, h));
  Var f = sigmoid(slice_cols(pre, h, 2 * h));
  Var g = tanh_op(slice_cols(pre, 2 * h, 3 * h));
  Var o = sigmoid(slice_cols(pre, 3 * h, 4 * h));
  Var c = add(mul(f, prev.c), mul(i, g));
  return {mul(o, tanh_op(c)), c};
}

}  // namespace detail

// Runs one LSTM direction over a T x Din sequence; outputs are indexed by the
// original time axis regardless of direction.
inline std::vector<Var> lstm_sequence(Tape& tape, const Var& inputs, const LstmParams& p,
                                      bool reverse) {
  const std::size_t T = inputs.value().rows();
  Var x_proj = add(matmul(inputs, tape.param(p.wx)), tape.param(p.b));
  detail::LstmState state{tape.constant(Tensor({1, static_cast<std::size_t>(p.hidden)})),
                          tape.constant(Tensor({1, static_cast<std::size_t>(p.hidden)}))};
  std::vector<Var> outputs(T);
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t t = reverse ? T - 1 - i : i;
    state = detail::lstm_cell(tape, row(x_proj, t), state, p);
    outputs[t] = state.h;
  }
  return outputs;
}

// ---------------------------------------------------------------------------
// The AED network: BLSTM encoder with taps, attention decoder, CTC head.
// ---------------------------------------------------------------------------

struct EncodeResult {
  Var encoder_output;                       // T' x 2H
  std::map<TapPoint, Var> taps;             // configured taps only
  std::vector<std::size_t> layer_lengths;   // emitted length per layer
};

class AsrModel {
 public:
  AsrModel(ModelConfig cfg, std::vector<AuxTaskSpec> aux_specs, std::uint64_t seed)
      : cfg_(std::move(cfg)), aux_specs_(std::move(aux_specs)) {
    cfg_.encoder.validate();
    cfg_.decoder.validate();
    if (cfg_.feat_dim < 1) throw std::invalid_argument("model: feat_dim must be positive");
    for (const auto& spec : aux_specs_) {
      spec.validate();
      if (!spec.tap.encoder_output &&
          (spec.tap.layer < 1 || spec.tap.layer >= cfg_.encoder.num_layers))
        throw std::invalid_argument("model: tap layer " + spec.tap.str() +
                                    " invalid for depth " +
                                    std::to_string(cfg_.encoder.num_layers));
      if (spec.kind != AuxKind::CTC_LW && cfg_.phone_inventory < 2)
        throw std::invalid_argument("model: alignment CE tasks need a phone inventory");
      if (spec.kind == AuxKind::CTC_LW && spec.tap.encoder_output)
        throw std::invalid_argument("model: auxiliary CTC tap must be a BLSTM layer "
                                    "(the encoder output already has the built-in CTC)");
    }

    Rng rng(derive_seed(seed, 0x302e11));
    const int H = cfg_.encoder.hidden_dim;
    int in_dim = cfg_.feat_dim;
    for (int l = 0; l < cfg_.encoder.num_layers; ++l) {
      const std::string prefix = "enc.l" + std::to_string(l + 1);
      enc_fwd_.push_back(detail::create_lstm(params_, prefix + ".fwd", in_dim, H, rng));
      enc_bwd_.push_back(detail::create_lstm(params_, prefix + ".bwd", in_dim, H, rng));
      in_dim = 2 * H;
    }

    const int V = cfg_.decoder.vocab_size;
    ctc_w_ = params_.create("ctc.w", detail::uniform_init({static_cast<std::size_t>(2 * H),
                                                           static_cast<std::size_t>(V + 1)},
                                                          2 * H, rng));
    ctc_b_ = params_.create("ctc.b", Tensor({static_cast<std::size_t>(V + 1)}));

    const int A = cfg_.decoder.attention_dim;
    const int S = cfg_.decoder.state_dim;
    const int Em = cfg_.decoder.embed_dim;
    embed_ = params_.create("dec.embed", detail::uniform_init({static_cast<std::size_t>(V),
                                                               static_cast<std::size_t>(Em)},
                                                              Em, rng));
    att_h_ = params_.create("dec.att_h", detail::uniform_init({static_cast<std::size_t>(2 * H),
                                                               static_cast<std::size_t>(A)},
                                                              2 * H, rng));
    att_s_ = params_.create("dec.att_s", detail::uniform_init({static_cast<std::size_t>(S),
                                                               static_cast<std::size_t>(A)},
                                                              S, rng));
    att_f_ = params_.create("dec.att_f",
                            detail::uniform_init({1, static_cast<std::size_t>(A)}, 1, rng));
    att_b_ = params_.create("dec.att_b", Tensor({static_cast<std::size_t>(A)}));
    att_v_ = params_.create("dec.att_v",
                            detail::uniform_init({static_cast<std::size_t>(A), 1}, A, rng));
    dec_lstm_ = detail::create_lstm(params_, "dec.lstm", Em + 2 * H, S, rng);
    out_w_ = params_.create("dec.out_w", detail::uniform_init({static_cast<std::size_t>(S + 2 * H),
                                                               static_cast<std::size_t>(V)},
                                                              S + 2 * H, rng));
    out_b_ = params_.create("dec.out_b", Tensor({static_cast<std::size_t>(V)}));

    for (std::size_t i = 0; i < aux_specs_.size(); ++i) {
      const auto& spec = aux_specs_[i];
      const std::string prefix = "aux" + std::to_string(i) + "." + aux_kind_str(spec.kind) +
                                 ".tap" + spec.tap.str();
      const std::size_t in = static_cast<std::size_t>(2 * H);
      if (spec.kind == AuxKind::CTC_LW) {
        AuxHead head;
        head.w1 = params_.create(prefix + ".w",
                                 detail::uniform_init({in, static_cast<std::size_t>(V + 1)},
                                                      2 * H, rng));
        head.b1 = params_.create(prefix + ".b", Tensor({static_cast<std::size_t>(V + 1)}));
        aux_heads_.push_back(head);
      } else {
        const std::size_t hidden = static_cast<std::size_t>(cfg_.aux_hidden_dim);
        const std::size_t P = static_cast<std::size_t>(cfg_.phone_inventory);
        AuxHead head;
        head.w1 = params_.create(prefix + ".w1", detail::uniform_init({in, hidden}, 2 * H, rng));
        head.b1 = params_.create(prefix + ".b1", Tensor({hidden}));
        head.w2 = params_.create(prefix + ".w2",
                                 detail::uniform_init({hidden, P}, cfg_.aux_hidden_dim, rng));
        head.b2 = params_.create(prefix + ".b2", Tensor({P}));
        aux_heads_.push_back(head);
      }
    }
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<AuxTaskSpec>& aux_specs() const { return aux_specs_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // Expected sequence length at a tap for a T-frame input.
  std::size_t tap_length(std::size_t frames, const TapPoint& tap) const {
    const int upto = tap.encoder_output ? cfg_.encoder.num_layers : tap.layer;
    std::size_t len = frames;
    for (int l = 0; l < upto; ++l)
      len = ceil_div(len, static_cast<std::size_t>(cfg_.encoder.subsample_factors[l]));
    return len;
  }

  EncodeResult encode(Tape& tape, const Tensor& features, bool train_mode = false,
                      Rng* dropout_rng = nullptr) const {
    if (features.rank() != 2 || static_cast<int>(features.cols()) != cfg_.feat_dim)
      throw std::invalid_argument("encode: expected T x " + std::to_string(cfg_.feat_dim) +
                                  " features, got " + features.shape_str());
    if (features.rows() < static_cast<std::size_t>(cfg_.encoder.total_reduction()))
      throw std::invalid_argument("encode: " + std::to_string(features.rows()) +
                                  " frames too short for total time reduction " +
                                  std::to_string(cfg_.encoder.total_reduction()));

    EncodeResult result;
    Var x = tape.constant(features);
    const int L = cfg_.encoder.num_layers;
    for (int l = 0; l < L; ++l) {
      auto fwd = lstm_sequence(tape, x, enc_fwd_[l], false);
      auto bwd = lstm_sequence(tape, x, enc_bwd_[l], true);
      std::vector<Var> rows;
      rows.reserve(fwd.size());
      for (std::size_t t = 0; t < fwd.size(); ++t) rows.push_back(concat({fwd[t], bwd[t]}, 1));
      Var y = concat(rows, 0);
      const int factor = cfg_.encoder.subsample_factors[l];
      if (factor > 1) y = time_max_pool(y, static_cast<std::size_t>(factor));
      result.layer_lengths.push_back(y.value().rows());

      const TapPoint here = l + 1 == L ? TapPoint::output() : TapPoint::at_layer(l + 1);
      for (const auto& spec : aux_specs_)
        if (spec.tap == here) result.taps[here] = y;

      if (train_mode && cfg_.encoder.dropout > 0.0) {
        if (!dropout_rng) throw std::invalid_argument("encode: dropout requires an rng");
        x = dropout(y, cfg_.encoder.dropout, *dropout_rng);
      } else {
        x = y;
      }
      if (l + 1 == L) result.encoder_output = y;
    }
    return result;
  }

  // Built-in encoder-output CTC head (never used in decoding).
  Var ctc_head(Tape& tape, const Var& encoder_output) const {
    return log_softmax(add(matmul(encoder_output, tape.param(ctc_w_)), tape.param(ctc_b_)));
  }

  // Per-frame log-posteriors of the auxiliary head for aux_specs()[index].
  Var tap_projection(Tape& tape, std::size_t index, const Var& tap_sequence) const {
    const auto& head = aux_heads_.at(index);
    if (aux_specs_[index].kind == AuxKind::CTC_LW)
      return log_softmax(add(matmul(tap_sequence, tape.param(head.w1)), tape.param(head.b1)));
    Var hidden = relu(add(matmul(tap_sequence, tape.param(head.w1)), tape.param(head.b1)));
    return log_softmax(add(matmul(hidden, tape.param(head.w2)), tape.param(head.b2)));
  }

  struct DecoderState {
    Var s, c, accum;  // accum: T' x 1 cumulative attention
  };

  struct DecoderContext {
    Var memory;  // T' x 2H
    Var h_proj;  // T' x A
    Var embed;   // V x Em
  };

  struct StepResult {
    Var logits;     // 1 x V
    Var attention;  // 1 x T'
    DecoderState state;
  };

  DecoderContext decoder_begin(Tape& tape, const Var& encoder_output) const {
    return {encoder_output, matmul(encoder_output, tape.param(att_h_)), tape.param(embed_)};
  }

  DecoderState initial_state(Tape& tape, std::size_t enc_len) const {
    const std::size_t S = static_cast<std::size_t>(cfg_.decoder.state_dim);
    return {tape.constant(Tensor({1, S})), tape.constant(Tensor({1, S})),
            tape.constant(Tensor({enc_len, 1}))};
  }

  StepResult decoder_step(Tape& tape, const DecoderContext& ctx, const DecoderState& state,
                          int prev_token) const {
    if (prev_token < 0 || prev_token >= cfg_.decoder.vocab_size)
      throw std::invalid_argument("decoder_step: token id out of range");
    // Additive attention with a cumulative-attention feedback term.
    Var s_proj = matmul(state.s, tape.param(att_s_));
    Var fert = matmul(state.accum, tape.param(att_f_));
    Var pre = tanh_op(add(add(add(ctx.h_proj, fert), s_proj), tape.param(att_b_)));
    Var attention = softmax(transpose(matmul(pre, tape.param(att_v_))));  // 1 x T'
    Var context = matmul(attention, ctx.memory);                          // 1 x 2H

    Var emb = slice_rows(ctx.embed, static_cast<std::size_t>(prev_token),
                         static_cast<std::size_t>(prev_token) + 1);
    Var x = concat({emb, context}, 1);
    Var x_pre = add(matmul(x, tape.param(dec_lstm_.wx)), tape.param(dec_lstm_.b));
    detail::LstmState next =
        detail::lstm_cell(tape, x_pre, detail::LstmState{state.s, state.c}, dec_lstm_);

    Var logits = add(matmul(concat({next.h, context}, 1), tape.param(out_w_)),
                     tape.param(out_b_));
    DecoderState new_state{next.h, next.c, add(state.accum, transpose(attention))};
    return {logits, attention, new_state};
  }

  // Teacher-forced pass: position i conditions on encoder memory and gold
  // tokens < i; returns stacked logits, one row per target position.
  Var decode_teacher_forced(Tape& tape, const Var& encoder_output,
                            const std::vector<int>& targets) const {
    if (targets.empty()) throw std::invalid_argument("decode: empty target sequence");
    if (targets.back() != cfg_.decoder.eos_id)
      throw std::invalid_argument("decode: targets must end with the sentence-end token");
    DecoderContext ctx = decoder_begin(tape, encoder_output);
    DecoderState state = initial_state(tape, encoder_output.value().rows());
    std::vector<Var> rows;
    rows.reserve(targets.size());
    int prev = cfg_.decoder.eos_id;  // sentence-end doubles as the start symbol
    for (std::size_t i = 0; i < targets.size(); ++i) {
      StepResult step = decoder_step(tape, ctx, state, prev);
      rows.push_back(step.logits);
      state = step.state;
      prev = targets[i];
    }
    return concat(rows, 0);
  }

 private:
  struct AuxHead {
    ParameterPtr w1, b1, w2, b2;
  };

  ModelConfig cfg_;
  std::vector<AuxTaskSpec> aux_specs_;
  ParameterStore params_;
  std::vector<LstmParams> enc_fwd_, enc_bwd_;
  ParameterPtr ctc_w_, ctc_b_;
  ParameterPtr embed_, att_h_, att_s_, att_f_, att_b_, att_v_;
  LstmParams dec_lstm_;
  ParameterPtr out_w_, out_b_;
  std::vector<AuxHead> aux_heads_;
};

}  // namespace auxsup
