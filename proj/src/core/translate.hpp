// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "core/cells.hpp"
#include "core/numkit.hpp"
#include "core/vocab.hpp"

namespace actseq {

enum class Variant { kLstmMean, kLstmSs, kLstmEd, kGruAa };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

/// T frames of dimension D_in.
struct FeatureSequence {
  std::string source_id;
  std::vector<Vec> frames;

  std::size_t length() const { return frames.size(); }
  std::size_t dim() const { return frames.empty() ? 0 : frames.front().size(); }
};

struct ModelDims {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t embed_dim = 0;
  std::size_t token_count = 0;  // C + 3
  std::size_t layers = 1;       // stacked depth for the LSTM variants

  std::size_t class_count() const { return token_count - 3; }
  Token sos() const { return static_cast<Token>(token_count - 3); }
  Token eos() const { return sos() + 1; }
  Token pad() const { return sos() + 2; }
};

/// Parameters of one model variant. Unused pieces stay empty; attention
/// weights exist only for GRU-AA.
struct Seq2SeqModel {
  Variant variant = Variant::kGruAa;
  ModelDims dims;
  std::uint64_t vocab_hash = 0;

  std::vector<LstmCellParams> encoder_lstm;  // LSTM-ED
  std::vector<LstmCellParams> decoder_lstm;  // LSTM-ED decoder, LSTM-Mean/SS stack
  std::optional<GruCellParams> encoder_gru;  // GRU-AA
  std::optional<GruCellParams> decoder_gru;
  Matrix embedding;                    // (C+3) x E
  std::optional<Matrix> attention_w;   // 2H x H
  std::optional<Matrix> attention_v;   // 1 x H
  Matrix output_w;                     // (C+3) x K
  Matrix output_b;                     // (C+3) x 1

  /// Uniform init in [-1/sqrt(H), 1/sqrt(H)] from `seed`.
  static Seq2SeqModel create(Variant variant, const ModelDims& dims, std::uint64_t seed,
                             std::uint64_t vocab_hash = 0);
  Seq2SeqModel zeros_like() const;

  /// Width of the vector the output projection reads.
  std::size_t output_input_dim() const;

  /// Visits every parameter matrix in a fixed order as (name, matrix).
  template <class Self, class F>
  static void each(Self& self, F&& f);

  std::size_t parameter_count() const;
  Vec flatten() const;
  void assign(ConstSpan flat);
  void add_scaled(const Seq2SeqModel& other, double alpha);
  void set_zero();
  bool all_finite() const;
};

bool operator==(const Seq2SeqModel& a, const Seq2SeqModel& b);

/// Output of the encoder: per-step top-layer states plus the final state of
/// every layer, which initializes the LSTM-ED decoder.
struct EncoderOutput {
  std::vector<Vec> states;
  std::vector<Vec> final_h;
  std::vector<Vec> final_c;
};

/// T x Q matrix of attention weights; column q is the distribution used at
/// decoding step q.
struct AttentionTrace {
  Matrix weights;
};

struct Prediction {
  ActionSequence tokens;  // EOS stripped
  std::vector<Vec> step_scores;
  std::optional<AttentionTrace> attention;
};

EncoderOutput encode(const Seq2SeqModel& model, const FeatureSequence& features);

/// Additive attention over encoder states given the previous decoder state.
Vec attention(const Seq2SeqModel& model, const std::vector<Vec>& states, ConstSpan decoder_state);

/// sum_j alpha_j * states_j
Vec context_vector(const std::vector<Vec>& states, ConstSpan alpha);

Prediction decode_greedy(const Seq2SeqModel& model, const EncoderOutput& encoded,
                         std::size_t max_decode_len);

/// LSTM-Mean and LSTM-SS inference.
Prediction forward_baseline(const Seq2SeqModel& model, const FeatureSequence& features,
                            std::size_t max_decode_len);

/// Greedy translation for any variant.
Prediction translate(const Seq2SeqModel& model, const FeatureSequence& features,
                     std::size_t max_decode_len);

/// Argmax over the output scores with SOS and PAD excluded.
Token decode_argmax(ConstSpan scores, const ModelDims& dims);

// ---------------------------------------------------------------------------
// Differentiable forward pass shared by inference, training and captioning.

/// Selects the token fed to the decoder at every step and when to stop.
struct DecodePolicy {
  std::size_t max_steps = 1;
  bool stop_at_eos = true;
  /// Teacher-forcing source y_1..y_p; step q >= 1 feeds targets[q-1] when
  /// forcing[q] is set and the previous argmax otherwise.
  const TokenSeq* targets = nullptr;
  std::vector<bool> forcing;

  static DecodePolicy greedy(std::size_t max_decode_len);
  static DecodePolicy teacher(const TokenSeq& targets, std::vector<bool> forcing);
};

struct ForwardTrace {
  bool cached = false;
  std::size_t input_dim = 0;
  std::size_t length = 0;  // T

  // Encoder side.
  std::vector<std::vector<LstmCache>> enc_lstm;  // [t][layer]
  std::vector<GruCache> enc_gru;
  std::vector<Vec> enc_states;
  std::vector<Vec> enc_proj;  // encoder half of the attention pre-activation
  std::vector<Vec> init_h, init_c;
  Vec mean_input;

  // Decoder side, one entry per step.
  std::vector<Token> fed;
  std::vector<std::vector<LstmCache>> dec_lstm;
  std::vector<GruCache> dec_gru;
  std::vector<Vec> dec_prev_h;
  std::vector<Matrix> att_hidden;  // tanh activations, T x H per step
  std::vector<Vec> alpha;
  std::vector<Vec> context;
  std::vector<Vec> out_input;
  std::vector<Vec> scores;
  std::vector<Token> argmax;
  bool hit_eos = false;

  std::size_t steps() const { return scores.size(); }
};

/// Runs encoder and decoder over `inputs` (T vectors) under `policy`. With
/// `keep_cache` the trace can be fed to `backward`.
ForwardTrace forward(const Seq2SeqModel& model, const std::vector<Vec>& inputs,
                     const DecodePolicy& policy, bool keep_cache);

/// Back-propagates per-step score gradients. Parameter gradients accumulate
/// into `grads`; input gradients are written to `dinputs` when non-null.
void backward(const Seq2SeqModel& model, const ForwardTrace& trace,
              const std::vector<Vec>& dscores, Seq2SeqModel& grads, std::vector<Vec>* dinputs);

/// Converts a greedy trace into a Prediction.
Prediction to_prediction(const Seq2SeqModel& model, const ForwardTrace& trace);

// ---------------------------------------------------------------------------
// Checkpoints: binary container with magic, variant, dimensions, vocabulary
// hash and every parameter matrix as raw little-endian doubles.

void save_model(const Seq2SeqModel& model, std::ostream& out);
Seq2SeqModel load_model(std::istream& in);
void save_model(const Seq2SeqModel& model, const std::filesystem::path& path);
Seq2SeqModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

template <class Self, class F>
void Seq2SeqModel::each(Self& self, F&& f) {
  auto prefixed = [&f](const std::string& prefix) {
    return [&f, prefix](std::string_view name, auto& m) { f(prefix + std::string(name), m); };
  };
  for (std::size_t l = 0; l < self.encoder_lstm.size(); ++l) {
    LstmCellParams::each(self.encoder_lstm[l], prefixed("encoder_lstm." + std::to_string(l) + "."));
  }
  for (std::size_t l = 0; l < self.decoder_lstm.size(); ++l) {
    LstmCellParams::each(self.decoder_lstm[l], prefixed("decoder_lstm." + std::to_string(l) + "."));
  }
  if (self.encoder_gru) GruCellParams::each(*self.encoder_gru, prefixed("encoder_gru."));
  if (self.decoder_gru) GruCellParams::each(*self.decoder_gru, prefixed("decoder_gru."));
  f(std::string("embedding"), self.embedding);
  if (self.attention_w) f(std::string("attention_w"), *self.attention_w);
  if (self.attention_v) f(std::string("attention_v"), *self.attention_v);
  f(std::string("output_w"), self.output_w);
  f(std::string("output_b"), self.output_b);
}

}  // namespace actseq
