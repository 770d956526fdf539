// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "core/synthdata.hpp"
#include "core/translate.hpp"

namespace actseq {

enum class ForcingGranularity { kPerSequence, kPerStep };

struct TrainingConfig {
  std::size_t hidden_dim = 512;
  std::size_t embedding_dim = 512;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  double teacher_forcing_prob = 0.5;
  std::size_t patience = 3;
  std::uint64_t seed = 7;
  double clip_norm = 5.0;
  ForcingGranularity forcing = ForcingGranularity::kPerSequence;
  std::size_t baseline_layers = 2;  // stacking depth for LSTM-Mean / LSTM-SS
  std::size_t max_decode_len = 0;   // 0: 2 * (longest training target + 1)
  std::size_t workers = 1;

  /// hidden 512, embedding 512, batch 32, 10 epochs.
  static TrainingConfig full();
  /// hidden 64, embedding 32, batch 8, 20 epochs.
  static TrainingConfig desk();

  void validate() const;
};

/// One (input sequence, target tokens) pair. `inputs` is borrowed.
struct Example {
  const std::vector<Vec>* inputs = nullptr;
  TokenSeq target;
};

enum class TargetKind { kActions, kCaption };

std::vector<Example> make_examples(const Dataset& data, TargetKind kind);

struct LossResult {
  double loss = 0.0;
  std::size_t steps = 0;
};

/// Teacher-forced cross-entropy over p+1 decoder steps (targets then EOS).
/// `forcing[q]` selects ground truth for the step-q input; entry 0 is unused
/// since step 0 always feeds SOS. Gradients accumulate into `grads` when
/// non-null.
LossResult sequence_loss(const Seq2SeqModel& model, const std::vector<Vec>& inputs,
                         const TokenSeq& target, const std::vector<bool>& forcing,
                         Seq2SeqModel* grads);

/// Mini-batch of example indices with targets padded by PAD to a common
/// length. PAD positions add no loss.
struct Batch {
  std::vector<std::size_t> indices;
  std::vector<TokenSeq> padded_targets;
};

/// Shuffles, buckets by target length, chunks and shuffles batch order.
std::vector<Batch> make_batches(const std::vector<Example>& examples, std::size_t batch_size,
                                Token pad, std::mt19937_64& rng);

/// Strips trailing PAD tokens.
TokenSeq unpad(const TokenSeq& padded, Token pad);

/// Per-step forcing flags of length `steps` for one sequence.
std::vector<bool> draw_forcing(std::size_t steps, double prob, ForcingGranularity mode,
                               std::mt19937_64& rng);

class Adam {
 public:
  Adam(std::size_t size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);
  void step(Vec& params, const Vec& grad);

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  Vec m_, v_;
};

/// Rescales `grad` in place when its L2 norm exceeds `max_norm`; returns the
/// norm before clipping.
double clip_global_norm(Vec& grad, double max_norm);

/// Mean per-step loss of `examples` with full teacher forcing.
double evaluate_loss(const Seq2SeqModel& model, const std::vector<Example>& examples);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_bleu1 = 0.0;
};

/// "epoch,train_loss,val_loss,val_bleu1" followed by one row per epoch.
std::string format_loss_log(const std::vector<EpochLog>& log);

struct TrainResult {
  Seq2SeqModel model;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

/// Fresh model of `variant` sized for `data` and `config`.
Seq2SeqModel create_model(Variant variant, std::size_t input_dim, std::size_t token_count,
                          const TrainingConfig& config, std::uint64_t vocab_hash = 0);

std::size_t default_max_decode_len(const std::vector<Example>& train);

/// Adam training with per-sequence teacher forcing draws, gradient clipping
/// and early stopping on validation loss. Epoch 0 in the log is the
/// untrained model. Returns the best-validation checkpoint.
TrainResult train(Seq2SeqModel model, const std::vector<Example>& train_set,
                  const std::vector<Example>& val_set, const TrainingConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Greedy decodes for every example.
std::vector<TokenSeq> predict_all(const Seq2SeqModel& model, const std::vector<Example>& examples,
                                  std::size_t max_decode_len);

}  // namespace actseq
