// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "core/synthdata.hpp"
#include "core/train.hpp"
#include "core/translate.hpp"

namespace actseq {

/// Q per-step decoder score vectors of width C+3, EOS step included.
using ScoreSequence = std::vector<Vec>;

/// Two chained GRU-AA models: features -> action scores -> words.
struct CaptionPipeline {
  Seq2SeqModel stage1;  // feature -> action
  Seq2SeqModel stage2;  // score vector -> word
  bool normalize_scores = false;  // feed softmax(scores) instead of raw scores
  std::size_t action_max_len = 1;
  std::size_t word_max_len = 1;

  void validate() const;
};

CaptionPipeline create_pipeline(std::size_t input_dim, std::size_t action_tokens,
                                std::size_t word_tokens, const TrainingConfig& config,
                                std::size_t action_max_len, std::size_t word_max_len);

/// Greedy stage-1 decode returning raw score vectors. Argmax is used only
/// to detect EOS and choose the next input embedding.
ScoreSequence stage1_scores(const CaptionPipeline& pipeline, const FeatureSequence& features);

/// Word ids of the generated caption, EOS stripped.
TokenSeq caption(const CaptionPipeline& pipeline, const FeatureSequence& features);

struct PipelineGrads {
  Seq2SeqModel stage1;
  Seq2SeqModel stage2;
};

/// Caption cross-entropy of the whole pipeline. Stage 1 decodes greedily;
/// stage 2 is teacher-forced per `forcing`. Gradients flow through the
/// stage-2 encoder into the stage-1 scores.
LossResult joint_loss(const CaptionPipeline& pipeline, const FeatureSequence& features,
                      const TokenSeq& words, const std::vector<bool>& forcing, PipelineGrads* grads);

struct PipelineTrainResult {
  CaptionPipeline pipeline;
  std::vector<EpochLog> stage1_log;
  std::vector<EpochLog> joint_log;  // val_bleu1 is caption BLEU-1
};

/// Phase 1 trains stage 1 on actions exactly like `train`; phase 2 trains
/// both stages jointly on captions. A stage-1 model that is already trained
/// can be supplied to skip phase 1.
PipelineTrainResult train_pipeline(CaptionPipeline pipeline, const Dataset& train_data,
                                   const Dataset& val_data, const TrainingConfig& stage1_config,
                                   const TrainingConfig& joint_config,
                                   const std::function<void(const char*, const EpochLog&)>& on_epoch = {},
                                   bool skip_stage1 = false);

std::vector<TokenSeq> caption_all(const CaptionPipeline& pipeline, const Dataset& data);

void save_pipeline(const CaptionPipeline& pipeline, const std::filesystem::path& path);
CaptionPipeline load_pipeline(const std::filesystem::path& path);

}  // namespace actseq
