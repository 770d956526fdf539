// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "core/synthdata.hpp"
#include "core/translate.hpp"

namespace actseq {

inline constexpr std::size_t kLocalizationFrames = 25;

/// Per-frame class scores at 25 equidistant encoder steps.
struct LocalizationGrid {
  std::string video_id;
  std::size_t length = 0;              // T of the source sequence
  std::vector<std::size_t> timestamps;  // encoder step per evaluation frame
  Matrix scores;                        // 25 x C
};

enum class LocalizationRule {
  /// score(t, c) = sum_q alpha[t, q] * softmax(step_scores_q)[c]
  kAttentionMass,
  /// Each frame takes the class distribution of the step attending to it most.
  kNearestStep,
};

/// round(k * T / 25 + T / 50), clamped to [0, T).
std::vector<std::size_t> evaluation_timestamps(std::size_t length);

/// Transfers decoded class distributions onto the timeline through the
/// attention trace of a greedy decode.
LocalizationGrid localize(const Seq2SeqModel& model, const FeatureSequence& features,
                          std::size_t max_decode_len,
                          LocalizationRule rule = LocalizationRule::kAttentionMass);

/// Scoring step of `localize`, exposed for direct testing.
Matrix localization_scores(const Prediction& prediction, std::span<const std::size_t> timestamps,
                           std::size_t num_classes, LocalizationRule rule);

/// 25 x C membership labels of the evaluation frames.
std::vector<std::vector<bool>> frame_labels(const LocalizationGrid& grid, const Sample& sample,
                                            std::size_t num_classes);

/// Frame mAP pooled over all videos. Throws kInvalidArgument when a sample
/// has no boundaries.
double evaluate_localization(const std::vector<LocalizationGrid>& grids,
                             const std::vector<Sample>& samples);

/// Same evaluation after randomly permuting the pooled score rows.
double shuffled_baseline_map(const std::vector<LocalizationGrid>& grids,
                             const std::vector<Sample>& samples, std::uint64_t seed);

/// "video_id T" then 25 rows of C decimals.
void write_grid(std::ostream& out, const LocalizationGrid& grid);

}  // namespace actseq
