// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "core/numkit.hpp"
#include "core/vocab.hpp"

namespace actseq {

/// One evaluated metric on a 0-100 scale.
struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::size_t count = 0;

  /// {"metric": ..., "value": ..., "count": ...} on one line.
  std::string to_record() const;
};

enum class BleuMode { kCorpus, kSentenceAverage };

/// BLEU-n with clipped n-gram precision, uniform weights and brevity
/// penalty. Corpus mode pools counts over all pairs; any zero precision
/// yields 0.
MetricReport bleu(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
                  std::size_t max_order, BleuMode mode = BleuMode::kCorpus);

/// Position-wise matches over the longer length, in percent. Two empty
/// sequences score 100.
double seq_item_accuracy(const TokenSeq& predicted, const TokenSeq& ground_truth);

/// Mean seq_item_accuracy over paired lists.
MetricReport seq_item_accuracy(const std::vector<TokenSeq>& predicted,
                               const std::vector<TokenSeq>& ground_truth);

/// LCS F-measure with beta = 1.2, in percent.
double rouge_l(const TokenSeq& candidate, const TokenSeq& reference);

/// Mean ROUGE-L over paired lists.
MetricReport rouge_l(const std::vector<TokenSeq>& candidates,
                     const std::vector<TokenSeq>& references);

/// Percent of pairs whose lengths differ by at most `tolerance`.
MetricReport length_within(const std::vector<TokenSeq>& predicted,
                           const std::vector<TokenSeq>& ground_truth, std::size_t tolerance);

/// Average precision of one ranked column. Ties keep frame order.
double average_precision(ConstSpan scores, const std::vector<bool>& labels);

/// Frame-level mAP: per class AP of frames ranked by score, averaged over
/// classes that have at least one positive, in percent.
double frame_map(const Matrix& scores, const std::vector<std::vector<bool>>& labels);

}  // namespace actseq
