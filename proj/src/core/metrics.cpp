// SPDX-License-Identifier: Apache-2.0
#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "json.hpp"

namespace actseq {

std::string MetricReport::to_record() const {
  nlohmann::ordered_json j;
  j["metric"] = metric;
  j["value"] = value;
  j["count"] = count;
  return j.dump();
}

namespace {

using NgramCounts = std::map<TokenSeq, std::size_t>;

NgramCounts count_ngrams(const TokenSeq& s, std::size_t n) {
  NgramCounts counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++counts[TokenSeq(s.begin() + static_cast<std::ptrdiff_t>(i),
                      s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

struct BleuStats {
  std::vector<std::size_t> matches, totals;
  std::size_t cand_len = 0, ref_len = 0;
};

void accumulate(BleuStats& st, const TokenSeq& cand, const TokenSeq& ref, std::size_t max_order) {
  st.cand_len += cand.size();
  st.ref_len += ref.size();
  for (std::size_t n = 1; n <= max_order; ++n) {
    const auto c = count_ngrams(cand, n);
    const auto r = count_ngrams(ref, n);
    for (const auto& [gram, cnt] : c) {
      auto it = r.find(gram);
      if (it != r.end()) st.matches[n - 1] += std::min(cnt, it->second);
    }
    st.totals[n - 1] += cand.size() >= n ? cand.size() - n + 1 : 0;
  }
}

double bleu_from_stats(const BleuStats& st, std::size_t max_order) {
  if (st.cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_order; ++n) {
    if (st.totals[n] == 0 || st.matches[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(st.matches[n]) / static_cast<double>(st.totals[n]));
  }
  const double bp = st.cand_len > st.ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(st.ref_len) /
                                             static_cast<double>(st.cand_len));
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(max_order));
}

void check_pairs(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    fail(ErrorCode::kInvalidArgument, std::string(what) + ": " + std::to_string(a) +
                                          " candidates vs " + std::to_string(b) + " references");
  }
  require(a >= 1, std::string(what) + ": needs at least one pair");
}

}  // namespace

MetricReport bleu(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
                  std::size_t max_order, BleuMode mode) {
  check_pairs(candidates.size(), references.size(), "bleu");
  require(max_order >= 1, "bleu: order must be at least 1");
  MetricReport rep{"BLEU-" + std::to_string(max_order), 0.0, candidates.size()};
  if (mode == BleuMode::kCorpus) {
    BleuStats st{std::vector<std::size_t>(max_order, 0), std::vector<std::size_t>(max_order, 0)};
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      accumulate(st, candidates[i], references[i], max_order);
    }
    rep.value = bleu_from_stats(st, max_order);
  } else {
    double sum = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      BleuStats st{std::vector<std::size_t>(max_order, 0), std::vector<std::size_t>(max_order, 0)};
      accumulate(st, candidates[i], references[i], max_order);
      sum += bleu_from_stats(st, max_order);
    }
    rep.value = sum / static_cast<double>(candidates.size());
  }
  return rep;
}

double seq_item_accuracy(const TokenSeq& predicted, const TokenSeq& ground_truth) {
  const std::size_t denom = std::max(predicted.size(), ground_truth.size());
  if (denom == 0) return 100.0;
  std::size_t matches = 0;
  const std::size_t n = std::min(predicted.size(), ground_truth.size());
  for (std::size_t i = 0; i < n; ++i) matches += predicted[i] == ground_truth[i] ? 1 : 0;
  return 100.0 * static_cast<double>(matches) / static_cast<double>(denom);
}

MetricReport seq_item_accuracy(const std::vector<TokenSeq>& predicted,
                               const std::vector<TokenSeq>& ground_truth) {
  check_pairs(predicted.size(), ground_truth.size(), "seq_item_accuracy");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += seq_item_accuracy(predicted[i], ground_truth[i]);
  return {"seq-item-accuracy", sum / static_cast<double>(predicted.size()), predicted.size()};
}

double rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
  require(!reference.empty(), "rouge_l: empty reference");
  if (candidate.empty()) return 0.0;
  // Rolling-row LCS table.
  std::vector<std::size_t> prev(reference.size() + 1, 0), cur(reference.size() + 1, 0);
  for (Token c : candidate) {
    for (std::size_t j = 1; j <= reference.size(); ++j) {
      cur[j] = c == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[reference.size()]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  constexpr double beta2 = 1.2 * 1.2;
  return 100.0 * ((1.0 + beta2) * p * r) / (r + beta2 * p);
}

MetricReport rouge_l(const std::vector<TokenSeq>& candidates,
                     const std::vector<TokenSeq>& references) {
  check_pairs(candidates.size(), references.size(), "rouge_l");
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) sum += rouge_l(candidates[i], references[i]);
  return {"ROUGE-L", sum / static_cast<double>(candidates.size()), candidates.size()};
}

MetricReport length_within(const std::vector<TokenSeq>& predicted,
                           const std::vector<TokenSeq>& ground_truth, std::size_t tolerance) {
  check_pairs(predicted.size(), ground_truth.size(), "length_within");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const std::size_t a = predicted[i].size(), b = ground_truth[i].size();
    if ((a > b ? a - b : b - a) <= tolerance) ++ok;
  }
  return {"length-within-" + std::to_string(tolerance),
          100.0 * static_cast<double>(ok) / static_cast<double>(predicted.size()), predicted.size()};
}

double average_precision(ConstSpan scores, const std::vector<bool>& labels) {
  require(scores.size() == labels.size(), "average_precision: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

double frame_map(const Matrix& scores, const std::vector<std::vector<bool>>& labels) {
  require(labels.size() == scores.rows(), "frame_map: label rows do not match score rows");
  for (const auto& row : labels) require(row.size() == scores.cols(), "frame_map: label width mismatch");
  double sum = 0.0;
  std::size_t classes = 0;
  Vec column(scores.rows());
  std::vector<bool> col_labels(scores.rows());
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    bool any = false;
    for (std::size_t f = 0; f < scores.rows(); ++f) {
      column[f] = scores(f, c);
      col_labels[f] = labels[f][c];
      any = any || col_labels[f];
    }
    if (!any) continue;
    sum += average_precision(column, col_labels);
    ++classes;
  }
  if (classes == 0) fail(ErrorCode::kInvalidArgument, "frame_map: no positive labels");
  return 100.0 * sum / static_cast<double>(classes);
}

}  // namespace actseq
