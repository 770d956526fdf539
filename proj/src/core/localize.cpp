// SPDX-License-Identifier: Apache-2.0
#include "core/localize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "core/metrics.hpp"

namespace actseq {

std::vector<std::size_t> evaluation_timestamps(std::size_t length) {
  require(length >= 1, "evaluation_timestamps: empty sequence");
  std::vector<std::size_t> out;
  out.reserve(kLocalizationFrames);
  const double t_len = static_cast<double>(length);
  for (std::size_t k = 0; k < kLocalizationFrames; ++k) {
    const double pos = static_cast<double>(k) * t_len / static_cast<double>(kLocalizationFrames) +
                       t_len / (2.0 * static_cast<double>(kLocalizationFrames));
    auto step = static_cast<std::size_t>(std::llround(pos));
    out.push_back(std::min(step, length - 1));
  }
  return out;
}

Matrix localization_scores(const Prediction& prediction, std::span<const std::size_t> timestamps,
                           std::size_t num_classes, LocalizationRule rule) {
  require(prediction.attention.has_value(), "localize: prediction carries no attention trace");
  const Matrix& alpha = prediction.attention->weights;
  require(alpha.cols() == prediction.step_scores.size(), "localize: attention/step count mismatch");
  std::vector<Vec> dists;
  for (const auto& s : prediction.step_scores) dists.push_back(softmax(s));

  Matrix grid(timestamps.size(), num_classes);
  for (std::size_t k = 0; k < timestamps.size(); ++k) {
    const std::size_t t = timestamps[k];
    require(t < alpha.rows(), "localize: timestamp beyond sequence length");
    if (rule == LocalizationRule::kAttentionMass) {
      for (std::size_t q = 0; q < dists.size(); ++q) {
        const double w = alpha(t, q);
        for (std::size_t c = 0; c < num_classes; ++c) grid(k, c) += w * dists[q][c];
      }
    } else {
      std::size_t best = 0;
      for (std::size_t q = 1; q < dists.size(); ++q) {
        if (alpha(t, q) > alpha(t, best)) best = q;
      }
      for (std::size_t c = 0; c < num_classes; ++c) grid(k, c) = dists[best][c];
    }
  }
  return grid;
}

LocalizationGrid localize(const Seq2SeqModel& model, const FeatureSequence& features,
                          std::size_t max_decode_len, LocalizationRule rule) {
  if (model.variant != Variant::kGruAa) {
    fail(ErrorCode::kUnsupported, "localize: requires an attention model (gru-aa), got " +
                                      std::string(variant_name(model.variant)));
  }
  const Prediction pred = translate(model, features, max_decode_len);
  LocalizationGrid g;
  g.video_id = features.source_id;
  g.length = features.length();
  g.timestamps = evaluation_timestamps(features.length());
  g.scores = localization_scores(pred, g.timestamps, model.dims.class_count(), rule);
  return g;
}

std::vector<std::vector<bool>> frame_labels(const LocalizationGrid& grid, const Sample& sample,
                                            std::size_t num_classes) {
  if (sample.boundaries.empty()) {
    fail(ErrorCode::kInvalidArgument,
         "evaluate_localization: sample " + sample.features.source_id + " has no boundaries");
  }
  std::vector<std::vector<bool>> labels(grid.timestamps.size(), std::vector<bool>(num_classes, false));
  for (std::size_t k = 0; k < grid.timestamps.size(); ++k) {
    const std::size_t t = grid.timestamps[k];
    for (const auto& b : sample.boundaries) {
      if (t >= b.start && t < b.end && b.label < num_classes) labels[k][b.label] = true;
    }
  }
  return labels;
}

namespace {

struct Pooled {
  Matrix scores;
  std::vector<std::vector<bool>> labels;
};

Pooled pool(const std::vector<LocalizationGrid>& grids, const std::vector<Sample>& samples) {
  require(!grids.empty(), "evaluate_localization: no grids");
  require(grids.size() == samples.size(), "evaluate_localization: grid/sample count mismatch");
  const std::size_t classes = grids.front().scores.cols();
  std::size_t rows = 0;
  for (const auto& g : grids) {
    require(g.scores.cols() == classes, "evaluate_localization: inconsistent class counts");
    rows += g.scores.rows();
  }
  Pooled p{Matrix(rows, classes), {}};
  std::size_t r = 0;
  for (std::size_t i = 0; i < grids.size(); ++i) {
    auto labels = frame_labels(grids[i], samples[i], classes);
    for (std::size_t k = 0; k < grids[i].scores.rows(); ++k, ++r) {
      std::copy(grids[i].scores.row(k).begin(), grids[i].scores.row(k).end(), p.scores.row(r).begin());
      p.labels.push_back(std::move(labels[k]));
    }
  }
  return p;
}

}  // namespace

double evaluate_localization(const std::vector<LocalizationGrid>& grids,
                             const std::vector<Sample>& samples) {
  const Pooled p = pool(grids, samples);
  return frame_map(p.scores, p.labels);
}

double shuffled_baseline_map(const std::vector<LocalizationGrid>& grids,
                             const std::vector<Sample>& samples, std::uint64_t seed) {
  Pooled p = pool(grids, samples);
  std::vector<std::size_t> perm(p.scores.rows());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix shuffled(p.scores.rows(), p.scores.cols());
  for (std::size_t r = 0; r < perm.size(); ++r) {
    std::copy(p.scores.row(perm[r]).begin(), p.scores.row(perm[r]).end(), shuffled.row(r).begin());
  }
  return frame_map(shuffled, p.labels);
}

void write_grid(std::ostream& out, const LocalizationGrid& grid) {
  out << grid.video_id << ' ' << grid.length << '\n';
  char buf[64];
  for (std::size_t k = 0; k < grid.scores.rows(); ++k) {
    for (std::size_t c = 0; c < grid.scores.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", grid.scores(k, c));
      out << (c ? " " : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace actseq
