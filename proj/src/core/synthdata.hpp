// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "core/numkit.hpp"
#include "core/translate.hpp"
#include "core/vocab.hpp"

namespace actseq {

enum class TransitionKind {
  kUniform,   // every class equally likely, including repeats
  kNoRepeat,  // uniform over the other C-1 classes
  kCustom,    // row-stochastic matrix supplied in `transition`
};

/// Generator settings. Frames are prototype + N(0, noise_sigma^2) noise.
struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t input_dim = 16;
  std::size_t min_actions = 2;
  std::size_t max_actions = 5;
  std::size_t min_duration = 4;
  std::size_t max_duration = 10;
  double separation = 4.0;
  double noise_sigma = 0.5;
  TransitionKind transition_kind = TransitionKind::kNoRepeat;
  Matrix transition;  // C x C, only for kCustom
  std::uint64_t seed = 7;

  /// Throws kInvalidArgument naming the offending field.
  void validate() const;
};

/// Half-open frame range [start, end) labelled with one class.
struct Boundary {
  std::size_t start = 0;
  std::size_t end = 0;
  Token label = 0;

  friend bool operator==(const Boundary&, const Boundary&) = default;
};

struct Sample {
  FeatureSequence features;
  ActionSequence actions;
  TokenSeq caption;                  // word ids
  std::vector<Boundary> boundaries;  // evaluation only; empty when unknown
};

struct Dataset {
  ActionVocabulary actions;
  WordVocabulary words;
  std::vector<Sample> samples;

  std::size_t input_dim() const;
  std::size_t longest_target() const;
  std::size_t longest_caption() const;
};

ActionVocabulary synthetic_action_vocabulary(std::size_t num_classes);
WordVocabulary synthetic_word_vocabulary(std::size_t num_classes);

/// "the person <verb_a> then the person <verb_b> ..." as word ids.
TokenSeq caption_for(const ActionSequence& actions, const WordVocabulary& words);

/// Class prototypes, drawn once per spec with pairwise distance at least
/// `separation`. Throws kGeneration when the bounded rejection loop fails.
std::vector<Vec> prototypes(const SyntheticSpec& spec);

/// Samples `first_index .. first_index + count - 1`. Each sample draws from
/// its own generator seeded by the spec seed and its index, so disjoint index
/// ranges give independent splits sharing one set of prototypes.
Dataset generate(const SyntheticSpec& spec, std::size_t count, std::size_t first_index = 0);

/// Dataset container (JSON):
///   {"format": "actseq-dataset", "version": 1,
///    "actions": [class names], "words": [word names],
///    "samples": [{"id", "T", "D_in", "features": [T*D_in row-major],
///                 "actions": [names], "caption": [words],
///                 "boundaries": [[start, end, name], ...]}]}
/// Doubles are written in shortest round-trip form.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Features: blocks of a "T D_in" header followed by T rows of D_in numbers.
/// Labels: one line per block, "video_id action action ...". Class ids follow
/// first appearance unless `vocab` is given.
Dataset load_external(const std::filesystem::path& features_path,
                      const std::filesystem::path& labels_path,
                      const std::optional<ActionVocabulary>& vocab = std::nullopt);

}  // namespace actseq
