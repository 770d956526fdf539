// SPDX-License-Identifier: Apache-2.0
#include "core/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace actseq {

namespace {

struct ActionWord {
  const char* action;
  const char* verb;
};

constexpr ActionWord kActionWords[] = {
    {"open", "opens"},   {"close", "closes"}, {"take", "takes"},   {"put", "puts"},
    {"pour", "pours"},   {"wash", "washes"},  {"cut", "cuts"},     {"stir", "stirs"},
    {"sit", "sits"},     {"stand", "stands"}, {"walk", "walks"},   {"read", "reads"},
    {"write", "writes"}, {"eat", "eats"},     {"drink", "drinks"}, {"clean", "cleans"},
    {"throw", "throws"}, {"hold", "holds"},   {"push", "pushes"},  {"pull", "pulls"},
};
constexpr std::size_t kNamedActions = std::size(kActionWords);

// Word ids of the fixed template words.
constexpr Token kWordThe = 0;
constexpr Token kWordPerson = 1;
constexpr Token kWordThen = 2;
constexpr Token kFirstVerb = 3;

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  return splitmix64(seed ^ static_cast<std::uint64_t>(index));
}

}  // namespace

void SyntheticSpec::validate() const {
  require(num_classes >= 1, "num_classes must be at least 1");
  require(input_dim >= 1, "input_dim must be at least 1");
  require(min_actions >= 1, "min_actions (p_min) must be at least 1");
  require(max_actions >= min_actions, "max_actions (p_max) must be >= min_actions");
  require(min_duration >= 1, "min_duration (d_min) must be at least 1");
  require(max_duration >= min_duration, "max_duration (d_max) must be >= min_duration");
  require(std::isfinite(separation) && separation >= 0.0, "separation must be finite and >= 0");
  require(std::isfinite(noise_sigma) && noise_sigma >= 0.0, "noise_sigma must be finite and >= 0");
  if (transition_kind == TransitionKind::kNoRepeat) {
    require(num_classes >= 2 || max_actions == 1,
            "transition 'no-repeat' needs at least 2 classes");
  }
  if (transition_kind == TransitionKind::kCustom) {
    require(transition.rows() == num_classes && transition.cols() == num_classes,
            "transition matrix must be C x C");
    for (std::size_t i = 0; i < num_classes; ++i) {
      double sum = 0.0;
      for (double v : transition.row(i)) {
        require(v >= 0.0 && std::isfinite(v), "transition entries must be nonnegative");
        sum += v;
      }
      require(std::abs(sum - 1.0) <= 1e-9,
              "transition row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

std::size_t Dataset::input_dim() const {
  return samples.empty() ? 0 : samples.front().features.dim();
}

std::size_t Dataset::longest_target() const {
  std::size_t n = 0;
  for (const auto& s : samples) n = std::max(n, s.actions.size());
  return n;
}

std::size_t Dataset::longest_caption() const {
  std::size_t n = 0;
  for (const auto& s : samples) n = std::max(n, s.caption.size());
  return n;
}

ActionVocabulary synthetic_action_vocabulary(std::size_t num_classes) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < num_classes; ++c) {
    names.push_back(c < kNamedActions ? kActionWords[c].action : "action_" + std::to_string(c));
  }
  return ActionVocabulary(std::move(names));
}

WordVocabulary synthetic_word_vocabulary(std::size_t num_classes) {
  std::vector<std::string> words = {"the", "person", "then"};
  for (std::size_t c = 0; c < num_classes; ++c) {
    words.push_back(c < kNamedActions ? kActionWords[c].verb : "does_" + std::to_string(c));
  }
  return WordVocabulary(std::move(words));
}

TokenSeq caption_for(const ActionSequence& actions, const WordVocabulary& words) {
  TokenSeq out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (i > 0) out.push_back(kWordThen);
    out.push_back(kWordThe);
    out.push_back(kWordPerson);
    const Token verb = kFirstVerb + actions[i];
    require(verb < words.class_count(), "caption_for: action has no verb in the word vocabulary");
    out.push_back(verb);
  }
  return out;
}

std::vector<Vec> prototypes(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(splitmix64(spec.seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr int kMaxTries = 10000;
  std::vector<Vec> protos;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
      Vec v(spec.input_dim);
      double norm = 0.0;
      for (double& x : v) {
        x = normal(rng);
        norm += x * x;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      for (double& x : v) x *= spec.separation / norm;
      placed = std::all_of(protos.begin(), protos.end(), [&](const Vec& p) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) d2 += (v[k] - p[k]) * (v[k] - p[k]);
        return std::sqrt(d2) >= spec.separation;
      });
      if (placed) protos.push_back(std::move(v));
    }
    if (!placed) {
      fail(ErrorCode::kGeneration, "cannot place " + std::to_string(spec.num_classes) +
                                       " prototypes at separation " +
                                       std::to_string(spec.separation) + " in " +
                                       std::to_string(spec.input_dim) + " dimensions");
    }
  }
  return protos;
}

Dataset generate(const SyntheticSpec& spec, std::size_t count, std::size_t first_index) {
  require(count >= 1, "generate: count must be at least 1");
  const auto protos = prototypes(spec);
  Dataset data{synthetic_action_vocabulary(spec.num_classes),
               synthetic_word_vocabulary(spec.num_classes), {}};
  data.samples.reserve(count);
  const std::size_t c_count = spec.num_classes;

  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t index = first_index + k;
    std::mt19937_64 rng(sample_seed(spec.seed, index));
    std::uniform_int_distribution<std::size_t> p_dist(spec.min_actions, spec.max_actions);
    std::uniform_int_distribution<std::size_t> d_dist(spec.min_duration, spec.max_duration);
    std::uniform_int_distribution<std::size_t> first_dist(0, c_count - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    Sample s;
    s.features.source_id = "syn" + std::to_string(index);
    const std::size_t p = p_dist(rng);
    for (std::size_t j = 0; j < p; ++j) {
      Token a;
      if (j == 0) {
        a = static_cast<Token>(first_dist(rng));
      } else {
        const Token prev = s.actions.back();
        switch (spec.transition_kind) {
          case TransitionKind::kUniform:
            a = static_cast<Token>(first_dist(rng));
            break;
          case TransitionKind::kNoRepeat: {
            std::uniform_int_distribution<std::size_t> other(0, c_count - 2);
            std::size_t pick = other(rng);
            a = static_cast<Token>(pick >= prev ? pick + 1 : pick);
            break;
          }
          case TransitionKind::kCustom: {
            const double u = unit(rng);
            double acc = 0.0;
            a = static_cast<Token>(c_count - 1);
            for (std::size_t c = 0; c < c_count; ++c) {
              acc += spec.transition(prev, c);
              if (u < acc) {
                a = static_cast<Token>(c);
                break;
              }
            }
            break;
          }
        }
      }
      s.actions.push_back(a);
    }
    for (Token a : s.actions) {
      const std::size_t d = d_dist(rng);
      const std::size_t start = s.features.frames.size();
      for (std::size_t f = 0; f < d; ++f) {
        Vec frame = protos[a];
        for (double& x : frame) x += spec.noise_sigma * noise(rng);
        s.features.frames.push_back(std::move(frame));
      }
      s.boundaries.push_back({start, start + d, a});
    }
    s.caption = caption_for(s.actions, data.words);
    data.samples.push_back(std::move(s));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Dataset container

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  using nlohmann::ordered_json;
  ordered_json root;
  root["format"] = "actseq-dataset";
  root["version"] = 1;
  root["actions"] = data.actions.classes();
  root["words"] = data.words.classes();
  ordered_json samples = ordered_json::array();
  for (const auto& s : data.samples) {
    ordered_json j;
    j["id"] = s.features.source_id;
    j["T"] = s.features.length();
    j["D_in"] = s.features.dim();
    ordered_json feats = ordered_json::array();
    for (const auto& f : s.features.frames) {
      for (double v : f) feats.push_back(v);
    }
    j["features"] = std::move(feats);
    j["actions"] = data.actions.decode(s.actions);
    j["caption"] = data.words.decode(s.caption);
    ordered_json bounds = ordered_json::array();
    for (const auto& b : s.boundaries) {
      bounds.push_back(ordered_json::array({b.start, b.end, data.actions.name(b.label)}));
    }
    j["boundaries"] = std::move(bounds);
    samples.push_back(std::move(j));
  }
  root["samples"] = std::move(samples);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write dataset " + path.string());
  out << root.dump() << '\n';
  if (!out) fail(ErrorCode::kIo, "failed writing dataset " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open dataset " + path.string());
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, "dataset " + path.string() + ": " + e.what());
  }
  try {
    if (root.at("format") != "actseq-dataset") fail(ErrorCode::kParse, "not an actseq dataset");
    if (root.at("version") != 1) fail(ErrorCode::kParse, "unsupported dataset version");
    Dataset data{ActionVocabulary(root.at("actions").get<std::vector<std::string>>()),
                 WordVocabulary(root.at("words").get<std::vector<std::string>>()),
                 {}};
    for (const auto& j : root.at("samples")) {
      Sample s;
      s.features.source_id = j.at("id").get<std::string>();
      const auto t_len = j.at("T").get<std::size_t>();
      const auto dim = j.at("D_in").get<std::size_t>();
      const auto& feats = j.at("features");
      if (feats.size() != t_len * dim || t_len == 0 || dim == 0) {
        fail(ErrorCode::kParse, "sample " + s.features.source_id + ": feature count mismatch");
      }
      s.features.frames.assign(t_len, Vec(dim));
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t k = 0; k < dim; ++k) s.features.frames[t][k] = feats[t * dim + k].get<double>();
      }
      s.actions = data.actions.encode(j.at("actions").get<std::vector<std::string>>());
      s.caption = data.words.encode(j.at("caption").get<std::vector<std::string>>());
      if (j.contains("boundaries")) {
        for (const auto& b : j.at("boundaries")) {
          s.boundaries.push_back({b.at(0).get<std::size_t>(), b.at(1).get<std::size_t>(),
                                  data.actions.id(b.at(2).get<std::string>())});
        }
      }
      data.samples.push_back(std::move(s));
    }
    return data;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, "dataset " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// External features

namespace {

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Line {
  std::string_view text;
  std::size_t number;  // 1-based
  std::size_t offset;  // byte offset of the first character
  bool terminated;     // ended by '\n'
};

std::vector<Line> split_lines(std::string_view s) {
  std::vector<Line> lines;
  std::size_t pos = 0, number = 1;
  while (pos < s.size()) {
    const std::size_t nl = s.find('\n', pos);
    const bool term = nl != std::string_view::npos;
    const std::size_t end = term ? nl : s.size();
    std::string_view text = s.substr(pos, end - pos);
    if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
    lines.push_back({text, number++, pos, term});
    pos = term ? nl + 1 : s.size();
  }
  return lines;
}

std::vector<std::string_view> fields(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, const Line& line,
                             const std::string& what) {
  fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line.number) + " (byte offset " +
                              std::to_string(line.offset) + "): " + what);
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

Dataset load_external(const std::filesystem::path& features_path,
                      const std::filesystem::path& labels_path,
                      const std::optional<ActionVocabulary>& vocab) {
  const std::string feat_text = read_all(features_path);
  const auto lines = split_lines(feat_text);

  std::vector<FeatureSequence> blocks;
  std::size_t li = 0;
  std::size_t dim_seen = 0;
  while (li < lines.size()) {
    if (fields(lines[li].text).empty()) {
      ++li;
      continue;
    }
    const Line& header = lines[li++];
    const auto hf = fields(header.text);
    std::size_t t_len = 0, dim = 0;
    if (hf.size() != 2 || !parse_number(hf[0], t_len) || !parse_number(hf[1], dim) ||
        t_len == 0 || dim == 0) {
      parse_fail(features_path, header, "expected header 'T D_in' with positive integers");
    }
    if (dim_seen != 0 && dim != dim_seen) {
      parse_fail(features_path, header, "feature dimension " + std::to_string(dim) +
                                            " differs from earlier blocks (" +
                                            std::to_string(dim_seen) + ")");
    }
    dim_seen = dim;
    FeatureSequence seq;
    for (std::size_t t = 0; t < t_len; ++t) {
      if (li >= lines.size()) {
        fail(ErrorCode::kParse, features_path.string() + ": truncated at byte offset " +
                                    std::to_string(feat_text.size()) + " (block expects " +
                                    std::to_string(t_len) + " rows, found " + std::to_string(t) + ")");
      }
      const Line& row = lines[li++];
      const auto rf = fields(row.text);
      if (rf.size() != dim) {
        if (!row.terminated) {
          fail(ErrorCode::kParse, features_path.string() + ": truncated at byte offset " +
                                      std::to_string(feat_text.size()) + " inside line " +
                                      std::to_string(row.number));
        }
        parse_fail(features_path, row, "expected " + std::to_string(dim) + " values, got " +
                                           std::to_string(rf.size()));
      }
      Vec frame(dim);
      for (std::size_t k = 0; k < dim; ++k) {
        if (!parse_number(rf[k], frame[k]) || !std::isfinite(frame[k])) {
          parse_fail(features_path, row, "invalid number '" + std::string(rf[k]) + "'");
        }
      }
      seq.frames.push_back(std::move(frame));
    }
    blocks.push_back(std::move(seq));
  }

  const std::string label_text = read_all(labels_path);
  std::vector<std::pair<std::string, std::vector<std::string>>> labels;
  for (const auto& line : split_lines(label_text)) {
    const auto f = fields(line.text);
    if (f.empty()) continue;
    std::vector<std::string> names;
    for (std::size_t k = 1; k < f.size(); ++k) names.emplace_back(f[k]);
    labels.emplace_back(std::string(f[0]), std::move(names));
  }
  if (labels.size() != blocks.size()) {
    fail(ErrorCode::kParse, "labels file has " + std::to_string(labels.size()) +
                                " videos but features file has " + std::to_string(blocks.size()) +
                                " blocks");
  }

  ActionVocabulary actions;
  if (vocab) {
    actions = *vocab;
  } else {
    std::vector<std::string> names;
    for (const auto& [id, seq] : labels) {
      for (const auto& n : seq) {
        if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
      }
    }
    require(!names.empty(), "labels file contains no action names");
    actions = ActionVocabulary(std::move(names));
  }

  Dataset data{actions, WordVocabulary({"<none>"}), {}};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Sample s;
    s.features = std::move(blocks[i]);
    s.features.source_id = labels[i].first;
    s.actions = actions.encode(labels[i].second);
    data.samples.push_back(std::move(s));
  }
  return data;
}

}  // namespace actseq
