// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace actseq {

using Token = std::uint32_t;
using TokenSeq = std::vector<Token>;
/// Ground-truth or predicted action ids; never holds SOS/EOS/PAD.
using ActionSequence = TokenSeq;

/// Ordered class list followed by the three protocol tokens. Class j has id
/// j; SOS, EOS and PAD take ids C, C+1 and C+2.
class Vocabulary {
 public:
  static constexpr std::string_view kSosName = "<sos>";
  static constexpr std::string_view kEosName = "<eos>";
  static constexpr std::string_view kPadName = "<pad>";

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> classes);

  std::size_t class_count() const { return classes_.size(); }
  std::size_t token_count() const { return classes_.size() + 3; }
  Token sos() const { return static_cast<Token>(classes_.size()); }
  Token eos() const { return sos() + 1; }
  Token pad() const { return sos() + 2; }
  bool is_class(Token t) const { return t < classes_.size(); }

  const std::vector<std::string>& classes() const { return classes_; }
  const std::string& name(Token id) const;
  Token id(std::string_view name) const;

  TokenSeq encode(std::span<const std::string> names) const;
  std::vector<std::string> decode(std::span<const Token> ids) const;

  /// FNV-1a over the newline-joined class names; stored in checkpoints.
  std::uint64_t hash() const;

  /// One name per line; order defines ids.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.classes_ == b.classes_;
  }

 private:
  std::vector<std::string> classes_;
  std::vector<std::string> reserved_;
  std::unordered_map<std::string, Token> index_;
};

using ActionVocabulary = Vocabulary;
using WordVocabulary = Vocabulary;

}  // namespace actseq
