// SPDX-License-Identifier: Apache-2.0
#include "core/vocab.hpp"

#include <fstream>

#include "core/error.hpp"

namespace actseq {

Vocabulary::Vocabulary(std::vector<std::string> classes) : classes_(std::move(classes)) {
  require(!classes_.empty(), "vocabulary needs at least one class");
  reserved_ = {std::string(kSosName), std::string(kEosName), std::string(kPadName)};
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto& n = classes_[i];
    require(!n.empty(), "vocabulary names must be non-empty");
    require(n.find_first_of(" \t\r\n") == std::string::npos,
            "vocabulary name contains whitespace: '" + n + "'");
    require(n != kSosName && n != kEosName && n != kPadName,
            "vocabulary name collides with a reserved token: " + n);
    if (!index_.emplace(n, static_cast<Token>(i)).second) {
      fail(ErrorCode::kInvalidArgument, "duplicate vocabulary name: " + n);
    }
  }
  for (std::size_t k = 0; k < reserved_.size(); ++k) {
    index_.emplace(reserved_[k], static_cast<Token>(classes_.size() + k));
  }
}

const std::string& Vocabulary::name(Token id) const {
  if (id < classes_.size()) return classes_[id];
  if (id < token_count()) return reserved_[id - classes_.size()];
  fail(ErrorCode::kLookup, "token id " + std::to_string(id) + " outside vocabulary");
}

Token Vocabulary::id(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) fail(ErrorCode::kLookup, "unknown token '" + std::string(name) + "'");
  return it->second;
}

TokenSeq Vocabulary::encode(std::span<const std::string> names) const {
  TokenSeq out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(id(n));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const Token> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (Token t : ids) out.push_back(name(t));
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const auto& n : classes_) {
    for (char c : n) mix(static_cast<unsigned char>(c));
    mix('\n');
  }
  return h;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open vocabulary file " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    names.push_back(line);
  }
  return Vocabulary(std::move(names));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write vocabulary file " + path.string());
  for (const auto& n : classes_) out << n << '\n';
}

}  // namespace actseq
