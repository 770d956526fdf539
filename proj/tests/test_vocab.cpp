// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include "core/vocab.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace actseq;
using actseq::testing::code_of;

TEST_CASE("protocol tokens follow the classes") {
  const Vocabulary v({"walk", "run", "jump"});
  CHECK(v.class_count() == 3);
  CHECK(v.token_count() == 6);
  CHECK(v.sos() == 3);
  CHECK(v.eos() == 4);
  CHECK(v.pad() == 5);
  CHECK(v.is_class(2));
  CHECK_FALSE(v.is_class(3));
  CHECK(v.name(4) == "<eos>");
  CHECK(v.id("<pad>") == 5);
}

TEST_CASE("encode and decode are inverse") {
  const Vocabulary v({"a", "b", "c"});
  const std::vector<std::string> names{"a", "b", "a", "c"};
  const TokenSeq ids = v.encode(names);
  CHECK(ids == TokenSeq{0, 1, 0, 2});
  CHECK(v.decode(ids) == names);
  CHECK(v.encode(std::vector<std::string>{}).empty());
}

TEST_CASE("lookup failures") {
  const Vocabulary v({"a", "b"});
  CHECK(code_of([&] { v.id("zz"); }) == ErrorCode::kLookup);
  CHECK(code_of([&] { v.name(5); }) == ErrorCode::kLookup);
}

TEST_CASE("invalid class lists") {
  CHECK(code_of([] { Vocabulary(std::vector<std::string>{}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { Vocabulary({"a", "a"}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { Vocabulary({"a b"}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { Vocabulary({""}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { Vocabulary({"<eos>"}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("hash is FNV-1a over newline-terminated names") {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : std::string("ab\nc\n")) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  CHECK(Vocabulary({"ab", "c"}).hash() == h);
  CHECK(Vocabulary({"ab", "c"}).hash() != Vocabulary({"a", "bc"}).hash());
  CHECK(Vocabulary({"ab", "c"}).hash() != Vocabulary({"c", "ab"}).hash());
}

TEST_CASE("file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "actseq_test_vocab";
  std::filesystem::create_directories(dir);
  const Vocabulary v({"pour", "stir", "serve"});
  v.save(dir / "v.txt");
  const Vocabulary back = Vocabulary::load(dir / "v.txt");
  CHECK(back == v);
  CHECK(back.hash() == v.hash());

  std::ofstream(dir / "dup.txt") << "x\ny\nx\n";
  CHECK(code_of([&] { Vocabulary::load(dir / "dup.txt"); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { Vocabulary::load(dir / "missing.txt"); }) == ErrorCode::kIo);
  std::filesystem::remove_all(dir);
}
