// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace actseq {

enum class ErrorCode {
  kInvalidArgument = 1,
  kInvalidState = 2,
  kUnsupported = 3,
  kLookup = 4,
  kParse = 5,
  kInconsistency = 6,
  kGeneration = 7,
  kIo = 8,
};

/// Every failure raised by the core library. The C API maps `code()` onto
/// its integer status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::kInvalidArgument, what);
}

}  // namespace actseq
