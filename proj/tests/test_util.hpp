// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "core/error.hpp"
#include "doctest.h"

namespace actseq::testing {

/// Runs `fn` and returns the code of the actseq::Error it throws.
inline ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an actseq::Error");
  return ErrorCode::kIo;
}

}  // namespace actseq::testing
