// Copyright 2026 The anacil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ANACIL_ERROR_HPP_
#define ANACIL_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace anacil {

enum class ErrorCode {
  kDimensionMismatch,
  kNonFinite,
  kDegenerateFeature,
  kBadMagic,
  kTruncated,
  kLabelOutOfRange,
  kZeroNorm,
  kInvalidArgument,
  kSingularSystem,
  kIo,
  kConfig,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kDegenerateFeature: return "degenerate feature";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kTruncated: return "truncated input";
    case ErrorCode::kLabelOutOfRange: return "label out of range";
    case ErrorCode::kZeroNorm: return "zero-norm vector";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kSingularSystem: return "singular system";
    case ErrorCode::kIo: return "i/o failure";
    case ErrorCode::kConfig: return "configuration error";
  }
  return "unknown error";
}

/// Every failure raised by the library. `code()` identifies the category so
/// callers and tests can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace anacil

#endif  // ANACIL_ERROR_HPP_
