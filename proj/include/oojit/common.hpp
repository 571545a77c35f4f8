/* Copyright 2026 The oojit Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef OOJIT_COMMON_HPP_
#define OOJIT_COMMON_HPP_

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace oojit {

// Simulated time. Integer nanoseconds everywhere.
using Nanos = std::int64_t;

// Sentinel for "no deadline" / "never".
inline constexpr Nanos kNever = std::numeric_limits<Nanos>::max();

using KernelId = std::int64_t;
using RequestId = std::int64_t;
using StreamId = std::int64_t;

// Context id used by policies that run every tenant inside one merged
// context (fifo, edf, ooo).
inline constexpr std::int64_t kMergedContext = -1;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed input file or document.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a documented constraint.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Rounds a non-negative nanosecond quantity up to the next integer.
Nanos ceil_ns(double ns);

}  // namespace oojit

#endif  // OOJIT_COMMON_HPP_
