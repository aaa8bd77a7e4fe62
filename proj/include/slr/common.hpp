// Copyright 2026 The slrkit Authors
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

#pragma once

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace slr {

// ---------------------------------------------------------------------------
// Error taxonomy. Every failure mode surfaces as one of these; messages carry
// the offending field/shape/path so callers can act without a debugger.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file container (bad RIFF header, bad magic, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input we deliberately do not handle (wrong rate, stereo, ...).
class UnsupportedInputError : public Error {
 public:
  using Error::Error;
};

// Degenerate or out-of-contract runtime input (empty clip, T == 0, ...).
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// Tensor shape mismatch; message includes both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad build/run configuration (zero-channel layer, missing class, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Weight or feature file does not deserialize cleanly.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

// Weight file holds a different architecture than the caller expected.
class ArchitectureMismatchError : public Error {
 public:
  using Error::Error;
};

// API misuse (backward on a detached tensor, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// A forward op produced NaN/Inf, or training diverged.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Batch statistics undefined (batch-norm in train mode over a single element).
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Logging: plain stderr, no dependency.
// ---------------------------------------------------------------------------

inline void log_warn(const std::string& msg) {
  std::cerr << "[slrkit] warning: " << msg << "\n";
}

inline void log_info(const std::string& msg) {
  std::cerr << "[slrkit] " << msg << "\n";
}

// ---------------------------------------------------------------------------
// Deterministic seed derivation (splitmix64 mixing). Sub-streams derived from
// (base, stream ids) are stable across platforms and thread counts.
// ---------------------------------------------------------------------------

inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0) {
  return mix_seed(mix_seed(base ^ 0x5851f42d4c957f2dULL) + mix_seed(a) * 3 +
                  mix_seed(b) * 7);
}

// ---------------------------------------------------------------------------
// Minimal chunked parallel-for. Each index is processed exactly once and the
// per-index work must be independent; results are then invariant to the
// thread count.
// ---------------------------------------------------------------------------

template <typename Fn>
void parallel_for(int n, int num_threads, Fn&& fn) {
  if (n <= 0) return;
  if (num_threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  int workers = std::min(num_threads, n);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  std::exception_ptr first_error;
  std::mutex guard;
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w]() {
      int chunk = (n + workers - 1) / workers;
      int begin = w * chunk;
      int end = std::min(n, begin + chunk);
      try {
        for (int i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(guard);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline int default_num_threads() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace slr
