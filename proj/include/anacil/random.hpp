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

#ifndef ANACIL_RANDOM_HPP_
#define ANACIL_RANDOM_HPP_

// Portable random streams. The standard <random> distributions are
// implementation-defined, so every value that must be reproducible across
// platforms (buffer entries, shuffles, synthetic data) is derived here from
// integer generators whose output is fully specified.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace anacil {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Uniform in [0, 1) from the top 53 bits.
constexpr double to_unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based standard normal: the value at position `counter` of the
/// stream keyed by `seed`. Pairs of counters (2k, 2k+1) share one Box-Muller
/// draw and take its cosine and sine halves respectively.
inline double counter_normal(std::uint64_t seed, std::uint64_t counter) noexcept {
  const std::uint64_t pair = counter >> 1;
  const std::uint64_t key = mix64(seed ^ 0xA0761D6478BD642FULL);
  const std::uint64_t a = mix64(key ^ mix64(2 * pair));
  const std::uint64_t b = mix64(key ^ mix64(2 * pair + 1));
  const double u1 = 1.0 - to_unit_interval(a);  // (0, 1]
  const double u2 = to_unit_interval(b);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (counter & 1U) ? radius * std::sin(angle) : radius * std::cos(angle);
}

/// Sequential generator with platform-independent derived distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  double uniform() { return to_unit_interval(engine_()); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Uniform integer in [0, bound), rejection-sampled so it is unbiased.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % bound;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Child seed for independent sub-streams (per trial, per task, ...).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) noexcept {
  return mix64(mix64(root) ^ (index + 0x632BE59BD9B4E019ULL));
}

}  // namespace anacil

#endif  // ANACIL_RANDOM_HPP_
