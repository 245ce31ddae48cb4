/*
 * Copyright 2026 The RecallForge Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace recallforge {

using UserId = std::uint64_t;
using ItemId = std::uint64_t;
using CatId = std::uint64_t;
using TermId = std::uint64_t;

/// Unordered item pair in canonical (hi, lo) form, hi > lo.
using PairKey = std::pair<ItemId, ItemId>;

inline PairKey make_pair_key(ItemId a, ItemId b) {
  return a > b ? PairKey{a, b} : PairKey{b, a};
}

// Validation errors are caller mistakes (bad config, malformed input schema)
// and map to CLI exit code 1; PipelineError covers runtime failures (exit 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class PipelineError : public Error {
 public:
  using Error::Error;
};

/// Canonical scored item pair. Invariant: hi > lo, score >= 0.
struct ItemPair {
  ItemId hi = 0;
  ItemId lo = 0;
  double score = 0.0;

  friend bool operator==(const ItemPair&, const ItemPair&) = default;
};

inline ItemPair make_item_pair(ItemId a, ItemId b, double score) {
  if (a == b) throw PipelineError("item pair must have distinct items");
  return a > b ? ItemPair{a, b, score} : ItemPair{b, a, score};
}

inline PairKey key_of(const ItemPair& p) { return {p.hi, p.lo}; }

/// Named event counters, printable as key=value lines. Increments are
/// thread-safe so engine reducers can share one instance.
class Counters {
 public:
  Counters() = default;
  Counters(const Counters&) = delete;
  Counters& operator=(const Counters&) = delete;

  void add(std::string_view name, std::uint64_t n = 1) {
    std::lock_guard<std::mutex> lock(mu_);
    values_[std::string(name)] += n;
  }

  std::uint64_t get(std::string_view name) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = values_.find(std::string(name));
    return it == values_.end() ? 0 : it->second;
  }

  std::map<std::string, std::uint64_t> snapshot() const {
    std::lock_guard<std::mutex> lock(mu_);
    return values_;
  }

  void merge(const Counters& other) {
    auto theirs = other.snapshot();
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& [k, v] : theirs) values_[k] += v;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::uint64_t> values_;
};

inline void bump(Counters* counters, std::string_view name, std::uint64_t n = 1) {
  if (counters != nullptr) counters->add(name, n);
}

/// Seeded random source with platform-stable rejection sampling, so datasets
/// and sampled training sets reproduce bit-for-bit everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw PipelineError("Rng::below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % n;
  }

  /// Uniform integer in [lo, hi] inclusive.
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi) {
    if (hi < lo) throw PipelineError("Rng::between: empty range");
    return lo + below(hi - lo + 1);
  }

  /// Uniform real in [0, 1) with 53 bits of precision.
  double unit() { return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace recallforge
