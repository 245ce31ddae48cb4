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

#include <algorithm>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "recallforge/common.hpp"
#include "recallforge/datamodel.hpp"
#include "recallforge/engine.hpp"
#include "recallforge/recallset.hpp"
#include "recallforge/serde.hpp"

// Co-purchase recall: count, for every item pair, how many distinct users
// bought both items within the time window, via a two-stage MapReduce
// (per-user basket pairing, then pair counting). A user contributes a pair
// at most once no matter how often the purchases repeat.

namespace recallforge::copurchase {

struct TimeWindow {
  std::int64_t tau_days = 60;
};

inline void validate(const TimeWindow& w) {
  if (w.tau_days <= 0) throw ValidationError("time window tau must be positive");
}

/// Encodes purchases as engine records keyed by user id.
inline std::vector<engine::KeyedRecord> purchases_to_records(
    std::span<const data::PurchaseRecord> purchases) {
  std::vector<engine::KeyedRecord> records;
  records.reserve(purchases.size());
  for (const auto& p : purchases) {
    engine::KeyedRecord rec;
    serde::put_u64_be(rec.key, p.user_id);
    serde::put_u64_le(rec.value, p.item_id);
    serde::put_i64_le(rec.value, p.create_at_day);
    records.push_back(std::move(rec));
  }
  return records;
}

/// Stage 1: reduce per user, emitting every canonical (hi, lo) item pair
/// whose closest purchase dates are at most tau apart (inclusive).
inline engine::JobStage user_basket_stage(TimeWindow window) {
  validate(window);
  const std::int64_t tau = window.tau_days;
  engine::JobStage stage;
  stage.name = "user-baskets";
  stage.map = [](const engine::KeyedRecord& rec, engine::Emitter& emit) {
    emit.emit(engine::KeyedRecord{rec});
  };
  stage.reduce = [tau](const std::string& user_key, const std::vector<std::string>& values,
                       engine::Emitter& emit) {
    std::vector<std::pair<std::int64_t, ItemId>> events;  // (day, item)
    events.reserve(values.size());
    for (const auto& v : values) {
      serde::ByteReader r(v);
      const auto item = r.u64_le();
      const auto day = r.i64_le();
      events.emplace_back(day, item);
    }
    std::sort(events.begin(), events.end());

    std::set<PairKey> pairs;
    for (std::size_t i = 0; i < events.size(); ++i) {
      for (std::size_t j = i + 1; j < events.size(); ++j) {
        if (events[j].first - events[i].first > tau) break;
        if (events[i].second == events[j].second) continue;
        pairs.insert(make_pair_key(events[i].second, events[j].second));
      }
    }
    for (const auto& [hi, lo] : pairs) {
      engine::KeyedRecord out;
      out.key = user_key;
      serde::put_u64_be(out.value, hi);
      serde::put_u64_be(out.value, lo);
      emit.emit(std::move(out));
    }
  };
  return stage;
}

/// Stage 2: re-key by pair, count contributing users.
inline engine::JobStage pair_count_stage() {
  engine::JobStage stage;
  stage.name = "pair-count";
  stage.map = [](const engine::KeyedRecord& rec, engine::Emitter& emit) {
    emit.emit(std::string(rec.value), std::string());
  };
  stage.reduce = [](const std::string& pair_key, const std::vector<std::string>& values,
                    engine::Emitter& emit) {
    engine::KeyedRecord out;
    out.key = pair_key;
    serde::put_u64_le(out.value, values.size());
    emit.emit(std::move(out));
  };
  return stage;
}

inline std::vector<ItemPair> decode_pair_counts(std::span<const engine::KeyedRecord> records) {
  std::vector<ItemPair> pairs;
  pairs.reserve(records.size());
  for (const auto& rec : records) {
    serde::ByteReader key(rec.key);
    serde::ByteReader value(rec.value);
    ItemPair p;
    p.hi = key.u64_be();
    p.lo = key.u64_be();
    p.score = static_cast<double>(value.u64_le());
    pairs.push_back(p);
  }
  return pairs;
}

/// Runs the per-user basket pairing stage standalone.
inline std::vector<engine::KeyedRecord> build_user_baskets(
    std::span<const data::PurchaseRecord> purchases, TimeWindow window,
    const engine::EngineConfig& cfg = {}, Counters* counters = nullptr) {
  return engine::run_stage(user_basket_stage(window), purchases_to_records(purchases), cfg,
                           counters);
}

/// Counts distinct contributing users per canonical pair.
inline std::vector<ItemPair> count_pairs(const std::vector<engine::KeyedRecord>& user_pairs,
                                         const engine::EngineConfig& cfg = {},
                                         Counters* counters = nullptr) {
  return decode_pair_counts(engine::run_stage(pair_count_stage(), user_pairs, cfg, counters));
}

/// Full two-stage co-purchase frequency job.
inline std::vector<ItemPair> copurchase_freq(std::span<const data::PurchaseRecord> purchases,
                                             TimeWindow window,
                                             const engine::EngineConfig& cfg = {},
                                             Counters* counters = nullptr) {
  auto records = engine::run_pipeline({user_basket_stage(window), pair_count_stage()},
                                      purchases_to_records(purchases), cfg, counters);
  auto pairs = decode_pair_counts(records);
  bump(counters, "copurchase.pairs", pairs.size());
  return pairs;
}

inline RecallSet copurchase_recall(std::span<const ItemPair> pairs, std::size_t k) {
  return build_recall_set(pairs, k, RecallSource::co_purchase);
}

}  // namespace recallforge::copurchase
