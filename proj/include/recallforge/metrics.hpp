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
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "recallforge/common.hpp"
#include "recallforge/recallset.hpp"

namespace recallforge::metrics {

struct EvalCounts {
  std::uint64_t predicted = 0;
  std::uint64_t relevant = 0;
  std::uint64_t hits = 0;
};

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> map_at_k;
  EvalCounts counts;
};

/// Harmonic mean of precision and recall; 0 when both are 0.
inline double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

inline EvalReport precision_recall_f1(const std::set<PairKey>& predicted,
                                      const std::set<PairKey>& relevant) {
  EvalReport report;
  report.counts.predicted = predicted.size();
  report.counts.relevant = relevant.size();
  for (const auto& key : predicted) {
    if (relevant.contains(key)) ++report.counts.hits;
  }
  const double hits = static_cast<double>(report.counts.hits);
  report.precision = predicted.empty() ? 0.0 : hits / static_cast<double>(predicted.size());
  report.recall = relevant.empty() ? 0.0 : hits / static_cast<double>(relevant.size());
  report.f1 = f1_score(report.precision, report.recall);
  return report;
}

/// AP@k for one ranked list: sum over the first k positions of
/// (hits so far / position) at each hit, divided by min(|relevant|, k).
/// A query with no relevant items scores zero (the caller can count them).
inline double average_precision(std::span<const ItemId> ranked, const std::set<ItemId>& relevant,
                                std::uint64_t k, Counters* counters = nullptr) {
  if (k < 1) throw ValidationError("AP cutoff k must be >= 1");
  if (relevant.empty()) {
    bump(counters, "metrics.queries_without_truth");
    return 0.0;
  }
  const std::uint64_t cutoff = std::min<std::uint64_t>(k, ranked.size());
  std::uint64_t hits = 0;
  double sum = 0.0;
  for (std::uint64_t i = 0; i < cutoff; ++i) {
    if (relevant.contains(ranked[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  const auto denom = std::min<std::uint64_t>(relevant.size(), k);
  return sum / static_cast<double>(denom);
}

/// Mean of AP@k across the recall set's query items. Truth maps each item to
/// its relevant counterparts. Items absent from truth contribute zero.
inline double mean_average_precision(const RecallSet& recall,
                                     const std::map<ItemId, std::set<ItemId>>& truth,
                                     std::uint64_t k, Counters* counters = nullptr) {
  if (recall.entries.empty()) throw PipelineError("MAP undefined: recall set has no query items");
  static const std::set<ItemId> kEmpty;
  double sum = 0.0;
  for (const auto& [item, list] : recall.entries) {
    std::vector<ItemId> ranked;
    ranked.reserve(list.size());
    for (const auto& cand : list) ranked.push_back(cand.id);
    const auto it = truth.find(item);
    sum += average_precision(ranked, it == truth.end() ? kEmpty : it->second, k, counters);
  }
  return sum / static_cast<double>(recall.entries.size());
}

/// Truth pairs regrouped per query item: each pair contributes both
/// directions so either endpoint's list can be scored against it.
inline std::map<ItemId, std::set<ItemId>> truth_by_item(const std::set<PairKey>& truth_pairs) {
  std::map<ItemId, std::set<ItemId>> truth;
  for (const auto& [hi, lo] : truth_pairs) {
    truth[hi].insert(lo);
    truth[lo].insert(hi);
  }
  return truth;
}

}  // namespace recallforge::metrics
