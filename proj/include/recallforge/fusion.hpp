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
#include <set>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "recallforge/common.hpp"
#include "recallforge/recallset.hpp"

// Category filtering of candidate pairs plus hierarchical (waterfall) fusion
// of recall sets: sources are drawn in priority order under global quotas,
// higher hit-rate sources first, with per-item dedup.

namespace recallforge::fusion {

enum class CategoryRuleKind { cross_category_only, allow_all, whitelist };

struct CategoryRule {
  CategoryRuleKind kind = CategoryRuleKind::cross_category_only;
  // unordered category pairs, stored canonical (min, max)
  std::set<std::pair<CatId, CatId>> whitelist;
};

inline std::pair<CatId, CatId> category_key(CatId a, CatId b) {
  return a < b ? std::pair{a, b} : std::pair{b, a};
}

/// Drops pairs violating the category rule; pairs with an unresolvable item
/// are dropped and counted rather than erroring.
inline std::vector<ItemPair> category_filter(std::span<const ItemPair> pairs,
                                             const std::unordered_map<ItemId, CatId>& categories,
                                             const CategoryRule& rule,
                                             Counters* counters = nullptr) {
  std::vector<ItemPair> kept;
  kept.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto hi_cat = categories.find(p.hi);
    const auto lo_cat = categories.find(p.lo);
    if (hi_cat == categories.end() || lo_cat == categories.end()) {
      bump(counters, "fusion.unresolvable_item_pairs");
      continue;
    }
    bool keep = true;
    switch (rule.kind) {
      case CategoryRuleKind::allow_all:
        break;
      case CategoryRuleKind::cross_category_only:
        keep = hi_cat->second != lo_cat->second;
        break;
      case CategoryRuleKind::whitelist:
        keep = rule.whitelist.contains(category_key(hi_cat->second, lo_cat->second));
        break;
    }
    if (keep) {
      kept.push_back(p);
    } else {
      bump(counters, "fusion.category_filtered_pairs");
    }
  }
  return kept;
}

struct FusionQuota {
  RecallSource source = RecallSource::co_purchase;
  std::uint64_t quota = 0;
};

struct FusionPolicy {
  std::vector<FusionQuota> quotas;  // priority order, sources distinct
  CategoryRule category_rule;
  // sources with a known hit rate below this are skipped while drawing
  double min_hit_rate = 0.0;
};

inline void validate(const FusionPolicy& policy) {
  std::set<RecallSource> seen;
  for (const auto& q : policy.quotas) {
    if (!seen.insert(q.source).second) {
      throw ValidationError("fusion policy lists a source twice");
    }
  }
}

/// Largest-remainder apportionment of a global quota over per-item list
/// lengths; allocations never exceed the list length and sum to
/// min(quota, total length). Remainder ties go to the smaller item id.
inline std::map<ItemId, std::uint64_t> apportion_quota(
    const std::map<ItemId, std::uint64_t>& lengths, std::uint64_t quota) {
  std::map<ItemId, std::uint64_t> alloc;
  unsigned __int128 total = 0;
  for (const auto& [item, len] : lengths) total += len;
  if (total == 0 || quota == 0) return alloc;
  if (quota >= total) {
    for (const auto& [item, len] : lengths) {
      if (len > 0) alloc[item] = len;
    }
    return alloc;
  }

  std::uint64_t assigned = 0;
  std::vector<std::pair<unsigned __int128, ItemId>> remainders;  // (fraction numerator, item)
  for (const auto& [item, len] : lengths) {
    const unsigned __int128 share = static_cast<unsigned __int128>(quota) * len;
    const auto base = static_cast<std::uint64_t>(share / total);
    if (base > 0) alloc[item] = base;
    assigned += base;
    const auto rem = share % total;
    if (rem > 0) remainders.emplace_back(rem, item);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (const auto& [rem, item] : remainders) {
    if (assigned >= quota) break;
    ++alloc[item];
    ++assigned;
  }
  return alloc;
}

/// Waterfall fusion: per item, draw from each source in priority order up to
/// its apportioned share, skipping candidates already taken. Output order is
/// draw order; the surviving copy of a duplicate keeps the higher-priority
/// source's score.
inline RecallSet fuse_recalls(const std::vector<RecallSet>& sets, const FusionPolicy& policy,
                              Counters* counters = nullptr) {
  validate(policy);
  std::map<RecallSource, const RecallSet*> by_source;
  for (const auto& set : sets) {
    if (!by_source.emplace(set.source, &set).second) {
      throw ValidationError("duplicate recall set source: " + std::string(to_string(set.source)));
    }
  }

  struct Draw {
    const RecallSet* set;
    std::map<ItemId, std::uint64_t> alloc;
  };
  std::vector<Draw> draws;
  std::set<ItemId> items;
  for (const auto& q : policy.quotas) {
    auto it = by_source.find(q.source);
    if (it == by_source.end()) {
      throw ValidationError("fusion quota references missing source: " +
                            std::string(to_string(q.source)));
    }
    const RecallSet* set = it->second;
    if (set->hit_rate.has_value() && *set->hit_rate < policy.min_hit_rate) {
      bump(counters, "fusion.sources_below_hit_threshold");
      continue;
    }
    std::map<ItemId, std::uint64_t> lengths;
    for (const auto& [item, list] : set->entries) {
      if (!list.empty()) lengths[item] = list.size();
    }
    draws.push_back(Draw{set, apportion_quota(lengths, q.quota)});
    for (const auto& [item, n] : draws.back().alloc) {
      if (n > 0) items.insert(item);
    }
  }

  RecallSet fused;
  fused.source = RecallSource::fused;
  std::uint64_t drawn_total = 0, deduped = 0;
  for (ItemId item : items) {
    std::vector<Candidate> out;
    std::unordered_set<ItemId> taken;
    for (const auto& draw : draws) {
      auto alloc_it = draw.alloc.find(item);
      if (alloc_it == draw.alloc.end() || alloc_it->second == 0) continue;
      const auto& list = draw.set->entries.at(item);
      std::uint64_t taken_here = 0;
      for (const auto& cand : list) {
        if (taken_here >= alloc_it->second) break;
        if (!taken.insert(cand.id).second) {
          ++deduped;
          continue;
        }
        out.push_back(cand);
        ++taken_here;
      }
    }
    if (!out.empty()) {
      drawn_total += out.size();
      fused.entries[item] = std::move(out);
    }
  }
  bump(counters, "fusion.fused_candidates", drawn_total);
  bump(counters, "fusion.deduped_candidates", deduped);
  return fused;
}

/// Fraction of a set's candidate pairs present in the ground truth.
inline double measure_hit_rate(const RecallSet& set, const std::set<PairKey>& truth) {
  std::uint64_t total = 0, hits = 0;
  for (const auto& [item, list] : set.entries) {
    for (const auto& cand : list) {
      ++total;
      if (truth.contains(make_pair_key(item, cand.id))) ++hits;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace recallforge::fusion
