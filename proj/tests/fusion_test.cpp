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

#include "recallforge/fusion.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <vector>

#include "recallforge/common.hpp"
#include "recallforge/recallset.hpp"

namespace fu = recallforge::fusion;
using recallforge::Candidate;
using recallforge::CatId;
using recallforge::Counters;
using recallforge::ItemId;
using recallforge::ItemPair;
using recallforge::RecallSet;
using recallforge::RecallSource;
using recallforge::Rng;
using recallforge::ValidationError;

namespace {

RecallSet make_set(RecallSource source,
                   std::map<ItemId, std::vector<Candidate>> entries,
                   std::optional<double> hit_rate = std::nullopt) {
  RecallSet set;
  set.source = source;
  set.entries = std::move(entries);
  set.hit_rate = hit_rate;
  return set;
}

fu::FusionPolicy two_source_policy(std::uint64_t q_cop, std::uint64_t q_title,
                                   double min_hit_rate = 0.0) {
  fu::FusionPolicy policy;
  policy.quotas = {{RecallSource::co_purchase, q_cop},
                   {RecallSource::title_similarity, q_title}};
  policy.min_hit_rate = min_hit_rate;
  return policy;
}

std::uint64_t total_candidates(const RecallSet& set) {
  std::uint64_t n = 0;
  for (const auto& [item, list] : set.entries) n += list.size();
  return n;
}

}  // namespace

TEST(CategoryFilterTest, CrossCategoryOnlyDropsSameCategoryPairs) {
  const std::unordered_map<ItemId, CatId> cats = {{1, 10}, {2, 10}, {3, 20}};
  const std::vector<ItemPair> pairs = {{2, 1, 5.0}, {3, 1, 4.0}, {3, 2, 3.0}};
  Counters counters;
  const auto kept = fu::category_filter(pairs, cats, fu::CategoryRule{}, &counters);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].hi, 3u);
  EXPECT_EQ(kept[1].hi, 3u);
  EXPECT_EQ(counters.get("fusion.category_filtered_pairs"), 1u);
}

TEST(CategoryFilterTest, AllowAllKeepsEverything) {
  const std::unordered_map<ItemId, CatId> cats = {{1, 10}, {2, 10}};
  const std::vector<ItemPair> pairs = {{2, 1, 5.0}};
  fu::CategoryRule rule;
  rule.kind = fu::CategoryRuleKind::allow_all;
  EXPECT_EQ(fu::category_filter(pairs, cats, rule).size(), 1u);
}

TEST(CategoryFilterTest, WhitelistIsUnordered) {
  const std::unordered_map<ItemId, CatId> cats = {{1, 10}, {2, 20}, {3, 30}};
  const std::vector<ItemPair> pairs = {{2, 1, 5.0}, {3, 1, 4.0}};
  fu::CategoryRule rule;
  rule.kind = fu::CategoryRuleKind::whitelist;
  rule.whitelist.insert(fu::category_key(20, 10));  // stored canonical
  Counters counters;
  const auto kept = fu::category_filter(pairs, cats, rule, &counters);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].hi, 2u);
  EXPECT_EQ(counters.get("fusion.category_filtered_pairs"), 1u);
}

TEST(CategoryFilterTest, UnresolvableItemsAreCountedAndDropped) {
  const std::unordered_map<ItemId, CatId> cats = {{1, 10}};
  const std::vector<ItemPair> pairs = {{2, 1, 5.0}};
  Counters counters;
  fu::CategoryRule rule;
  rule.kind = fu::CategoryRuleKind::allow_all;
  EXPECT_TRUE(fu::category_filter(pairs, cats, rule, &counters).empty());
  EXPECT_EQ(counters.get("fusion.unresolvable_item_pairs"), 1u);
}

TEST(ApportionTest, ExactSharesNeedNoRemainder) {
  const std::map<ItemId, std::uint64_t> lengths = {{1, 3}, {2, 3}, {3, 3}};
  const auto alloc = fu::apportion_quota(lengths, 6);
  EXPECT_EQ(alloc.at(1), 2u);
  EXPECT_EQ(alloc.at(2), 2u);
  EXPECT_EQ(alloc.at(3), 2u);
}

TEST(ApportionTest, RemainderTiesFavorSmallerItemId) {
  const std::map<ItemId, std::uint64_t> lengths = {{1, 1}, {2, 1}, {3, 1}};
  const auto alloc = fu::apportion_quota(lengths, 2);
  EXPECT_EQ(alloc.size(), 2u);
  EXPECT_EQ(alloc.at(1), 1u);
  EXPECT_EQ(alloc.at(2), 1u);
  EXPECT_FALSE(alloc.contains(3));
}

TEST(ApportionTest, LargestRemainderWinsTheLeftover) {
  // shares: 5*5/8 = 3 r 1, 3*5/8 = 1 r 7 -> leftover seat goes to item 2.
  const std::map<ItemId, std::uint64_t> lengths = {{1, 5}, {2, 3}};
  const auto alloc = fu::apportion_quota(lengths, 5);
  EXPECT_EQ(alloc.at(1), 3u);
  EXPECT_EQ(alloc.at(2), 2u);
}

TEST(ApportionTest, GenerousQuotaGrantsFullLists) {
  const std::map<ItemId, std::uint64_t> lengths = {{1, 4}, {2, 0}, {3, 7}};
  const auto alloc = fu::apportion_quota(lengths, 100);
  EXPECT_EQ(alloc.at(1), 4u);
  EXPECT_EQ(alloc.at(3), 7u);
  EXPECT_FALSE(alloc.contains(2));
}

TEST(ApportionTest, ZeroQuotaOrEmptyInputAllocatesNothing) {
  EXPECT_TRUE(fu::apportion_quota({{1, 4}}, 0).empty());
  EXPECT_TRUE(fu::apportion_quota({}, 10).empty());
}

TEST(ApportionTest, RandomInputsRespectInvariants) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    std::map<ItemId, std::uint64_t> lengths;
    const auto n_items = 1 + rng.below(40);
    std::uint64_t total = 0;
    for (std::uint64_t i = 0; i < n_items; ++i) {
      const auto len = rng.below(30);
      lengths[100 + i] = len;
      total += len;
    }
    const auto quota = rng.below(2 * total + 2);
    const auto alloc = fu::apportion_quota(lengths, quota);

    std::uint64_t assigned = 0;
    for (const auto& [item, n] : alloc) {
      assigned += n;
      ASSERT_LE(n, lengths.at(item)) << "seed " << seed;
      if (quota < total && total > 0) {
        // largest-remainder stays within one seat of the exact share
        const double fair = static_cast<double>(quota) *
                            static_cast<double>(lengths.at(item)) /
                            static_cast<double>(total);
        ASSERT_LT(std::abs(static_cast<double>(n) - fair), 1.0 + 1e-9)
            << "seed " << seed;
      }
    }
    ASSERT_EQ(assigned, std::min<std::uint64_t>(quota, total)) << "seed " << seed;
  }
}

TEST(FuseTest, DisjointSourcesFillBothQuotas) {
  std::map<ItemId, std::vector<Candidate>> cop, ttl;
  for (ItemId item = 1; item <= 5; ++item) {
    for (ItemId c = 0; c < 4; ++c) {
      cop[item].push_back({100 + item * 10 + c, 10.0 - static_cast<double>(c)});
      ttl[item].push_back({200 + item * 10 + c, 0.9 - 0.1 * static_cast<double>(c)});
    }
  }
  const std::vector<RecallSet> sets = {make_set(RecallSource::co_purchase, cop),
                                       make_set(RecallSource::title_similarity, ttl)};
  Counters counters;
  const auto fused = fu::fuse_recalls(sets, two_source_policy(10, 5), &counters);
  EXPECT_EQ(fused.source, RecallSource::fused);
  EXPECT_EQ(total_candidates(fused), 15u);
  EXPECT_EQ(counters.get("fusion.fused_candidates"), 15u);
  EXPECT_EQ(counters.get("fusion.deduped_candidates"), 0u);
  // draw order: two co-purchase candidates, then one title candidate
  for (ItemId item = 1; item <= 5; ++item) {
    const auto& list = fused.entries.at(item);
    ASSERT_EQ(list.size(), 3u);
    EXPECT_EQ(list[0].id, 100 + item * 10);
    EXPECT_EQ(list[1].id, 101 + item * 10);
    EXPECT_EQ(list[2].id, 200 + item * 10);
  }
}

TEST(FuseTest, DuplicateCandidateDoesNotConsumeAllocation) {
  const std::vector<RecallSet> sets = {
      make_set(RecallSource::co_purchase, {{1, {{50, 9.0}}}}),
      make_set(RecallSource::title_similarity, {{1, {{50, 0.8}, {60, 0.7}}}}),
  };
  Counters counters;
  const auto fused = fu::fuse_recalls(sets, two_source_policy(1, 1), &counters);
  const auto& list = fused.entries.at(1);
  ASSERT_EQ(list.size(), 2u);
  EXPECT_EQ(list[0].id, 50u);
  EXPECT_DOUBLE_EQ(list[0].score, 9.0);  // higher-priority copy survives
  EXPECT_EQ(list[1].id, 60u);
  EXPECT_EQ(counters.get("fusion.deduped_candidates"), 1u);
}

TEST(FuseTest, LowHitRateSourceIsSkipped) {
  const std::vector<RecallSet> sets = {
      make_set(RecallSource::co_purchase, {{1, {{50, 9.0}}}}, 0.9),
      make_set(RecallSource::title_similarity, {{1, {{60, 0.8}}}}, 0.1),
  };
  Counters counters;
  const auto fused = fu::fuse_recalls(sets, two_source_policy(1, 1, 0.5), &counters);
  const auto& list = fused.entries.at(1);
  ASSERT_EQ(list.size(), 1u);
  EXPECT_EQ(list[0].id, 50u);
  EXPECT_EQ(counters.get("fusion.sources_below_hit_threshold"), 1u);
}

TEST(FuseTest, UnknownHitRatePassesThreshold) {
  const std::vector<RecallSet> sets = {
      make_set(RecallSource::co_purchase, {{1, {{50, 9.0}}}}),
      make_set(RecallSource::title_similarity, {{1, {{60, 0.8}}}}),
  };
  const auto fused = fu::fuse_recalls(sets, two_source_policy(1, 1, 0.5));
  EXPECT_EQ(fused.entries.at(1).size(), 2u);
}

TEST(FuseTest, SetOrderDoesNotMatter) {
  auto cop = make_set(RecallSource::co_purchase,
                      {{1, {{50, 9.0}, {51, 8.0}}}, {2, {{52, 7.0}}}});
  auto ttl = make_set(RecallSource::title_similarity,
                      {{1, {{60, 0.9}}}, {3, {{61, 0.8}}}});
  const auto policy = two_source_policy(2, 2);
  const auto forward = fu::fuse_recalls({cop, ttl}, policy);
  const auto backward = fu::fuse_recalls({ttl, cop}, policy);
  EXPECT_EQ(forward.entries, backward.entries);
}

TEST(FuseTest, DuplicateSourceRejected) {
  const std::vector<RecallSet> sets = {
      make_set(RecallSource::co_purchase, {{1, {{50, 9.0}}}}),
      make_set(RecallSource::co_purchase, {{2, {{60, 8.0}}}}),
  };
  fu::FusionPolicy policy;
  policy.quotas = {{RecallSource::co_purchase, 5}};
  EXPECT_THROW(fu::fuse_recalls(sets, policy), ValidationError);
}

TEST(FuseTest, QuotaForMissingSourceRejected) {
  const std::vector<RecallSet> sets = {
      make_set(RecallSource::co_purchase, {{1, {{50, 9.0}}}})};
  EXPECT_THROW(fu::fuse_recalls(sets, two_source_policy(1, 1)), ValidationError);
}

TEST(FuseTest, PolicyWithRepeatedSourceRejected) {
  fu::FusionPolicy policy;
  policy.quotas = {{RecallSource::co_purchase, 5}, {RecallSource::co_purchase, 3}};
  EXPECT_THROW(fu::validate(policy), ValidationError);
}

TEST(HitRateTest, CountsTruthFractionOverAllCandidates) {
  const auto set = make_set(RecallSource::co_purchase,
                            {{1, {{2, 5.0}, {3, 4.0}}}, {4, {{5, 3.0}, {6, 2.0}}}});
  const std::set<recallforge::PairKey> truth = {recallforge::make_pair_key(1, 2),
                                                recallforge::make_pair_key(4, 5)};
  EXPECT_DOUBLE_EQ(fu::measure_hit_rate(set, truth), 0.5);
  EXPECT_DOUBLE_EQ(fu::measure_hit_rate(make_set(RecallSource::co_purchase, {}), truth), 0.0);
}
