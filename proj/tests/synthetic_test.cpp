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

#include "recallforge/synthetic.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <map>
#include <set>

#include "test_util.hpp"

namespace sy = recallforge::synth;
using recallforge::ItemId;
using recallforge::PairKey;
using recallforge::UserId;
using recallforge::ValidationError;
using recallforge::data::PurchaseRecord;

namespace {

sy::SynthSpec small_spec() {
  sy::SynthSpec spec;
  spec.users = 60;
  spec.items = 80;
  spec.packages = 4;
  spec.planted_pairs = 8;
  spec.lure_fraction = 0.5;
  spec.vocab = 60;
  spec.feature_dim = 4;
  spec.categories = 5;
  spec.seed = 7;
  return spec;
}

/// Distinct users with both items purchased within the window.
std::map<PairKey, std::uint64_t> brute_force_freq(
    const std::vector<PurchaseRecord>& purchases, std::int64_t tau) {
  std::map<UserId, std::vector<PurchaseRecord>> by_user;
  for (const auto& p : purchases) by_user[p.user_id].push_back(p);
  std::map<PairKey, std::set<UserId>> supporters;
  for (const auto& [user, recs] : by_user) {
    for (std::size_t i = 0; i < recs.size(); ++i) {
      for (std::size_t j = i + 1; j < recs.size(); ++j) {
        if (recs[i].item_id == recs[j].item_id) continue;
        if (std::llabs(recs[i].create_at_day - recs[j].create_at_day) > tau) continue;
        supporters[recallforge::make_pair_key(recs[i].item_id, recs[j].item_id)].insert(user);
      }
    }
  }
  std::map<PairKey, std::uint64_t> freq;
  for (const auto& [key, users] : supporters) freq[key] = users.size();
  return freq;
}

const recallforge::data::ItemInfo& item_by_id(const sy::SynthDataset& ds, ItemId id) {
  for (const auto& item : ds.items) {
    if (item.item_id == id) return item;
  }
  throw std::logic_error("item not found");
}

}  // namespace

TEST(SyntheticTest, GenerationIsDeterministic) {
  const auto spec = small_spec();
  const auto a = sy::generate(spec);
  const auto b = sy::generate(spec);
  EXPECT_EQ(a.items, b.items);
  EXPECT_EQ(a.packages, b.packages);
  EXPECT_EQ(a.purchases, b.purchases);
  EXPECT_EQ(a.behaviors, b.behaviors);
  EXPECT_EQ(a.truth_pairs, b.truth_pairs);
  EXPECT_EQ(a.truth_freq, b.truth_freq);
  EXPECT_EQ(a.lure_pairs, b.lure_pairs);

  auto other = spec;
  other.seed = 8;
  const auto c = sy::generate(other);
  EXPECT_NE(a.purchases, c.purchases);
}

TEST(SyntheticTest, WrittenFilesAreByteIdentical) {
  rftest::TempDir dir;
  const auto spec = small_spec();
  sy::generate_and_write(spec, dir.path() / "one");
  sy::generate_and_write(spec, dir.path() / "two");
  for (const char* name :
       {"behavior_log.tsv", "item_info.tsv", "item_features.tsv", "match_packages.tsv",
        "purchase_history.tsv", "truth_pairs.tsv", "truth_freq.tsv", "truth_cosine.tsv"}) {
    EXPECT_EQ(rftest::read_file(dir.path() / "one" / name),
              rftest::read_file(dir.path() / "two" / name))
        << name;
  }
}

TEST(SyntheticTest, PlantedFrequenciesAreExact) {
  const auto spec = small_spec();
  const auto ds = sy::generate(spec);
  const auto brute = brute_force_freq(ds.purchases, static_cast<std::int64_t>(spec.tau_days));
  ASSERT_EQ(ds.truth_pairs.size(), spec.planted_pairs);
  for (const auto& [key, freq] : ds.truth_freq) {
    ASSERT_TRUE(brute.contains(key)) << key.first << "," << key.second;
    EXPECT_EQ(brute.at(key), freq) << key.first << "," << key.second;
    EXPECT_GE(freq, spec.buyers_min);
  }
}

TEST(SyntheticTest, LurePairsOutnumberTheirPartners) {
  const auto spec = small_spec();
  const auto ds = sy::generate(spec);
  ASSERT_EQ(ds.lure_pairs.size(), spec.lure_count());
  ASSERT_GT(ds.lure_pairs.size(), 0u);
  for (std::size_t l = 0; l < ds.lure_pairs.size(); ++l) {
    const auto& lure_key = ds.lure_pairs[l];
    const ItemId partner_a = 1001 + 2 * l;
    const ItemId partner_b = 1001 + 2 * l + 1;
    const auto planted_key = recallforge::make_pair_key(partner_a, partner_b);
    EXPECT_GT(ds.truth_freq.at(lure_key), ds.truth_freq.at(planted_key)) << "lure " << l;
    EXPECT_FALSE(ds.truth_pairs.contains(lure_key));
  }
}

TEST(SyntheticTest, IdenticalTitlePairsShareTermsExactly) {
  const auto spec = small_spec();  // identical_title_fraction = 0.5 -> 4 pairs
  const auto ds = sy::generate(spec);
  EXPECT_EQ(ds.truth_cosine.size(), 4u);
  for (const auto& [key, cosine] : ds.truth_cosine) {
    EXPECT_DOUBLE_EQ(cosine, 1.0);
    EXPECT_EQ(item_by_id(ds, key.first).terms, item_by_id(ds, key.second).terms);
  }
  // non-identical planted pairs still share their two rare marker terms
  for (const auto& key : ds.truth_pairs) {
    if (ds.truth_cosine.contains(key)) continue;
    const auto& ta = item_by_id(ds, key.first).terms;
    const auto& tb = item_by_id(ds, key.second).terms;
    EXPECT_NE(ta, tb);
    std::set<recallforge::TermId> shared;
    for (auto t : ta) {
      if (t > spec.vocab && std::find(tb.begin(), tb.end(), t) != tb.end()) shared.insert(t);
    }
    EXPECT_EQ(shared.size(), 2u);
  }
}

TEST(SyntheticTest, PlantedPairsCrossCategories) {
  const auto ds = sy::generate(small_spec());
  for (const auto& key : ds.truth_pairs) {
    EXPECT_NE(item_by_id(ds, key.first).cat_id, item_by_id(ds, key.second).cat_id);
  }
  for (const auto& key : ds.lure_pairs) {
    EXPECT_NE(item_by_id(ds, key.first).cat_id, item_by_id(ds, key.second).cat_id);
  }
}

TEST(SyntheticTest, FeatureGeometrySeparatesPairsFromLures) {
  const auto spec = small_spec();
  const auto ds = sy::generate(spec);
  for (const auto& key : ds.truth_pairs) {
    const auto& fa = *item_by_id(ds, key.first).features;
    const auto& fb = *item_by_id(ds, key.second).features;
    for (std::size_t j = 0; j < fa.size(); ++j) {
      EXPECT_LE(std::abs(fa[j] - fb[j]), 0.05);
    }
  }
  for (const auto& key : ds.lure_pairs) {
    const auto& fa = *item_by_id(ds, key.first).features;   // lure (higher id)
    const auto& fb = *item_by_id(ds, key.second).features;  // planted partner
    for (std::size_t j = 0; j < fa.size(); ++j) {
      EXPECT_GE(std::abs(fa[j] - fb[j]), 0.1);
    }
  }
}

TEST(SyntheticTest, EveryItemHasFeaturesAndTitle) {
  const auto spec = small_spec();
  const auto ds = sy::generate(spec);
  ASSERT_EQ(ds.items.size(), spec.items);
  for (const auto& item : ds.items) {
    ASSERT_TRUE(item.features.has_value());
    EXPECT_EQ(item.features->size(), spec.feature_dim);
    EXPECT_FALSE(item.terms.empty());
    EXPECT_GE(item.cat_id, 1u);
    EXPECT_LE(item.cat_id, spec.categories);
  }
}

TEST(SyntheticTest, BehaviorLogCoversPurchases) {
  const auto ds = sy::generate(small_spec());
  std::size_t buys = 0;
  for (const auto& b : ds.behaviors) {
    if (b.behavior == recallforge::data::BehaviorType::buy) ++buys;
  }
  EXPECT_EQ(buys, ds.purchases.size());
  EXPECT_GT(ds.behaviors.size(), ds.purchases.size());  // browse noise on top
}

TEST(SyntheticTest, InvalidSpecsAreRejected) {
  auto spec = small_spec();
  spec.items = 10;  // far below the structural minimum
  EXPECT_THROW(sy::generate(spec), ValidationError);

  spec = small_spec();
  spec.categories = 1;
  EXPECT_THROW(spec.validate(), ValidationError);

  spec = small_spec();
  spec.lure_fraction = 1.5;
  EXPECT_THROW(spec.validate(), ValidationError);

  spec = small_spec();
  spec.package_size_min = 1;
  EXPECT_THROW(spec.validate(), ValidationError);

  spec = small_spec();
  spec.users = 5;  // cannot cover the lure buyer group
  EXPECT_THROW(spec.validate(), ValidationError);
}

TEST(SyntheticTest, ZeroPackagesStillGenerates) {
  auto spec = small_spec();
  spec.packages = 0;
  spec.lure_fraction = 0.0;
  const auto ds = sy::generate(spec);
  EXPECT_TRUE(ds.packages.empty());
  EXPECT_TRUE(ds.lure_pairs.empty());
  EXPECT_EQ(ds.truth_pairs.size(), spec.planted_pairs);
}
