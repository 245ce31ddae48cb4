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
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "recallforge/common.hpp"
#include "recallforge/datamodel.hpp"
#include "recallforge/serde.hpp"

// Seeded dataset generator with planted, exactly-known structure:
//
//  * planted collocation pairs whose co-purchase count equals the number of
//    designated buyers exactly — noise purchases never touch planted items,
//    so no coincidental co-purchase can shift a count;
//  * a subset of planted pairs with byte-identical titles (cosine 1 up to
//    roundoff) and the rest sharing two pair-unique rare terms;
//  * optional "lure" partners: per planted pair, an extra item co-purchased
//    with one endpoint MORE often than the true partner but with distant
//    features, so a feature-based ranking correction must demote it;
//  * match packages clustered around feature centroids (small in-package
//    feature distances), the positives a pairwise ranker trains on.
//
// The same seed always reproduces the same bytes.

namespace recallforge::synth {

struct SynthSpec {
  std::uint64_t users = 200;
  std::uint64_t items = 160;
  std::uint64_t packages = 10;
  std::uint64_t package_size_min = 3;
  std::uint64_t package_size_max = 5;
  std::uint64_t planted_pairs = 15;
  double lure_fraction = 0.0;  // fraction of planted pairs that get a lure
  std::uint64_t buyers_min = 4;
  std::uint64_t buyers_max = 8;
  std::uint64_t lure_buyers_min = 10;
  std::uint64_t lure_buyers_max = 14;
  std::uint64_t tau_days = 30;
  std::uint64_t noise_purchases_per_user = 3;
  std::uint64_t vocab = 300;
  std::uint64_t title_len_min = 3;
  std::uint64_t title_len_max = 6;
  double identical_title_fraction = 0.5;
  std::uint64_t feature_dim = 8;
  std::uint64_t categories = 12;
  std::uint64_t seed = 42;

  std::uint64_t lure_count() const {
    return static_cast<std::uint64_t>(
        std::llround(lure_fraction * static_cast<double>(planted_pairs)));
  }

  void validate() const {
    if (users < 1 || items < 1) throw ValidationError("synth: users and items must be positive");
    if (package_size_min < 2 || package_size_max < package_size_min) {
      throw ValidationError("synth: package sizes must satisfy 2 <= min <= max");
    }
    if (buyers_min < 1 || buyers_max < buyers_min) {
      throw ValidationError("synth: buyer counts must satisfy 1 <= min <= max");
    }
    if (lure_buyers_min < 1 || lure_buyers_max < lure_buyers_min) {
      throw ValidationError("synth: lure buyer counts must satisfy 1 <= min <= max");
    }
    if (lure_fraction < 0.0 || lure_fraction > 1.0) {
      throw ValidationError("synth: lure_fraction must be in [0,1]");
    }
    if (identical_title_fraction < 0.0 || identical_title_fraction > 1.0) {
      throw ValidationError("synth: identical_title_fraction must be in [0,1]");
    }
    if (tau_days < 1) throw ValidationError("synth: tau_days must be >= 1");
    if (vocab < 1) throw ValidationError("synth: vocab must be >= 1");
    if (title_len_min < 1 || title_len_max < title_len_min) {
      throw ValidationError("synth: title lengths must satisfy 1 <= min <= max");
    }
    if (feature_dim < 1) throw ValidationError("synth: feature_dim must be >= 1");
    if (categories < 2) throw ValidationError("synth: categories must be >= 2");
    if (users < std::max(buyers_max, lure_buyers_max)) {
      throw ValidationError("synth: users must cover the largest buyer group");
    }
    const std::uint64_t needed =
        2 * planted_pairs + lure_count() + packages * package_size_max + 2;
    if (items < needed) {
      throw ValidationError("synth: needs at least " + std::to_string(needed) +
                            " items for the requested structure");
    }
  }
};

struct SynthDataset {
  std::vector<data::ItemInfo> items;  // features attached
  std::vector<data::MatchPackage> packages;
  std::vector<data::PurchaseRecord> purchases;
  std::vector<data::BehaviorRecord> behaviors;

  std::set<PairKey> truth_pairs;                 // planted collocations
  std::map<PairKey, std::uint64_t> truth_freq;   // exact co-purchase counts
  std::map<PairKey, double> truth_cosine;        // identical-title pairs
  std::vector<PairKey> lure_pairs;               // (endpoint, lure item)
};

namespace detail {

inline ItemId item_id_at(std::uint64_t index) { return 1001 + index; }
inline UserId user_id_at(std::uint64_t index) { return 1 + index; }

inline std::vector<UserId> sample_users(Rng& rng, std::uint64_t universe, std::uint64_t n) {
  std::set<UserId> chosen;
  while (chosen.size() < n) chosen.insert(user_id_at(rng.below(universe)));
  return {chosen.begin(), chosen.end()};
}

inline std::vector<TermId> random_title(Rng& rng, const SynthSpec& spec) {
  const auto len = rng.between(spec.title_len_min, spec.title_len_max);
  std::vector<TermId> terms(len);
  for (auto& t : terms) t = 1 + rng.below(spec.vocab);
  return terms;
}

inline std::string geohash_or_empty(Rng& rng) {
  static constexpr char kAlphabet[] = "0123456789bcdefghjkmnpqrstuvwxyz";
  if (rng.below(2) == 0) return {};
  std::string out(5, '0');
  for (auto& c : out) c = kAlphabet[rng.below(32)];
  return out;
}

}  // namespace detail

inline SynthDataset generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SynthDataset ds;

  const std::uint64_t planted_items = 2 * spec.planted_pairs;
  const std::uint64_t lures = spec.lure_count();
  const std::uint64_t package_base = planted_items + lures;

  // --- roles and categories -------------------------------------------------
  ds.items.resize(spec.items);
  for (std::uint64_t i = 0; i < spec.items; ++i) {
    ds.items[i].item_id = detail::item_id_at(i);
    ds.items[i].cat_id = 1 + i % spec.categories;
  }
  // consecutive indices land in different categories, so planted pairs are
  // cross-category by construction; force the same for lure pairs
  for (std::uint64_t l = 0; l < lures; ++l) {
    auto& lure = ds.items[planted_items + l];
    const auto& partner = ds.items[2 * l];
    if (lure.cat_id == partner.cat_id) {
      lure.cat_id = 1 + lure.cat_id % spec.categories;
    }
  }

  // --- packages (consecutive disjoint blocks after planted/lure items) ------
  std::uint64_t next_package_item = package_base;
  for (std::uint64_t p = 0; p < spec.packages; ++p) {
    data::MatchPackage pkg;
    pkg.coll_id = 1 + p;
    const auto size = rng.between(spec.package_size_min, spec.package_size_max);
    for (std::uint64_t s = 0; s < size; ++s) {
      pkg.item_ids.push_back(detail::item_id_at(next_package_item++));
    }
    ds.packages.push_back(std::move(pkg));
  }
  const std::uint64_t free_base = next_package_item;

  // --- titles ---------------------------------------------------------------
  // rare terms live above the shared vocabulary and are unique per pair
  const auto identical_count = static_cast<std::uint64_t>(
      std::llround(spec.identical_title_fraction * static_cast<double>(spec.planted_pairs)));
  for (std::uint64_t p = 0; p < spec.planted_pairs; ++p) {
    const TermId rare1 = spec.vocab + 2 * p + 1;
    const TermId rare2 = spec.vocab + 2 * p + 2;
    auto title_a = detail::random_title(rng, spec);
    title_a.push_back(rare1);
    title_a.push_back(rare2);
    auto& a = ds.items[2 * p];
    auto& b = ds.items[2 * p + 1];
    if (p < identical_count) {
      b.terms = title_a;
      ds.truth_cosine[make_pair_key(a.item_id, b.item_id)] = 1.0;
    } else {
      auto title_b = detail::random_title(rng, spec);
      title_b.push_back(rare1);
      title_b.push_back(rare2);
      b.terms = std::move(title_b);
    }
    a.terms = std::move(title_a);
  }
  for (std::uint64_t i = planted_items; i < spec.items; ++i) {
    ds.items[i].terms = detail::random_title(rng, spec);
  }

  // --- features -------------------------------------------------------------
  const auto jitter = [&rng](double center, double radius) {
    return std::clamp(center + (rng.unit() - 0.5) * 2.0 * radius, 0.0, 1.0);
  };
  for (std::uint64_t p = 0; p < spec.planted_pairs; ++p) {
    std::vector<double> fa(spec.feature_dim), fb(spec.feature_dim);
    for (std::uint64_t j = 0; j < spec.feature_dim; ++j) {
      const double c = 0.2 + 0.6 * rng.unit();
      fa[j] = jitter(c, 0.02);
      fb[j] = jitter(c, 0.02);
    }
    ds.items[2 * p].features = std::move(fa);
    ds.items[2 * p + 1].features = std::move(fb);
  }
  for (std::uint64_t l = 0; l < lures; ++l) {
    std::vector<double> f(spec.feature_dim);
    for (auto& v : f) v = 0.93 + 0.06 * rng.unit();  // far from every centroid
    ds.items[planted_items + l].features = std::move(f);
  }
  {
    std::uint64_t index = package_base;
    for (const auto& pkg : ds.packages) {
      std::vector<double> centroid(spec.feature_dim);
      for (auto& c : centroid) c = 0.1 + 0.8 * rng.unit();
      for (std::size_t s = 0; s < pkg.item_ids.size(); ++s) {
        std::vector<double> f(spec.feature_dim);
        for (std::uint64_t j = 0; j < spec.feature_dim; ++j) f[j] = jitter(centroid[j], 0.05);
        ds.items[index++].features = std::move(f);
      }
    }
  }
  for (std::uint64_t i = free_base; i < spec.items; ++i) {
    std::vector<double> f(spec.feature_dim);
    for (auto& v : f) v = rng.unit();
    ds.items[i].features = std::move(f);
  }

  // --- purchases ------------------------------------------------------------
  const std::int64_t base_day = data::days_from_civil(2014, 11, 18);
  const auto planted_purchase = [&](UserId u, ItemId first, ItemId second) {
    const std::int64_t day1 = base_day + static_cast<std::int64_t>(rng.below(30));
    const std::int64_t gap = static_cast<std::int64_t>(rng.below(spec.tau_days + 1));
    ds.purchases.push_back({u, first, day1});
    ds.purchases.push_back({u, second, day1 + gap});
  };
  for (std::uint64_t p = 0; p < spec.planted_pairs; ++p) {
    const ItemId a = detail::item_id_at(2 * p);
    const ItemId b = detail::item_id_at(2 * p + 1);
    const auto buyers =
        detail::sample_users(rng, spec.users, rng.between(spec.buyers_min, spec.buyers_max));
    for (const UserId u : buyers) planted_purchase(u, a, b);
    const auto key = make_pair_key(a, b);
    ds.truth_pairs.insert(key);
    ds.truth_freq[key] = buyers.size();
  }
  for (std::uint64_t l = 0; l < lures; ++l) {
    const ItemId partner = detail::item_id_at(2 * l);
    const ItemId lure = detail::item_id_at(planted_items + l);
    const auto buyers = detail::sample_users(
        rng, spec.users, rng.between(spec.lure_buyers_min, spec.lure_buyers_max));
    for (const UserId u : buyers) planted_purchase(u, partner, lure);
    const auto key = make_pair_key(partner, lure);
    ds.truth_freq[key] = buyers.size();
    ds.lure_pairs.push_back(key);
  }
  // noise purchases stay off planted and lure items so the counts above are
  // exact; with no package/free items there is nothing to browse, skip noise
  if (free_base < spec.items || package_base < free_base) {
    const std::uint64_t noise_pool = spec.items - package_base;
    for (std::uint64_t u = 0; u < spec.users; ++u) {
      for (std::uint64_t t = 0; t < spec.noise_purchases_per_user; ++t) {
        const ItemId item = detail::item_id_at(package_base + rng.below(noise_pool));
        const std::int64_t day = base_day + static_cast<std::int64_t>(rng.below(60));
        ds.purchases.push_back({detail::user_id_at(u), item, day});
      }
    }
  }

  // --- behavior log: one buy event per purchase plus browse noise -----------
  std::map<ItemId, CatId> cat_of;
  for (const auto& item : ds.items) cat_of[item.item_id] = item.cat_id;
  for (const auto& rec : ds.purchases) {
    data::BehaviorRecord b;
    b.user_id = rec.user_id;
    b.item_id = rec.item_id;
    b.behavior = data::BehaviorType::buy;
    const auto hash = detail::geohash_or_empty(rng);
    if (!hash.empty()) b.geohash = hash;
    b.item_category = cat_of[rec.item_id];
    b.time_minutes = rec.create_at_day * 1440 + 600;
    ds.behaviors.push_back(std::move(b));
  }
  for (std::uint64_t n = 0; n < 2 * spec.users; ++n) {
    data::BehaviorRecord b;
    b.user_id = detail::user_id_at(rng.below(spec.users));
    const std::uint64_t index = rng.below(spec.items);
    b.item_id = detail::item_id_at(index);
    b.behavior = static_cast<data::BehaviorType>(1 + rng.below(3));  // never a buy
    const auto hash = detail::geohash_or_empty(rng);
    if (!hash.empty()) b.geohash = hash;
    b.item_category = ds.items[index].cat_id;
    const std::int64_t day = base_day + static_cast<std::int64_t>(rng.below(60));
    b.time_minutes = day * 1440 + (8 + static_cast<std::int64_t>(rng.below(12))) * 60;
    ds.behaviors.push_back(std::move(b));
  }

  return ds;
}

// ---------------------------------------------------------------------------
// File emission, via the canonical datamodel writers.

inline void write_truth_files(const SynthDataset& ds, const std::filesystem::path& dir) {
  data::write_truth_pairs(ds.truth_pairs, dir / "truth_pairs.tsv");
  {
    std::string buf;
    for (const auto& [key, freq] : ds.truth_freq) {
      buf += std::to_string(key.first);
      buf += '\t';
      buf += std::to_string(key.second);
      buf += '\t';
      buf += std::to_string(freq);
      buf += '\n';
    }
    serde::write_file_atomic(dir / "truth_freq.tsv", buf);
  }
  {
    std::string buf;
    for (const auto& [key, value] : ds.truth_cosine) {
      buf += std::to_string(key.first);
      buf += '\t';
      buf += std::to_string(key.second);
      buf += '\t';
      buf += serde::format_double(value);
      buf += '\n';
    }
    serde::write_file_atomic(dir / "truth_cosine.tsv", buf);
  }
}

/// Writes the full dataset: the four input tables, the feature sidecar, and
/// the three ground-truth files.
inline void write_dataset(const SynthDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  data::write_behavior_log(ds.behaviors, dir / "behavior_log.tsv");
  data::write_item_info(ds.items, dir / "item_info.tsv");
  std::map<ItemId, std::vector<double>> features;
  for (const auto& item : ds.items) {
    if (item.features) features[item.item_id] = *item.features;
  }
  data::write_feature_sidecar(features, dir / "item_features.tsv");
  data::write_match_packages(ds.packages, dir / "match_packages.tsv");
  data::write_purchase_history(ds.purchases, dir / "purchase_history.tsv");
  write_truth_files(ds, dir);
}

inline SynthDataset generate_and_write(const SynthSpec& spec, const std::filesystem::path& dir) {
  auto ds = generate(spec);
  write_dataset(ds, dir);
  return ds;
}

}  // namespace recallforge::synth
