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
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "recallforge/common.hpp"
#include "recallforge/serde.hpp"

namespace recallforge {

enum class RecallSource { co_purchase, title_similarity, fused };

inline const char* to_string(RecallSource s) {
  switch (s) {
    case RecallSource::co_purchase: return "co_purchase";
    case RecallSource::title_similarity: return "title_similarity";
    case RecallSource::fused: return "fused";
  }
  return "unknown";
}

inline std::optional<RecallSource> recall_source_from_string(std::string_view s) {
  if (s == "co_purchase") return RecallSource::co_purchase;
  if (s == "title_similarity") return RecallSource::title_similarity;
  if (s == "fused") return RecallSource::fused;
  return std::nullopt;
}

struct Candidate {
  ItemId id = 0;
  double score = 0.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Per-item ranked candidate lists with a source label. Single-source
/// sets are ordered by (score desc, id asc); a fused set's order is the draw
/// order of the fusion policy.
struct RecallSet {
  RecallSource source = RecallSource::co_purchase;
  std::map<ItemId, std::vector<Candidate>> entries;
  std::optional<double> hit_rate;
};

inline bool candidate_rank_less(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

/// Builds the per-item top-k recall set from scored pairs; each pair feeds
/// both endpoints' lists. Ties break toward the lower candidate id.
inline RecallSet build_recall_set(std::span<const ItemPair> pairs, std::size_t k,
                                  RecallSource source) {
  if (k < 1) throw ValidationError("recall top-k must be >= 1");
  RecallSet set;
  set.source = source;
  for (const auto& p : pairs) {
    set.entries[p.hi].push_back(Candidate{p.lo, p.score});
    set.entries[p.lo].push_back(Candidate{p.hi, p.score});
  }
  for (auto& [item, list] : set.entries) {
    std::sort(list.begin(), list.end(), candidate_rank_less);
    if (list.size() > k) list.resize(k);
  }
  return set;
}

inline void save_recall_tsv(const RecallSet& set, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw PipelineError("cannot write " + path.string());
    out << "#source\t" << to_string(set.source) << "\n";
    for (const auto& [item, list] : set.entries) {
      for (std::size_t rank = 0; rank < list.size(); ++rank) {
        out << item << '\t' << list[rank].id << '\t' << serde::format_double(list[rank].score)
            << '\n';
      }
    }
    if (!out) throw PipelineError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline RecallSet load_recall_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError("cannot open " + path.string());
  RecallSet set;
  std::string line;
  bool first = true;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (first && line.rfind("#source\t", 0) == 0) {
      auto src = recall_source_from_string(line.substr(8));
      if (!src) throw PipelineError("bad source label in " + path.string());
      set.source = *src;
      first = false;
      continue;
    }
    first = false;
    ItemId item = 0, cand = 0;
    double score = 0.0;
    char tab1 = 0, tab2 = 0;
    std::istringstream row(line);
    if (!(row >> item >> cand >> score)) {
      throw PipelineError("bad recall row at " + path.string() + ":" + std::to_string(line_no));
    }
    (void)tab1;
    (void)tab2;
    set.entries[item].push_back(Candidate{cand, score});
  }
  return set;
}

/// Distinct canonical pairs present in a recall set.
inline std::set<PairKey> recall_pair_keys(const RecallSet& set) {
  std::set<PairKey> keys;
  for (const auto& [item, list] : set.entries) {
    for (const auto& cand : list) keys.insert(make_pair_key(item, cand.id));
  }
  return keys;
}

}  // namespace recallforge
