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
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "recallforge/common.hpp"
#include "recallforge/datamodel.hpp"
#include "recallforge/engine.hpp"
#include "recallforge/recallset.hpp"
#include "recallforge/serde.hpp"

// Title-similarity recall. Term weights are raw term frequency times
// idf = ln(m / n_k); document pairs sharing at least one term get their
// cosine similarity computed by an inverted-index MapReduce: per-term
// partial products, per-document norms, two left outer joins to attach both
// norms, then a final per-pair reduce.

namespace recallforge::title {

struct TermFrequencyVector {
  ItemId doc_id = 0;
  std::vector<std::pair<TermId, std::uint64_t>> counts;  // sorted by term id

  friend bool operator==(const TermFrequencyVector&, const TermFrequencyVector&) = default;
};

struct WeightedTermVector {
  ItemId doc_id = 0;
  std::vector<std::pair<TermId, double>> weights;  // sorted by term id
  double norm = 0.0;

  friend bool operator==(const WeightedTermVector&, const WeightedTermVector&) = default;
};

struct CorpusStats {
  std::uint64_t total_docs = 0;                     // m
  std::unordered_map<TermId, std::uint64_t> doc_freq;  // term -> n_k
};

/// Raw term counts per document (w_kj = tf_kj).
inline TermFrequencyVector compute_tf(const data::ItemInfo& item) {
  std::map<TermId, std::uint64_t> counts;
  for (TermId t : item.terms) ++counts[t];
  TermFrequencyVector tf;
  tf.doc_id = item.item_id;
  tf.counts.assign(counts.begin(), counts.end());
  return tf;
}

inline std::vector<TermFrequencyVector> compute_tf(std::span<const data::ItemInfo> items) {
  std::vector<TermFrequencyVector> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(compute_tf(item));
  return out;
}

inline CorpusStats corpus_stats(std::span<const TermFrequencyVector> tfs) {
  CorpusStats stats;
  stats.total_docs = tfs.size();
  for (const auto& tf : tfs) {
    for (const auto& [term, count] : tf.counts) ++stats.doc_freq[term];
  }
  return stats;
}

/// idf_k = ln(m / n_k); only terms present in the corpus have entries.
inline std::unordered_map<TermId, double> compute_idf(const CorpusStats& stats) {
  std::unordered_map<TermId, double> idf;
  idf.reserve(stats.doc_freq.size());
  for (const auto& [term, nk] : stats.doc_freq) {
    if (nk < 1 || nk > stats.total_docs) {
      throw PipelineError("corrupt corpus stats: n_k out of range for term " +
                          std::to_string(term));
    }
    idf[term] = std::log(static_cast<double>(stats.total_docs) / static_cast<double>(nk));
  }
  return idf;
}

/// weight = tf * idf; a term missing from the idf map means the corpus stats
/// are inconsistent with the vectors, which is a hard error.
inline WeightedTermVector compute_tfidf(const TermFrequencyVector& tf,
                                        const std::unordered_map<TermId, double>& idf) {
  WeightedTermVector w;
  w.doc_id = tf.doc_id;
  w.weights.reserve(tf.counts.size());
  double sq = 0.0;
  for (const auto& [term, count] : tf.counts) {
    auto it = idf.find(term);
    if (it == idf.end()) {
      throw PipelineError("idf missing for term " + std::to_string(term) +
                          " (corpus stats inconsistent)");
    }
    const double weight = static_cast<double>(count) * it->second;
    w.weights.emplace_back(term, weight);
    sq += weight * weight;
  }
  w.norm = std::sqrt(sq);
  return w;
}

inline std::vector<WeightedTermVector> compute_tfidf(
    std::span<const TermFrequencyVector> tfs, const std::unordered_map<TermId, double>& idf) {
  std::vector<WeightedTermVector> out;
  out.reserve(tfs.size());
  for (const auto& tf : tfs) out.push_back(compute_tfidf(tf, idf));
  return out;
}

namespace detail {

// step (1) input: one record per posting, keyed by term.
inline std::vector<engine::KeyedRecord> posting_records(
    std::span<const WeightedTermVector> vectors) {
  std::vector<engine::KeyedRecord> records;
  for (const auto& vec : vectors) {
    for (const auto& [term, weight] : vec.weights) {
      engine::KeyedRecord rec;
      serde::put_u64_be(rec.key, term);
      serde::put_u64_be(rec.value, vec.doc_id);
      serde::put_f64_le(rec.value, weight);
      records.push_back(std::move(rec));
    }
  }
  return records;
}

// steps (1)-(2): per term, emit the weight product for every document pair
// sharing it, keyed by the higher document id for the first norm join.
inline engine::JobStage partial_product_stage() {
  engine::JobStage stage;
  stage.name = "term-partials";
  stage.map = [](const engine::KeyedRecord& rec, engine::Emitter& emit) {
    emit.emit(engine::KeyedRecord{rec});
  };
  stage.reduce = [](const std::string&, const std::vector<std::string>& values,
                    engine::Emitter& emit) {
    std::vector<std::pair<ItemId, double>> postings;  // doc order: big-endian prefix
    postings.reserve(values.size());
    for (const auto& v : values) {
      serde::ByteReader r(v);
      const auto doc = r.u64_be();
      const auto weight = r.f64_le();
      postings.emplace_back(doc, weight);
    }
    for (std::size_t i = 0; i < postings.size(); ++i) {
      for (std::size_t j = i + 1; j < postings.size(); ++j) {
        const ItemId lo = postings[i].first;
        const ItemId hi = postings[j].first;
        engine::KeyedRecord out;
        serde::put_u64_be(out.key, hi);
        serde::put_u64_be(out.value, lo);
        serde::put_f64_le(out.value, postings[i].second * postings[j].second);
        emit.emit(std::move(out));
      }
    }
  };
  return stage;
}

// steps (3)-(4): per document, the Euclidean norm of its weight vector.
inline engine::JobStage norm_stage() {
  engine::JobStage stage;
  stage.name = "doc-norms";
  stage.map = [](const engine::KeyedRecord& rec, engine::Emitter& emit) {
    serde::ByteReader r(rec.value);
    const auto doc = r.u64_be();
    const auto weight = r.f64_le();
    engine::KeyedRecord out;
    serde::put_u64_be(out.key, doc);
    serde::put_f64_le(out.value, weight);
    emit.emit(std::move(out));
  };
  stage.reduce = [](const std::string& key, const std::vector<std::string>& values,
                    engine::Emitter& emit) {
    double sq = 0.0;
    for (const auto& v : values) {
      serde::ByteReader r(v);
      const double w = r.f64_le();
      sq += w * w;
    }
    engine::KeyedRecord out;
    out.key = key;
    serde::put_f64_le(out.value, std::sqrt(sq));
    emit.emit(std::move(out));
  };
  return stage;
}

// steps (6)-(7): pair key carrying (product, norm_hi, norm_lo); reduce sums
// the products and divides by the norm product.
inline engine::JobStage cosine_stage(Counters* counters) {
  engine::JobStage stage;
  stage.name = "pair-cosine";
  stage.map = [counters](const engine::KeyedRecord& rec, engine::Emitter& emit) {
    const auto joined = engine::decode_join_value(rec.value);
    serde::ByteReader left(joined.left);
    const auto hi = left.u64_be();
    const auto product = left.f64_le();
    const auto norm_hi = left.f64_le();
    double norm_lo = 0.0;
    if (joined.right.has_value()) {
      serde::ByteReader right(*joined.right);
      norm_lo = right.f64_le();
    }
    if (norm_hi <= 0.0 || norm_lo <= 0.0) {
      bump(counters, "title.zero_norm_partials_skipped");
      return;
    }
    serde::ByteReader key(rec.key);
    const auto lo = key.u64_be();
    engine::KeyedRecord out;
    serde::put_u64_be(out.key, hi);
    serde::put_u64_be(out.key, lo);
    serde::put_f64_le(out.value, product);
    serde::put_f64_le(out.value, norm_hi);
    serde::put_f64_le(out.value, norm_lo);
    emit.emit(std::move(out));
  };
  stage.reduce = [](const std::string& key, const std::vector<std::string>& values,
                    engine::Emitter& emit) {
    double dot = 0.0;
    double norm_hi = 0.0, norm_lo = 0.0;
    for (const auto& v : values) {
      serde::ByteReader r(v);
      dot += r.f64_le();
      norm_hi = r.f64_le();
      norm_lo = r.f64_le();
    }
    engine::KeyedRecord out;
    out.key = key;
    // clamp away FP overshoot so scores stay inside [0, 1]
    serde::put_f64_le(out.value, std::clamp(dot / (norm_hi * norm_lo), 0.0, 1.0));
    emit.emit(std::move(out));
  };
  return stage;
}

}  // namespace detail

/// All-pairs cosine over shared-term document pairs. Documents with zero
/// norm are skipped (counted, not an error); pairs sharing no term are not
/// emitted. Scores land in [0, 1] since weights are nonnegative.
inline std::vector<ItemPair> pairwise_cosine(std::span<const WeightedTermVector> vectors,
                                             const engine::EngineConfig& cfg = {},
                                             Counters* counters = nullptr) {
  auto partials =
      engine::run_stage(detail::partial_product_stage(), detail::posting_records(vectors), cfg,
                        counters);
  auto norms = engine::run_stage(detail::norm_stage(), detail::posting_records(vectors), cfg,
                                 counters);
  if (counters != nullptr) {
    std::uint64_t zero_norm_docs = 0;
    for (const auto& rec : norms) {
      serde::ByteReader r(rec.value);
      if (r.f64_le() <= 0.0) ++zero_norm_docs;
    }
    bump(counters, "title.zero_norm_docs", zero_norm_docs);
  }

  // step (5): attach the higher doc's norm, re-key by the lower doc,
  // attach its norm too.
  auto joined_hi = engine::left_outer_join(partials, norms, cfg, counters);

  std::vector<engine::KeyedRecord> keyed_by_lo;
  keyed_by_lo.reserve(joined_hi.size());
  for (const auto& rec : joined_hi) {
    const auto joined = engine::decode_join_value(rec.value);
    serde::ByteReader left(joined.left);
    const auto lo = left.u64_be();
    const auto product = left.f64_le();
    double norm_hi = 0.0;
    if (joined.right.has_value()) {
      serde::ByteReader right(*joined.right);
      norm_hi = right.f64_le();
    }
    serde::ByteReader key(rec.key);
    const auto hi = key.u64_be();
    engine::KeyedRecord out;
    serde::put_u64_be(out.key, lo);
    serde::put_u64_be(out.value, hi);
    serde::put_f64_le(out.value, product);
    serde::put_f64_le(out.value, norm_hi);
    keyed_by_lo.push_back(std::move(out));
  }
  auto joined_both = engine::left_outer_join(keyed_by_lo, norms, cfg, counters);

  auto cosine_records = engine::run_stage(detail::cosine_stage(counters), joined_both, cfg,
                                          counters);

  std::vector<ItemPair> pairs;
  pairs.reserve(cosine_records.size());
  for (const auto& rec : cosine_records) {
    serde::ByteReader key(rec.key);
    serde::ByteReader value(rec.value);
    ItemPair p;
    p.hi = key.u64_be();
    p.lo = key.u64_be();
    p.score = value.f64_le();
    pairs.push_back(p);
  }
  bump(counters, "title.cosine_pairs", pairs.size());
  return pairs;
}

inline RecallSet title_recall(std::span<const ItemPair> pairs, std::size_t k) {
  return build_recall_set(pairs, k, RecallSource::title_similarity);
}

}  // namespace recallforge::title
