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
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "recallforge/common.hpp"
#include "recallforge/config.hpp"
#include "recallforge/copurchase.hpp"
#include "recallforge/datamodel.hpp"
#include "recallforge/engine.hpp"
#include "recallforge/fusion.hpp"
#include "recallforge/metrics.hpp"
#include "recallforge/ranker.hpp"
#include "recallforge/recallset.hpp"
#include "recallforge/serde.hpp"
#include "recallforge/tfidf.hpp"

// Batch orchestration: ingestion -> co-purchase recall -> title recall ->
// category filter + fusion -> ranker training -> ranking correction ->
// evaluation. Every stage persists its output under the configured output
// directory and is skipped on rerun when that output already exists, so
// deleting one artifact recomputes exactly that stage. Stage errors carry
// the stage name.

namespace recallforge::pipeline {

namespace fs = std::filesystem;

/// Locations of all persisted artifacts for one output directory.
struct Artifacts {
  explicit Artifacts(const config::PipelineConfig& cfg) : out(cfg.output_dir) {}

  fs::path out;
  fs::path ingested_dir() const { return out / "ingested"; }
  fs::path behavior_log() const { return ingested_dir() / "behavior_log.tsv"; }
  fs::path item_info() const { return ingested_dir() / "item_info.tsv"; }
  fs::path item_features() const { return ingested_dir() / "item_features.tsv"; }
  fs::path match_packages() const { return ingested_dir() / "match_packages.tsv"; }
  fs::path purchase_history() const { return ingested_dir() / "purchase_history.tsv"; }
  fs::path copurchase_pairs() const { return out / "copurchase_pairs.bin"; }
  fs::path title_pairs() const { return out / "title_pairs.bin"; }
  fs::path fused_recall() const { return out / "fused_recall.tsv"; }
  fs::path rank_model() const { return out / "rank_model.bin"; }
  fs::path corrected_recall() const { return out / "corrected_recall.tsv"; }
  fs::path eval_report() const { return out / "eval_report.txt"; }
};

struct EvalSummary {
  metrics::EvalReport report;  // P/R/F1 of the corrected pair set vs truth
  double map_fused = 0.0;
  double map_corrected = 0.0;
  std::uint64_t map_k = 0;
};

namespace detail {

template <typename F>
auto stage_guard(const std::string& name, F&& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError("stage " + name + ": " + e.what());
  } catch (const Error& e) {
    throw PipelineError("stage " + name + ": " + e.what());
  } catch (const std::exception& e) {
    throw PipelineError("stage " + name + ": " + e.what());
  }
}

inline engine::EngineConfig engine_config(const config::PipelineConfig& cfg) {
  engine::EngineConfig ec;
  ec.workers = static_cast<std::size_t>(cfg.workers);
  ec.memory_budget_bytes = static_cast<std::size_t>(cfg.memory_budget_mb) << 20;
  ec.scratch_dir = config::resolved_scratch(cfg);
  return ec;
}

inline data::ParseOptions parse_options(const config::PipelineConfig& cfg) {
  return data::ParseOptions{cfg.max_reject_rate};
}

inline void require_input(const std::string& configured, const char* key) {
  if (configured.empty()) {
    throw ValidationError(std::string(key) + " is not configured");
  }
  if (!fs::exists(configured)) {
    throw ValidationError(std::string(key) + " does not exist: " + configured);
  }
}

inline void require_artifact(const fs::path& path, const char* producer) {
  if (!fs::exists(path)) {
    throw PipelineError(path.string() + " is missing; run " + producer + " first");
  }
}

inline void note_parse(Counters* counters, const char* table, const data::ParseStats& stats) {
  bump(counters, std::string("ingest.") + table + ".accepted", stats.accepted);
  bump(counters, std::string("ingest.") + table + ".rejected", stats.rejected);
}

inline std::unordered_map<ItemId, CatId> category_map(const std::vector<data::ItemInfo>& items) {
  std::unordered_map<ItemId, CatId> cats;
  cats.reserve(items.size());
  for (const auto& item : items) cats[item.item_id] = item.cat_id;
  return cats;
}

}  // namespace detail

/// Validates and canonicalizes all configured inputs into
/// <output_dir>/ingested/. Only configured tables are processed; the whole
/// stage is skipped when every expected output already exists.
inline void run_ingest(const config::PipelineConfig& cfg, Counters* counters = nullptr) {
  detail::stage_guard("ingest", [&] {
    const Artifacts art(cfg);
    std::vector<std::pair<std::string, fs::path>> wanted;
    if (!cfg.behavior_log.empty()) wanted.emplace_back(cfg.behavior_log, art.behavior_log());
    if (!cfg.item_info.empty()) wanted.emplace_back(cfg.item_info, art.item_info());
    if (!cfg.item_features.empty()) wanted.emplace_back(cfg.item_features, art.item_features());
    if (!cfg.match_packages.empty()) wanted.emplace_back(cfg.match_packages, art.match_packages());
    if (!cfg.purchase_history.empty()) {
      wanted.emplace_back(cfg.purchase_history, art.purchase_history());
    }
    if (wanted.empty()) throw ValidationError("no input paths configured");
    const bool all_present = std::all_of(wanted.begin(), wanted.end(),
                                         [](const auto& w) { return fs::exists(w.second); });
    if (all_present) {
      bump(counters, "pipeline.ingest.skipped");
      return;
    }
    fs::create_directories(art.ingested_dir());
    const auto opts = detail::parse_options(cfg);

    if (!cfg.behavior_log.empty()) {
      detail::require_input(cfg.behavior_log, "paths.behavior_log");
      auto reader = data::open_behavior_log(cfg.behavior_log, opts);
      const auto rows = reader.read_all();
      detail::note_parse(counters, "behavior_log", reader.stats());
      data::write_behavior_log(rows, art.behavior_log());
    }
    if (!cfg.item_info.empty()) {
      detail::require_input(cfg.item_info, "paths.item_info");
      auto reader = data::open_item_info(cfg.item_info, opts);
      const auto rows = reader.read_all();
      detail::note_parse(counters, "item_info", reader.stats());
      data::write_item_info(rows, art.item_info());
    }
    if (!cfg.item_features.empty()) {
      detail::require_input(cfg.item_features, "paths.item_features");
      data::ParseStats stats;
      const auto sidecar = data::load_feature_sidecar(
          cfg.item_features, static_cast<std::size_t>(cfg.feature_dim), &stats, opts);
      detail::note_parse(counters, "item_features", stats);
      data::write_feature_sidecar({sidecar.begin(), sidecar.end()}, art.item_features());
    }
    if (!cfg.match_packages.empty()) {
      detail::require_input(cfg.match_packages, "paths.match_packages");
      auto reader = data::open_match_packages(cfg.match_packages, opts);
      const auto rows = reader.read_all();
      detail::note_parse(counters, "match_packages", reader.stats());
      data::write_match_packages(rows, art.match_packages());
    }
    if (!cfg.purchase_history.empty()) {
      detail::require_input(cfg.purchase_history, "paths.purchase_history");
      auto reader = data::open_purchase_history(cfg.purchase_history, opts);
      const auto rows = reader.read_all();
      detail::note_parse(counters, "purchase_history", reader.stats());
      data::write_purchase_history(rows, art.purchase_history());
    }
  });
}

/// Two-step co-purchase counting over the ingested purchase history;
/// persists scored pairs to copurchase_pairs.bin.
inline void run_recall_copurchase(const config::PipelineConfig& cfg, Counters* counters = nullptr) {
  detail::stage_guard("recall-copurchase", [&] {
    const Artifacts art(cfg);
    if (fs::exists(art.copurchase_pairs())) {
      bump(counters, "pipeline.recall_copurchase.skipped");
      return;
    }
    detail::require_artifact(art.purchase_history(), "ingest");
    auto reader = data::open_purchase_history(art.purchase_history(), detail::parse_options(cfg));
    const auto purchases = reader.read_all();
    const copurchase::TimeWindow window{static_cast<std::int64_t>(cfg.tau_days)};
    const auto pairs =
        copurchase::copurchase_freq(purchases, window, detail::engine_config(cfg), counters);
    data::persist_pairs(pairs, art.copurchase_pairs());
  });
}

/// TF-IDF weighting plus inverted-index cosine over ingested item titles;
/// persists scored pairs to title_pairs.bin.
inline void run_recall_title(const config::PipelineConfig& cfg, Counters* counters = nullptr) {
  detail::stage_guard("recall-title", [&] {
    const Artifacts art(cfg);
    if (fs::exists(art.title_pairs())) {
      bump(counters, "pipeline.recall_title.skipped");
      return;
    }
    detail::require_artifact(art.item_info(), "ingest");
    auto reader = data::open_item_info(art.item_info(), detail::parse_options(cfg));
    const auto items = reader.read_all();
    const auto tfs = title::compute_tf(items);
    const auto idf = title::compute_idf(title::corpus_stats(tfs));
    const auto weighted = title::compute_tfidf(tfs, idf);
    const auto pairs = title::pairwise_cosine(weighted, detail::engine_config(cfg), counters);
    data::persist_pairs(pairs, art.title_pairs());
  });
}

/// Category-filters both recall pair lists, builds per-item top-k recall
/// sets, and mixes them under the quota policy. When ground truth is
/// configured, hit rates are measured and sources draw in descending
/// hit-rate order; otherwise the configured priority order applies.
inline void run_fuse(const config::PipelineConfig& cfg, Counters* counters = nullptr) {
  detail::stage_guard("fuse", [&] {
    const Artifacts art(cfg);
    if (fs::exists(art.fused_recall())) {
      bump(counters, "pipeline.fuse.skipped");
      return;
    }
    detail::require_artifact(art.copurchase_pairs(), "recall-copurchase");
    detail::require_artifact(art.title_pairs(), "recall-title");
    detail::require_artifact(art.item_info(), "ingest");

    auto reader = data::open_item_info(art.item_info(), detail::parse_options(cfg));
    const auto cats = detail::category_map(reader.read_all());
    auto policy = config::fusion_policy(cfg);

    const auto cop_pairs = fusion::category_filter(data::load_pairs(art.copurchase_pairs()), cats,
                                                   policy.category_rule, counters);
    const auto title_pairs = fusion::category_filter(data::load_pairs(art.title_pairs()), cats,
                                                     policy.category_rule, counters);

    auto cop_set = build_recall_set(cop_pairs, static_cast<std::size_t>(cfg.copurchase_top_k),
                                    RecallSource::co_purchase);
    auto title_set = build_recall_set(title_pairs, static_cast<std::size_t>(cfg.title_top_k),
                                      RecallSource::title_similarity);

    if (!cfg.truth_pairs.empty()) {
      detail::require_input(cfg.truth_pairs, "paths.truth_pairs");
      const auto truth = data::load_truth_pairs(cfg.truth_pairs);
      cop_set.hit_rate = fusion::measure_hit_rate(cop_set, truth);
      title_set.hit_rate = fusion::measure_hit_rate(title_set, truth);
      std::map<RecallSource, double> rates = {
          {RecallSource::co_purchase, *cop_set.hit_rate},
          {RecallSource::title_similarity, *title_set.hit_rate},
      };
      std::stable_sort(policy.quotas.begin(), policy.quotas.end(),
                       [&rates](const fusion::FusionQuota& a, const fusion::FusionQuota& b) {
                         return rates.at(a.source) > rates.at(b.source);
                       });
    }

    const auto fused = fusion::fuse_recalls({cop_set, title_set}, policy, counters);
    save_recall_tsv(fused, art.fused_recall());
  });
}

/// Trains the L1-regularized pairwise ranker on match packages vs sampled
/// negatives; persists the model to rank_model.bin.
inline void run_train(const config::PipelineConfig& cfg, Counters* counters = nullptr) {
  detail::stage_guard("train", [&] {
    const Artifacts art(cfg);
    if (fs::exists(art.rank_model())) {
      bump(counters, "pipeline.train.skipped");
      return;
    }
    detail::require_artifact(art.match_packages(), "ingest");
    detail::require_artifact(art.item_features(), "ingest");
    auto reader = data::open_match_packages(art.match_packages(), detail::parse_options(cfg));
    const auto packages = reader.read_all();
    const auto features = data::load_feature_sidecar(
        art.item_features(), static_cast<std::size_t>(cfg.feature_dim));
    const auto examples =
        ranker::build_training_set(packages, features, cfg.negative_ratio, cfg.seed, counters);
    const auto model = ranker::train_lr(examples, cfg.lr);
    ranker::save_model(model, art.rank_model());
    bump(counters, "ranker.training_examples", examples.size());
  });
}

/// Scores every fused pair with the trained model, derives fix/rank_fix,
/// and persists the re-ranked lists to corrected_recall.tsv. Pairs whose
/// items lack features are dropped from the lists with a counter.
inline void run_rank_correct(const config::PipelineConfig& cfg, Counters* counters = nullptr) {
  detail::stage_guard("rank-correct", [&] {
    const Artifacts art(cfg);
    if (fs::exists(art.corrected_recall())) {
      bump(counters, "pipeline.rank_correct.skipped");
      return;
    }
    detail::require_artifact(art.fused_recall(), "fuse");
    detail::require_artifact(art.rank_model(), "train");
    detail::require_artifact(art.item_features(), "ingest");

    const auto fused = load_recall_tsv(art.fused_recall());
    const auto model = ranker::load_model(art.rank_model());
    const auto features = data::load_feature_sidecar(
        art.item_features(), static_cast<std::size_t>(cfg.feature_dim));

    RecallSet scored;
    scored.source = fused.source;
    scored.hit_rate = fused.hit_rate;
    for (const auto& [item, list] : fused.entries) {
      std::vector<Candidate> kept;
      kept.reserve(list.size());
      for (const auto& cand : list) {
        if (features.contains(item) && features.contains(cand.id)) {
          kept.push_back(cand);
        } else {
          bump(counters, "ranker.pairs_missing_features");
        }
      }
      if (!kept.empty()) scored.entries[item] = std::move(kept);
    }

    std::map<PairKey, double> probs;
    for (const auto& key : recall_pair_keys(scored)) {
      const auto diff = ranker::feature_diff(features.at(key.first), features.at(key.second));
      probs[key] = ranker::predict_proba(model, diff);
    }
    const auto fixes = ranker::compute_fix(probs);
    const auto corrected = ranker::apply_rank_correction(scored, fixes);
    save_recall_tsv(corrected, art.corrected_recall());
    bump(counters, "ranker.scored_pairs", probs.size());
  });
}

/// Scores the corrected output against ground truth: pair-set P/R/F1 plus
/// MAP@k of the fused (uncorrected) and corrected rankings. The report is
/// written as a small table followed by machine-readable key=value lines.
inline EvalSummary run_eval(const config::PipelineConfig& cfg, Counters* counters = nullptr) {
  return detail::stage_guard("eval", [&]() -> EvalSummary {
    const Artifacts art(cfg);
    detail::require_artifact(art.fused_recall(), "fuse");
    detail::require_artifact(art.corrected_recall(), "rank-correct");
    if (cfg.truth_pairs.empty()) throw ValidationError("paths.truth_pairs is not configured");
    detail::require_input(cfg.truth_pairs, "paths.truth_pairs");

    const auto fused = load_recall_tsv(art.fused_recall());
    const auto corrected = load_recall_tsv(art.corrected_recall());
    const auto truth = data::load_truth_pairs(cfg.truth_pairs);
    const auto truth_per_item = metrics::truth_by_item(truth);

    EvalSummary summary;
    summary.map_k = cfg.map_k;
    summary.report = metrics::precision_recall_f1(recall_pair_keys(corrected), truth);
    summary.map_fused =
        metrics::mean_average_precision(fused, truth_per_item, cfg.map_k, counters);
    summary.map_corrected =
        metrics::mean_average_precision(corrected, truth_per_item, cfg.map_k, counters);
    summary.report.map_at_k = summary.map_corrected;

    std::string text;
    text += "collocation evaluation\n";
    text += "----------------------\n";
    const auto row = [&text](const char* label, const std::string& value) {
      text += label;
      text += value;
      text += '\n';
    };
    row("predicted pairs   ", std::to_string(summary.report.counts.predicted));
    row("relevant pairs    ", std::to_string(summary.report.counts.relevant));
    row("hits              ", std::to_string(summary.report.counts.hits));
    row("precision         ", serde::format_double(summary.report.precision));
    row("recall            ", serde::format_double(summary.report.recall));
    row("f1                ", serde::format_double(summary.report.f1));
    row("map fused         ", serde::format_double(summary.map_fused));
    row("map corrected     ", serde::format_double(summary.map_corrected));
    text += '\n';
    text += "predicted=" + std::to_string(summary.report.counts.predicted) + "\n";
    text += "relevant=" + std::to_string(summary.report.counts.relevant) + "\n";
    text += "hits=" + std::to_string(summary.report.counts.hits) + "\n";
    text += "precision=" + serde::format_double(summary.report.precision) + "\n";
    text += "recall=" + serde::format_double(summary.report.recall) + "\n";
    text += "f1=" + serde::format_double(summary.report.f1) + "\n";
    text += "map_k=" + std::to_string(summary.map_k) + "\n";
    text += "map_fused=" + serde::format_double(summary.map_fused) + "\n";
    text += "map_corrected=" + serde::format_double(summary.map_corrected) + "\n";
    serde::write_file_atomic(art.eval_report(), text);
    return summary;
  });
}

/// Runs every stage in order. Stages with existing outputs are skipped, so
/// this doubles as "resume whatever is missing".
inline EvalSummary run_all(const config::PipelineConfig& cfg, Counters* counters = nullptr) {
  fs::create_directories(fs::path(cfg.output_dir));
  run_ingest(cfg, counters);
  run_recall_copurchase(cfg, counters);
  run_recall_title(cfg, counters);
  run_fuse(cfg, counters);
  run_train(cfg, counters);
  run_rank_correct(cfg, counters);
  return run_eval(cfg, counters);
}

}  // namespace recallforge::pipeline
