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

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "recallforge/common.hpp"
#include "recallforge/fusion.hpp"
#include "recallforge/ranker.hpp"
#include "recallforge/serde.hpp"

// Flat `key = value` configuration with dotted section prefixes, e.g.
//
//   paths.behavior_log = data/behavior_log.tsv
//   fusion.quota.co_purchase = 88500
//
// Lines starting with '#' and blank lines are ignored. Unknown keys are
// rejected up front so typos never silently fall back to defaults.

namespace recallforge::config {

struct PipelineConfig {
  // input/output locations
  std::string behavior_log;
  std::string item_info;
  std::string item_features;
  std::string match_packages;
  std::string purchase_history;
  std::string truth_pairs;
  std::string output_dir = "out";
  std::string scratch;  // empty -> engine picks a temp dir

  // co-purchase recall
  std::uint64_t tau_days = 60;
  std::uint64_t copurchase_top_k = 200;

  // title-similarity recall
  std::uint64_t title_top_k = 200;

  // fusion
  std::vector<std::string> fusion_priority = {"co_purchase", "title_similarity"};
  std::uint64_t quota_co_purchase = 88500;
  std::uint64_t quota_title_similarity = 16500;
  std::string category_rule = "cross_category_only";
  std::vector<std::pair<CatId, CatId>> category_whitelist;
  double min_hit_rate = 0.0;

  // ranker
  ranker::LrHyperparams lr;
  double negative_ratio = 1.0;
  std::uint64_t feature_dim = 0;  // 0 -> inferred from the sidecar

  // evaluation
  std::uint64_t map_k = 200;

  // engine
  std::uint64_t workers = 0;  // 0 -> available parallelism
  std::uint64_t memory_budget_mb = 256;

  // ingestion
  double max_reject_rate = 0.01;

  std::uint64_t seed = 42;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ValidationError("config key '" + std::string(key) + "' expects an unsigned integer, got '" +
                          std::string(value) + "'");
  }
  return out;
}

inline double parse_real(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ValidationError("config key '" + std::string(key) + "' expects a real number, got '" +
                          std::string(value) + "'");
  }
  return out;
}

inline RecallSource parse_recall_source(const std::string& name) {
  const auto src = recall_source_from_string(name);
  if (!src.has_value() || *src == RecallSource::fused) {
    throw ValidationError("'" + name + "' is not a recall source");
  }
  return *src;
}

inline std::vector<std::string> split_csv(std::string_view value) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= value.size()) {
    const std::size_t comma = value.find(',', start);
    const std::size_t end = comma == std::string_view::npos ? value.size() : comma;
    const auto piece = trim(value.substr(start, end - start));
    if (!piece.empty()) parts.emplace_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return parts;
}

}  // namespace detail

/// Applies one key=value assignment. Throws ValidationError on unknown keys
/// and out-of-range values. Used for both config files and CLI overrides.
inline void apply_kv(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  const std::string k(detail::trim(key));
  const std::string v(detail::trim(value));

  if (k == "paths.behavior_log") {
    cfg.behavior_log = v;
  } else if (k == "paths.item_info") {
    cfg.item_info = v;
  } else if (k == "paths.item_features") {
    cfg.item_features = v;
  } else if (k == "paths.match_packages") {
    cfg.match_packages = v;
  } else if (k == "paths.purchase_history") {
    cfg.purchase_history = v;
  } else if (k == "paths.truth_pairs") {
    cfg.truth_pairs = v;
  } else if (k == "paths.output_dir") {
    cfg.output_dir = v;
  } else if (k == "paths.scratch") {
    cfg.scratch = v;
  } else if (k == "copurchase.tau_days") {
    cfg.tau_days = detail::parse_u64(k, v);
    if (cfg.tau_days < 1) throw ValidationError("copurchase.tau_days must be >= 1");
  } else if (k == "copurchase.top_k") {
    cfg.copurchase_top_k = detail::parse_u64(k, v);
    if (cfg.copurchase_top_k < 1) throw ValidationError("copurchase.top_k must be >= 1");
  } else if (k == "title.top_k") {
    cfg.title_top_k = detail::parse_u64(k, v);
    if (cfg.title_top_k < 1) throw ValidationError("title.top_k must be >= 1");
  } else if (k == "fusion.priority") {
    cfg.fusion_priority = detail::split_csv(v);
    if (cfg.fusion_priority.empty()) throw ValidationError("fusion.priority must not be empty");
    for (const auto& name : cfg.fusion_priority) detail::parse_recall_source(name);
  } else if (k == "fusion.quota.co_purchase") {
    cfg.quota_co_purchase = detail::parse_u64(k, v);
  } else if (k == "fusion.quota.title_similarity") {
    cfg.quota_title_similarity = detail::parse_u64(k, v);
  } else if (k == "fusion.category_rule") {
    if (v != "cross_category_only" && v != "allow_all" && v != "whitelist") {
      throw ValidationError(
          "fusion.category_rule must be cross_category_only, allow_all, or whitelist");
    }
    cfg.category_rule = v;
  } else if (k == "fusion.category_whitelist") {
    cfg.category_whitelist.clear();
    for (const auto& entry : detail::split_csv(v)) {
      const std::size_t colon = entry.find(':');
      if (colon == std::string::npos) {
        throw ValidationError("fusion.category_whitelist entries are cat:cat, got '" + entry + "'");
      }
      cfg.category_whitelist.emplace_back(detail::parse_u64(k, entry.substr(0, colon)),
                                          detail::parse_u64(k, entry.substr(colon + 1)));
    }
  } else if (k == "fusion.min_hit_rate") {
    cfg.min_hit_rate = detail::parse_real(k, v);
    if (cfg.min_hit_rate < 0.0 || cfg.min_hit_rate > 1.0) {
      throw ValidationError("fusion.min_hit_rate must be in [0,1]");
    }
  } else if (k == "ranker.max_iterations") {
    cfg.lr.max_iterations = detail::parse_u64(k, v);
    if (cfg.lr.max_iterations < 1) throw ValidationError("ranker.max_iterations must be >= 1");
  } else if (k == "ranker.convergence_error") {
    cfg.lr.convergence_error = detail::parse_real(k, v);
    if (cfg.lr.convergence_error < 0.0) {
      throw ValidationError("ranker.convergence_error must be >= 0");
    }
  } else if (k == "ranker.l1_coefficient") {
    cfg.lr.l1_coefficient = detail::parse_real(k, v);
    if (cfg.lr.l1_coefficient < 0.0) throw ValidationError("ranker.l1_coefficient must be >= 0");
  } else if (k == "ranker.learning_rate") {
    cfg.lr.learning_rate = detail::parse_real(k, v);
    if (cfg.lr.learning_rate <= 0.0) throw ValidationError("ranker.learning_rate must be > 0");
  } else if (k == "ranker.negative_ratio") {
    cfg.negative_ratio = detail::parse_real(k, v);
    if (cfg.negative_ratio <= 0.0) throw ValidationError("ranker.negative_ratio must be > 0");
  } else if (k == "ranker.feature_dim") {
    cfg.feature_dim = detail::parse_u64(k, v);
  } else if (k == "eval.map_k") {
    cfg.map_k = detail::parse_u64(k, v);
    if (cfg.map_k < 1) throw ValidationError("eval.map_k must be >= 1");
  } else if (k == "engine.workers") {
    cfg.workers = detail::parse_u64(k, v);
  } else if (k == "engine.memory_budget_mb") {
    cfg.memory_budget_mb = detail::parse_u64(k, v);
    if (cfg.memory_budget_mb < 1) throw ValidationError("engine.memory_budget_mb must be >= 1");
  } else if (k == "ingest.max_reject_rate") {
    cfg.max_reject_rate = detail::parse_real(k, v);
    if (cfg.max_reject_rate < 0.0 || cfg.max_reject_rate > 1.0) {
      throw ValidationError("ingest.max_reject_rate must be in [0,1]");
    }
  } else if (k == "seed") {
    cfg.seed = detail::parse_u64(k, v);
  } else {
    throw ValidationError("unknown config key '" + k + "'");
  }
}

/// Parses config text; each non-comment line must be `key = value`.
inline PipelineConfig parse_config_text(std::string_view text) {
  PipelineConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    const auto line = detail::trim(text.substr(start, end - start));
    ++line_no;
    if (!line.empty() && line.front() != '#') {
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ValidationError("config line " + std::to_string(line_no) +
                              ": expected 'key = value'");
      }
      apply_kv(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

/// `--set key=value` style override.
inline void apply_override(PipelineConfig& cfg, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ValidationError("override must be key=value, got '" + std::string(assignment) + "'");
  }
  apply_kv(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

/// Scratch directory resolution: RECALL_FORGE_SCRATCH env var wins over the
/// config value; empty means "let the engine create a temp dir".
inline std::string resolved_scratch(const PipelineConfig& cfg) {
  if (const char* env = std::getenv("RECALL_FORGE_SCRATCH"); env != nullptr && *env != '\0') {
    return env;
  }
  return cfg.scratch;
}

inline fusion::FusionPolicy fusion_policy(const PipelineConfig& cfg) {
  fusion::FusionPolicy policy;
  for (const auto& name : cfg.fusion_priority) {
    const auto source = detail::parse_recall_source(name);
    const std::uint64_t quota =
        source == RecallSource::co_purchase ? cfg.quota_co_purchase : cfg.quota_title_similarity;
    policy.quotas.push_back(fusion::FusionQuota{source, quota});
  }
  if (cfg.category_rule == "cross_category_only") {
    policy.category_rule.kind = fusion::CategoryRuleKind::cross_category_only;
  } else if (cfg.category_rule == "allow_all") {
    policy.category_rule.kind = fusion::CategoryRuleKind::allow_all;
  } else {
    policy.category_rule.kind = fusion::CategoryRuleKind::whitelist;
    for (const auto& [a, b] : cfg.category_whitelist) {
      policy.category_rule.whitelist.insert(fusion::category_key(a, b));
    }
  }
  policy.min_hit_rate = cfg.min_hit_rate;
  fusion::validate(policy);
  return policy;
}

/// Round-trips through parse_config_text; used to drop a manifest of the
/// effective configuration next to pipeline outputs.
inline std::string render_config(const PipelineConfig& cfg) {
  std::ostringstream out;
  const auto put = [&out](std::string_view key, const std::string& value) {
    if (!value.empty()) out << key << " = " << value << "\n";
  };
  put("paths.behavior_log", cfg.behavior_log);
  put("paths.item_info", cfg.item_info);
  put("paths.item_features", cfg.item_features);
  put("paths.match_packages", cfg.match_packages);
  put("paths.purchase_history", cfg.purchase_history);
  put("paths.truth_pairs", cfg.truth_pairs);
  put("paths.output_dir", cfg.output_dir);
  put("paths.scratch", cfg.scratch);
  out << "copurchase.tau_days = " << cfg.tau_days << "\n";
  out << "copurchase.top_k = " << cfg.copurchase_top_k << "\n";
  out << "title.top_k = " << cfg.title_top_k << "\n";
  out << "fusion.priority = ";
  for (std::size_t i = 0; i < cfg.fusion_priority.size(); ++i) {
    if (i > 0) out << ",";
    out << cfg.fusion_priority[i];
  }
  out << "\n";
  out << "fusion.quota.co_purchase = " << cfg.quota_co_purchase << "\n";
  out << "fusion.quota.title_similarity = " << cfg.quota_title_similarity << "\n";
  out << "fusion.category_rule = " << cfg.category_rule << "\n";
  if (!cfg.category_whitelist.empty()) {
    out << "fusion.category_whitelist = ";
    for (std::size_t i = 0; i < cfg.category_whitelist.size(); ++i) {
      if (i > 0) out << ",";
      out << cfg.category_whitelist[i].first << ":" << cfg.category_whitelist[i].second;
    }
    out << "\n";
  }
  out << "fusion.min_hit_rate = " << serde::format_double(cfg.min_hit_rate) << "\n";
  out << "ranker.max_iterations = " << cfg.lr.max_iterations << "\n";
  out << "ranker.convergence_error = " << serde::format_double(cfg.lr.convergence_error) << "\n";
  out << "ranker.l1_coefficient = " << serde::format_double(cfg.lr.l1_coefficient) << "\n";
  out << "ranker.learning_rate = " << serde::format_double(cfg.lr.learning_rate) << "\n";
  out << "ranker.negative_ratio = " << serde::format_double(cfg.negative_ratio) << "\n";
  out << "ranker.feature_dim = " << cfg.feature_dim << "\n";
  out << "eval.map_k = " << cfg.map_k << "\n";
  out << "engine.workers = " << cfg.workers << "\n";
  out << "engine.memory_budget_mb = " << cfg.memory_budget_mb << "\n";
  out << "ingest.max_reject_rate = " << serde::format_double(cfg.max_reject_rate) << "\n";
  out << "seed = " << cfg.seed << "\n";
  return out.str();
}

}  // namespace recallforge::config
