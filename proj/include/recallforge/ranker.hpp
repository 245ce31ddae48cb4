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
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "recallforge/common.hpp"
#include "recallforge/datamodel.hpp"
#include "recallforge/recallset.hpp"
#include "recallforge/serde.hpp"

// Matching-probability ranker: logistic regression over absolute feature
// differences of item pairs, trained on match packages against sampled
// negatives, followed by a ranking correction that renormalizes the model's
// probabilities (fix sums to the pair count, rank_fix is mean-centered).

namespace recallforge::ranker {

struct LrHyperparams {
  std::uint64_t max_iterations = 1000;
  double convergence_error = 1e-6;
  double l1_coefficient = 1.0;
  double learning_rate = 0.1;

  friend bool operator==(const LrHyperparams&, const LrHyperparams&) = default;
};

struct RankModel {
  std::vector<double> weights;
  double bias = 0.0;
  LrHyperparams hyperparams;
};

struct PairExample {
  ItemPair pair;
  std::vector<double> feature_diff;
  bool positive = false;
};

/// Componentwise absolute difference; symmetric in its arguments, so pair
/// orientation never matters downstream.
inline std::vector<double> feature_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw PipelineError("feature dimension mismatch: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::abs(a[i] - b[i]);
  return out;
}

inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double predict_proba(const RankModel& model, std::span<const double> diff) {
  if (diff.size() != model.weights.size()) {
    throw PipelineError("feature dimension mismatch: model " +
                        std::to_string(model.weights.size()) + ", input " +
                        std::to_string(diff.size()));
  }
  double z = model.bias;
  for (std::size_t i = 0; i < diff.size(); ++i) z += model.weights[i] * diff[i];
  return sigmoid(z);
}

namespace detail {

// log(1 + exp(-z)) without overflow
inline double log1p_exp_neg(double z) {
  if (z > 0.0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

}  // namespace detail

/// Enumerates within-package pairs as positives (deduplicated across
/// packages) and samples `ratio x positives` uniform non-package pairs as
/// negatives. Items without feature vectors are skipped with a counter.
inline std::vector<PairExample> build_training_set(
    std::span<const data::MatchPackage> packages,
    const std::unordered_map<ItemId, std::vector<double>>& features, double negative_ratio,
    std::uint64_t seed = 42, Counters* counters = nullptr) {
  if (negative_ratio <= 0.0) throw ValidationError("negative ratio must be positive");

  std::set<PairKey> positive_keys;
  for (const auto& pkg : packages) {
    for (std::size_t i = 0; i < pkg.item_ids.size(); ++i) {
      for (std::size_t j = i + 1; j < pkg.item_ids.size(); ++j) {
        positive_keys.insert(make_pair_key(pkg.item_ids[i], pkg.item_ids[j]));
      }
    }
  }

  std::vector<PairExample> examples;
  for (const auto& [hi, lo] : positive_keys) {
    const auto fa = features.find(hi);
    const auto fb = features.find(lo);
    if (fa == features.end() || fb == features.end()) {
      bump(counters, "ranker.pairs_missing_features");
      continue;
    }
    examples.push_back(PairExample{{hi, lo, 0.0}, feature_diff(fa->second, fb->second), true});
  }
  const std::size_t positives = examples.size();
  if (positives == 0) return examples;

  // sample negatives from items that have features
  std::vector<ItemId> pool;
  pool.reserve(features.size());
  for (const auto& [id, vec] : features) pool.push_back(id);
  std::sort(pool.begin(), pool.end());
  if (pool.size() < 2) return examples;

  const auto wanted = static_cast<std::uint64_t>(std::llround(negative_ratio * positives));
  Rng rng(seed);
  std::set<PairKey> negative_keys;
  const std::uint64_t max_attempts = std::max<std::uint64_t>(1000, wanted * 1000);
  std::uint64_t attempts = 0;
  while (negative_keys.size() < wanted && attempts < max_attempts) {
    ++attempts;
    const ItemId a = pool[rng.below(pool.size())];
    const ItemId b = pool[rng.below(pool.size())];
    if (a == b) continue;
    const auto key = make_pair_key(a, b);
    if (positive_keys.contains(key)) continue;
    negative_keys.insert(key);
  }
  if (negative_keys.size() < wanted) {
    bump(counters, "ranker.negative_sampling_shortfall", wanted - negative_keys.size());
  }
  for (const auto& [hi, lo] : negative_keys) {
    examples.push_back(
        PairExample{{hi, lo, 0.0}, feature_diff(features.at(hi), features.at(lo)), false});
  }
  bump(counters, "ranker.positive_examples", positives);
  bump(counters, "ranker.negative_examples", negative_keys.size());
  return examples;
}

namespace detail {

struct Objective {
  double smooth = 0.0;  // sum logistic loss
  double total = 0.0;   // smooth + l1 penalty
};

inline Objective evaluate(std::span<const PairExample> examples, std::span<const double> w,
                          double bias, double l1) {
  Objective obj;
  for (const auto& ex : examples) {
    double z = bias;
    for (std::size_t i = 0; i < w.size(); ++i) z += w[i] * ex.feature_diff[i];
    obj.smooth += log1p_exp_neg(ex.positive ? z : -z);
  }
  double penalty = 0.0;
  for (double wi : w) penalty += std::abs(wi);
  obj.total = obj.smooth + l1 * penalty;
  return obj;
}

inline void gradient(std::span<const PairExample> examples, std::span<const double> w, double bias,
                     std::span<double> grad_w, double& grad_b) {
  std::fill(grad_w.begin(), grad_w.end(), 0.0);
  grad_b = 0.0;
  for (const auto& ex : examples) {
    double z = bias;
    for (std::size_t i = 0; i < w.size(); ++i) z += w[i] * ex.feature_diff[i];
    const double residual = sigmoid(z) - (ex.positive ? 1.0 : 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) grad_w[i] += residual * ex.feature_diff[i];
    grad_b += residual;
  }
}

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace detail

/// Analytic gradient of the full objective (sum logistic loss plus
/// l1 * sign(w)); only valid away from w_i = 0 where the penalty is smooth.
/// Exposed for finite-difference verification.
inline void objective_gradient(std::span<const PairExample> examples, std::span<const double> w,
                               double bias, double l1, std::span<double> grad_w, double& grad_b) {
  detail::gradient(examples, w, bias, grad_w, grad_b);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] > 0.0) {
      grad_w[i] += l1;
    } else if (w[i] < 0.0) {
      grad_w[i] -= l1;
    }
  }
}

inline double objective_value(std::span<const PairExample> examples, std::span<const double> w,
                              double bias, double l1) {
  return detail::evaluate(examples, w, bias, l1).total;
}

/// Proximal-gradient training (soft-thresholding step with backtracking line
/// search). The accepted objective never increases; training stops when the
/// improvement drops below convergence_error or at max_iterations.
inline RankModel train_lr(std::span<const PairExample> examples, LrHyperparams hyper,
                          std::vector<double>* loss_trace = nullptr) {
  if (examples.empty()) throw PipelineError("training set is empty");
  bool has_pos = false, has_neg = false;
  const std::size_t dim = examples.front().feature_diff.size();
  for (const auto& ex : examples) {
    if (ex.feature_diff.size() != dim) {
      throw PipelineError("inconsistent feature dimensions in training set");
    }
    (ex.positive ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    throw PipelineError("training set needs both positive and negative examples");
  }
  if (hyper.learning_rate <= 0.0) throw ValidationError("learning rate must be positive");
  if (hyper.max_iterations < 1) throw ValidationError("max iterations must be >= 1");

  RankModel model;
  model.hyperparams = hyper;
  model.weights.assign(dim, 0.0);
  double& bias = model.bias;

  auto obj = detail::evaluate(examples, model.weights, bias, hyper.l1_coefficient);
  if (loss_trace != nullptr) loss_trace->push_back(obj.total);

  std::vector<double> grad_w(dim, 0.0);
  std::vector<double> next_w(dim, 0.0);
  for (std::uint64_t iter = 0; iter < hyper.max_iterations; ++iter) {
    double grad_b = 0.0;
    detail::gradient(examples, model.weights, bias, grad_w, grad_b);

    double eta = hyper.learning_rate;
    double next_bias = bias;
    detail::Objective next_obj;
    for (int backtrack = 0; backtrack < 60; ++backtrack) {
      for (std::size_t i = 0; i < dim; ++i) {
        next_w[i] = detail::soft_threshold(model.weights[i] - eta * grad_w[i],
                                           eta * hyper.l1_coefficient);
      }
      next_bias = bias - eta * grad_b;
      next_obj = detail::evaluate(examples, next_w, next_bias, hyper.l1_coefficient);

      // sufficient-decrease condition on the smooth part
      double linear = 0.0, quadratic = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double d = next_w[i] - model.weights[i];
        linear += grad_w[i] * d;
        quadratic += d * d;
      }
      const double db = next_bias - bias;
      linear += grad_b * db;
      quadratic += db * db;
      if (next_obj.smooth <= obj.smooth + linear + quadratic / (2.0 * eta) + 1e-12) break;
      eta *= 0.5;
    }

    const double improvement = obj.total - next_obj.total;
    if (next_obj.total <= obj.total) {
      model.weights = next_w;
      bias = next_bias;
      obj = next_obj;
      if (loss_trace != nullptr) loss_trace->push_back(obj.total);
    }
    if (improvement < hyper.convergence_error) break;
  }
  return model;
}

// ---------------------------------------------------------------------------
// Ranking correction.

/// fix(pair) = p(pair) / sum(p) * m over the recall set's m distinct pairs.
/// The fixes always sum to m.
inline std::map<PairKey, double> compute_fix(const std::map<PairKey, double>& probs) {
  double sum = 0.0;
  for (const auto& [key, p] : probs) sum += p;
  if (!(sum > 0.0)) throw PipelineError("fix undefined: probabilities sum to zero");
  const double m = static_cast<double>(probs.size());
  std::map<PairKey, double> fixes;
  for (const auto& [key, p] : probs) fixes[key] = p / sum * m;
  return fixes;
}

/// rank_fix = fix - avg(fix) over the recall set's distinct pairs; each
/// candidate's score becomes its min-max-normalized list score plus the
/// pair's rank_fix, and lists re-sort by (score desc, id asc). A list whose
/// scores are all equal normalizes to 1.0 everywhere.
inline RecallSet apply_rank_correction(const RecallSet& recall,
                                       const std::map<PairKey, double>& fixes) {
  std::set<PairKey> pairs = recall_pair_keys(recall);
  double fix_sum = 0.0;
  for (const auto& key : pairs) {
    const auto it = fixes.find(key);
    if (it == fixes.end()) {
      throw PipelineError("missing fix value for pair (" + std::to_string(key.first) + "," +
                          std::to_string(key.second) + ")");
    }
    fix_sum += it->second;
  }
  const double avg_fix = pairs.empty() ? 0.0 : fix_sum / static_cast<double>(pairs.size());

  RecallSet corrected;
  corrected.source = recall.source;
  corrected.hit_rate = recall.hit_rate;
  for (const auto& [item, list] : recall.entries) {
    if (list.empty()) continue;
    double lo = list.front().score, hi = list.front().score;
    for (const auto& cand : list) {
      lo = std::min(lo, cand.score);
      hi = std::max(hi, cand.score);
    }
    const double range = hi - lo;
    std::vector<Candidate> out;
    out.reserve(list.size());
    for (const auto& cand : list) {
      const double normalized = range > 0.0 ? (cand.score - lo) / range : 1.0;
      const double rank_fix = fixes.at(make_pair_key(item, cand.id)) - avg_fix;
      out.push_back(Candidate{cand.id, normalized + rank_fix});
    }
    std::stable_sort(out.begin(), out.end(), candidate_rank_less);
    corrected.entries[item] = std::move(out);
  }
  return corrected;
}

// ---------------------------------------------------------------------------
// Model persistence: versioned binary blob with trailing checksum.

inline constexpr std::uint32_t kModelMagic = 0x52464c4d;  // "RFLM"
inline constexpr std::uint32_t kModelVersion = 1;

inline void save_model(const RankModel& model, const std::filesystem::path& path) {
  std::string buf;
  serde::put_u32_le(buf, kModelMagic);
  serde::put_u32_le(buf, kModelVersion);
  serde::put_u64_le(buf, model.weights.size());
  for (double w : model.weights) serde::put_f64_le(buf, w);
  serde::put_f64_le(buf, model.bias);
  serde::put_u64_le(buf, model.hyperparams.max_iterations);
  serde::put_f64_le(buf, model.hyperparams.convergence_error);
  serde::put_f64_le(buf, model.hyperparams.l1_coefficient);
  serde::put_f64_le(buf, model.hyperparams.learning_rate);
  serde::put_u64_le(buf, serde::fnv1a64(buf));

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot write " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw PipelineError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline RankModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError("cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 24) throw PipelineError("model file too short: " + path.string());
  const std::string_view body(buf.data(), buf.size() - 8);
  serde::ByteReader tail(std::string_view(buf).substr(buf.size() - 8));
  if (tail.u64_le() != serde::fnv1a64(body)) {
    throw PipelineError("checksum mismatch in " + path.string());
  }
  serde::ByteReader r(body);
  if (r.u32_le() != kModelMagic) throw PipelineError("bad magic in " + path.string());
  if (r.u32_le() != kModelVersion) throw PipelineError("unsupported version in " + path.string());
  RankModel model;
  const auto dim = r.u64_le();
  model.weights.resize(dim);
  for (auto& w : model.weights) w = r.f64_le();
  model.bias = r.f64_le();
  model.hyperparams.max_iterations = r.u64_le();
  model.hyperparams.convergence_error = r.f64_le();
  model.hyperparams.l1_coefficient = r.f64_le();
  model.hyperparams.learning_rate = r.f64_le();
  return model;
}

}  // namespace recallforge::ranker
