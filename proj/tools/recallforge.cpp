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

// Command-line front end. Every pipeline stage is a subcommand; `pipeline`
// chains them all. Configuration comes from an optional flat key=value file
// plus repeatable --set overrides, which always win. Exit code 0 on
// success, 1 on validation errors (bad config, malformed input), 2 on
// runtime failures. All counters are printed to stdout as key=value lines.

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "recallforge/recallforge.hpp"

namespace rf = recallforge;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, CommonOpts& opts) {
  sub->add_option("-c,--config", opts.config_path, "flat key = value config file");
  sub->add_option("-s,--set", opts.overrides, "override a config key, e.g. --set seed=7")
      ->take_all();
}

rf::config::PipelineConfig make_config(const CommonOpts& opts) {
  rf::config::PipelineConfig cfg;
  if (!opts.config_path.empty()) cfg = rf::config::load_config(opts.config_path);
  for (const auto& ov : opts.overrides) rf::config::apply_override(cfg, ov);
  return cfg;
}

void print_counters(const rf::Counters& counters) {
  for (const auto& [key, value] : counters.snapshot()) {
    std::cout << key << "=" << value << "\n";
  }
}

void print_summary(const rf::pipeline::EvalSummary& summary) {
  std::cout << "precision=" << rf::serde::format_double(summary.report.precision) << "\n";
  std::cout << "recall=" << rf::serde::format_double(summary.report.recall) << "\n";
  std::cout << "f1=" << rf::serde::format_double(summary.report.f1) << "\n";
  std::cout << "map_k=" << summary.map_k << "\n";
  std::cout << "map_fused=" << rf::serde::format_double(summary.map_fused) << "\n";
  std::cout << "map_corrected=" << rf::serde::format_double(summary.map_corrected) << "\n";
}

/// Emits the dataset plus a ready-to-run config file whose tau, feature
/// dimension, and seed match the generator's.
void run_synth(const rf::synth::SynthSpec& spec, const std::string& out_dir,
               rf::Counters* counters) {
  const auto ds = rf::synth::generate_and_write(spec, out_dir);
  const fs::path dir(out_dir);

  rf::config::PipelineConfig cfg;
  cfg.behavior_log = (dir / "behavior_log.tsv").string();
  cfg.item_info = (dir / "item_info.tsv").string();
  cfg.item_features = (dir / "item_features.tsv").string();
  cfg.match_packages = (dir / "match_packages.tsv").string();
  cfg.purchase_history = (dir / "purchase_history.tsv").string();
  cfg.truth_pairs = (dir / "truth_pairs.tsv").string();
  cfg.output_dir = (dir / "out").string();
  cfg.tau_days = spec.tau_days;
  cfg.feature_dim = spec.feature_dim;
  cfg.seed = spec.seed;
  rf::serde::write_file_atomic(dir / "config.cfg", rf::config::render_config(cfg));

  rf::bump(counters, "synth.items", ds.items.size());
  rf::bump(counters, "synth.packages", ds.packages.size());
  rf::bump(counters, "synth.purchases", ds.purchases.size());
  rf::bump(counters, "synth.behaviors", ds.behaviors.size());
  rf::bump(counters, "synth.truth_pairs", ds.truth_pairs.size());
  rf::bump(counters, "synth.lure_pairs", ds.lure_pairs.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"batch collocation recommendation toolkit"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string selected;
  const auto plain = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, common);
    sub->callback([&selected, name] { selected = name; });
    return sub;
  };
  plain("ingest", "validate inputs and write canonical copies");
  plain("recall-copurchase", "count co-purchases and persist scored pairs");
  plain("recall-title", "tf-idf cosine over titles, persist scored pairs");
  plain("fuse", "category-filter and quota-mix the recall sets");
  plain("train", "fit the pairwise ranking model");
  plain("rank-correct", "re-rank the fused lists with fix/rank_fix");
  plain("eval", "score the outputs against ground truth");
  plain("pipeline", "run every stage in order");

  rf::synth::SynthSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a seeded dataset with known structure");
  synth->add_option("-o,--out", synth_out, "output directory")->required();
  synth->add_option("--users", spec.users, "user count");
  synth->add_option("--items", spec.items, "item count");
  synth->add_option("--packages", spec.packages, "match package count");
  synth->add_option("--planted-pairs", spec.planted_pairs, "planted collocation pairs");
  synth->add_option("--lure-fraction", spec.lure_fraction,
                    "fraction of planted pairs that get a high-frequency lure");
  synth->add_option("--tau-days", spec.tau_days, "co-purchase window in days");
  synth->add_option("--feature-dim", spec.feature_dim, "feature vector dimension");
  synth->add_option("--seed", spec.seed, "random seed");
  synth->callback([&selected] { selected = "synth"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  rf::Counters counters;
  try {
    const auto started = [&] { return make_config(common); };
    if (selected == "ingest") {
      rf::pipeline::run_ingest(started(), &counters);
    } else if (selected == "recall-copurchase") {
      rf::pipeline::run_recall_copurchase(started(), &counters);
    } else if (selected == "recall-title") {
      rf::pipeline::run_recall_title(started(), &counters);
    } else if (selected == "fuse") {
      rf::pipeline::run_fuse(started(), &counters);
    } else if (selected == "train") {
      rf::pipeline::run_train(started(), &counters);
    } else if (selected == "rank-correct") {
      rf::pipeline::run_rank_correct(started(), &counters);
    } else if (selected == "eval") {
      print_summary(rf::pipeline::run_eval(started(), &counters));
    } else if (selected == "pipeline") {
      print_summary(rf::pipeline::run_all(started(), &counters));
    } else if (selected == "synth") {
      run_synth(spec, synth_out, &counters);
    }
  } catch (const rf::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    print_counters(counters);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    print_counters(counters);
    return 2;
  }
  print_counters(counters);
  return 0;
}
