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

#include "recallforge/engine.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "test_util.hpp"

namespace e = recallforge::engine;
using recallforge::Counters;
using recallforge::ValidationError;

namespace {

e::JobStage identity_stage(std::string name = "identity") {
  e::JobStage stage;
  stage.name = std::move(name);
  stage.map = [](const e::KeyedRecord& rec, e::Emitter& out) { out.emit(rec.key, rec.value); };
  stage.reduce = [](const std::string& key, const std::vector<std::string>& values,
                    e::Emitter& out) {
    for (const auto& v : values) out.emit(key, v);
  };
  return stage;
}

/// Reduce that concatenates its (already sorted) values with '|'.
e::JobStage concat_stage(std::string name = "concat") {
  e::JobStage stage;
  stage.name = std::move(name);
  stage.map = [](const e::KeyedRecord& rec, e::Emitter& out) { out.emit(rec.key, rec.value); };
  stage.reduce = [](const std::string& key, const std::vector<std::string>& values,
                    e::Emitter& out) {
    std::string joined;
    for (const auto& v : values) {
      if (!joined.empty()) joined += '|';
      joined += v;
    }
    out.emit(key, joined);
  };
  return stage;
}

std::vector<e::KeyedRecord> random_records(std::size_t n, std::uint32_t seed,
                                           std::size_t key_space = 50) {
  std::mt19937 gen(seed);
  std::vector<e::KeyedRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char key[16];
    std::snprintf(key, sizeof(key), "k%03zu", static_cast<std::size_t>(gen() % key_space));
    std::string value(1 + gen() % 8, 'x');
    for (auto& c : value) c = static_cast<char>('a' + gen() % 26);
    records.push_back({key, value});
  }
  return records;
}

/// In-memory reference: group by key, sort values, apply reduce per key in
/// ascending key order.
std::vector<e::KeyedRecord> oracle_group_reduce(const std::vector<e::KeyedRecord>& input,
                                                const e::ReduceFn& reduce) {
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& rec : input) groups[rec.key].push_back(rec.value);
  std::vector<e::KeyedRecord> output;
  e::Emitter out([&output](e::KeyedRecord&& rec) { output.push_back(std::move(rec)); });
  for (auto& [key, values] : groups) {
    std::sort(values.begin(), values.end());
    reduce(key, values, out);
  }
  return output;
}

}  // namespace

TEST(EngineTest, ReduceSeesSortedValuesInOneInvocation) {
  std::vector<e::KeyedRecord> input = {{"k", "b"}, {"k", "a"}, {"k", "c"}, {"k", "a"}};
  std::mutex mu;
  int invocations = 0;
  e::JobStage stage;
  stage.name = "probe";
  stage.map = [](const e::KeyedRecord& rec, e::Emitter& out) { out.emit(rec.key, rec.value); };
  stage.reduce = [&](const std::string& key, const std::vector<std::string>& values,
                     e::Emitter& out) {
    std::lock_guard<std::mutex> lock(mu);
    ++invocations;
    EXPECT_EQ(key, "k");
    EXPECT_EQ(values, (std::vector<std::string>{"a", "a", "b", "c"}));
    out.emit(key, "done");
  };
  const auto output = e::run_stage(stage, input);
  EXPECT_EQ(invocations, 1);
  ASSERT_EQ(output.size(), 1u);
  EXPECT_EQ(output[0].key, "k");
}

TEST(EngineTest, OutputKeysAscending) {
  std::vector<e::KeyedRecord> input = {{"zeta", "1"}, {"alpha", "2"}, {"mid", "3"}, {"beta", "4"}};
  const auto output = e::run_stage(concat_stage(), input);
  ASSERT_EQ(output.size(), 4u);
  for (std::size_t i = 1; i < output.size(); ++i) {
    EXPECT_LT(output[i - 1].key, output[i].key);
  }
}

TEST(EngineTest, MatchesInMemoryOracleOnRandomInput) {
  for (std::uint32_t seed : {1u, 2u, 3u}) {
    const auto input = random_records(2000, seed);
    const auto stage = concat_stage();
    const auto expected = oracle_group_reduce(input, stage.reduce);
    const auto actual = e::run_stage(stage, input);
    EXPECT_EQ(actual, expected) << "seed " << seed;
  }
}

TEST(EngineTest, OutputIdenticalAcrossWorkerCounts) {
  const auto input = random_records(3000, 7);
  const auto stage = concat_stage();
  std::vector<std::vector<e::KeyedRecord>> runs;
  for (std::size_t workers : {1u, 2u, 8u}) {
    e::EngineConfig cfg;
    cfg.workers = workers;
    runs.push_back(e::run_stage(stage, input, cfg));
  }
  EXPECT_EQ(runs[0], runs[1]);
  EXPECT_EQ(runs[0], runs[2]);
}

TEST(EngineTest, SpillingPreservesOutput) {
  rftest::TempDir scratch;
  const auto input = random_records(4000, 11);
  const auto stage = concat_stage("spilly");

  e::EngineConfig tiny;
  tiny.memory_budget_bytes = 2048;  // forces many spill runs
  tiny.scratch_dir = scratch.path();
  Counters counters;
  const auto spilled = e::run_stage(stage, input, tiny, &counters);
  EXPECT_GT(counters.get("engine.spilly.spilled_runs"), 0u);

  const auto in_memory = e::run_stage(stage, input);
  EXPECT_EQ(spilled, in_memory);
}

TEST(EngineTest, ScratchDirectoryLeftEmpty) {
  rftest::TempDir scratch;
  e::EngineConfig cfg;
  cfg.memory_budget_bytes = 1024;
  cfg.scratch_dir = scratch.path();
  e::run_stage(concat_stage(), random_records(1000, 3), cfg);
  EXPECT_TRUE(std::filesystem::is_empty(scratch.path()));
}

TEST(EngineTest, MapCanRekeyRecords) {
  // map swaps key and value; grouping must follow the new key
  e::JobStage stage;
  stage.name = "swap";
  stage.map = [](const e::KeyedRecord& rec, e::Emitter& out) { out.emit(rec.value, rec.key); };
  stage.reduce = [](const std::string& key, const std::vector<std::string>& values,
                    e::Emitter& out) {
    out.emit(key, std::to_string(values.size()));
  };
  std::vector<e::KeyedRecord> input = {{"a", "v"}, {"b", "v"}, {"c", "w"}};
  const auto output = e::run_stage(stage, input);
  ASSERT_EQ(output.size(), 2u);
  EXPECT_EQ(output[0], (e::KeyedRecord{"v", "2"}));
  EXPECT_EQ(output[1], (e::KeyedRecord{"w", "1"}));
}

TEST(EngineTest, EmptyInputYieldsEmptyOutput) {
  const auto output = e::run_stage(concat_stage(), {});
  EXPECT_TRUE(output.empty());
}

TEST(EngineTest, CountersTrackRecords) {
  Counters counters;
  const auto input = random_records(500, 5);
  e::run_stage(concat_stage("counted"), input, {}, &counters);
  EXPECT_EQ(counters.get("engine.counted.input_records"), 500u);
  EXPECT_GT(counters.get("engine.counted.reduce_groups"), 0u);
  EXPECT_EQ(counters.get("engine.counted.output_records"),
            counters.get("engine.counted.reduce_groups"));
}

TEST(EngineTest, MissingFunctionsRejected) {
  e::JobStage stage;
  stage.name = "broken";
  EXPECT_THROW(e::run_stage(stage, {}), ValidationError);
}

TEST(EngineTest, MapErrorCarriesStageContext) {
  e::JobStage stage = concat_stage("maperr");
  stage.map = [](const e::KeyedRecord& rec, e::Emitter&) {
    if (rec.key == "bad") throw std::runtime_error("boom");
  };
  std::vector<e::KeyedRecord> input = {{"ok", "1"}, {"bad", "2"}};
  try {
    e::run_stage(stage, input);
    FAIL() << "expected StageError";
  } catch (const e::StageError& err) {
    EXPECT_NE(std::string(err.what()).find("maperr"), std::string::npos);
    EXPECT_NE(std::string(err.what()).find("boom"), std::string::npos);
  }
}

TEST(EngineTest, ReduceErrorCarriesStageContext) {
  e::JobStage stage = concat_stage("rederr");
  stage.reduce = [](const std::string& key, const std::vector<std::string>&, e::Emitter&) {
    if (key == "bad") throw std::runtime_error("kaput");
  };
  std::vector<e::KeyedRecord> input = {{"ok", "1"}, {"bad", "2"}};
  try {
    e::run_stage(stage, input);
    FAIL() << "expected StageError";
  } catch (const e::StageError& err) {
    EXPECT_NE(std::string(err.what()).find("rederr"), std::string::npos);
    EXPECT_NE(std::string(err.what()).find("kaput"), std::string::npos);
  }
}

TEST(EngineTest, PipelineComposesStages) {
  // stage 1: re-key each record by its value; stage 2: count per key
  e::JobStage rekey;
  rekey.name = "rekey";
  rekey.map = [](const e::KeyedRecord& rec, e::Emitter& out) { out.emit(rec.value, rec.key); };
  rekey.reduce = [](const std::string& key, const std::vector<std::string>& values,
                    e::Emitter& out) {
    for (const auto& v : values) out.emit(key, v);
  };
  e::JobStage count;
  count.name = "count";
  count.map = [](const e::KeyedRecord& rec, e::Emitter& out) { out.emit(rec.key, rec.value); };
  count.reduce = [](const std::string& key, const std::vector<std::string>& values,
                    e::Emitter& out) {
    out.emit(key, std::to_string(values.size()));
  };
  std::vector<e::KeyedRecord> input = {{"u1", "x"}, {"u2", "x"}, {"u3", "y"}};
  const auto output = e::run_pipeline({rekey, count}, input);
  ASSERT_EQ(output.size(), 2u);
  EXPECT_EQ(output[0], (e::KeyedRecord{"x", "2"}));
  EXPECT_EQ(output[1], (e::KeyedRecord{"y", "1"}));
  EXPECT_THROW(e::run_pipeline({}, input), ValidationError);
}

TEST(EngineTest, JoinValueRoundTrip) {
  const e::JoinedValue with_right{"left bytes", std::string("right bytes")};
  EXPECT_EQ(e::decode_join_value(e::encode_join_value(with_right)), with_right);
  const e::JoinedValue without_right{"only left", std::nullopt};
  EXPECT_EQ(e::decode_join_value(e::encode_join_value(without_right)), without_right);
}

TEST(EngineTest, LeftOuterJoinPairsAndPreservesUnmatchedLeft) {
  std::vector<e::KeyedRecord> left = {{"a", "l1"}, {"b", "lb"}, {"a", "l2"}};
  std::vector<e::KeyedRecord> right = {{"a", "r1"}, {"c", "rc"}};
  Counters counters;
  const auto joined = e::left_outer_join(left, right, {}, &counters);

  ASSERT_EQ(joined.size(), 3u);
  EXPECT_EQ(joined[0].key, "a");
  EXPECT_EQ(joined[1].key, "a");
  EXPECT_EQ(joined[2].key, "b");
  EXPECT_EQ(e::decode_join_value(joined[0].value), (e::JoinedValue{"l1", std::string("r1")}));
  EXPECT_EQ(e::decode_join_value(joined[1].value), (e::JoinedValue{"l2", std::string("r1")}));
  EXPECT_EQ(e::decode_join_value(joined[2].value), (e::JoinedValue{"lb", std::nullopt}));
  EXPECT_EQ(counters.get("engine.join.unmatched_left_keys"), 1u);
}

TEST(EngineTest, LeftOuterJoinCrossProductPerKey) {
  std::vector<e::KeyedRecord> left = {{"k", "l1"}, {"k", "l2"}};
  std::vector<e::KeyedRecord> right = {{"k", "r1"}, {"k", "r2"}, {"k", "r3"}};
  const auto joined = e::left_outer_join(left, right);
  EXPECT_EQ(joined.size(), 6u);
  // every (left, right) combination appears exactly once
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& rec : joined) {
    const auto jv = e::decode_join_value(rec.value);
    ASSERT_TRUE(jv.right.has_value());
    EXPECT_TRUE(seen.emplace(jv.left, *jv.right).second);
  }
  EXPECT_EQ(seen.size(), 6u);
}

TEST(EngineTest, LeftOuterJoinDeterministicAndSpillSafe) {
  std::vector<e::KeyedRecord> left = random_records(2000, 21, 30);
  std::vector<e::KeyedRecord> right = random_records(1500, 22, 30);
  const auto base = e::left_outer_join(left, right);

  e::EngineConfig tiny;
  tiny.memory_budget_bytes = 2048;
  rftest::TempDir scratch;
  tiny.scratch_dir = scratch.path();
  EXPECT_EQ(e::left_outer_join(left, right, tiny), base);
}
