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
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <unistd.h>

#include "recallforge/common.hpp"
#include "recallforge/serde.hpp"

// A miniature deterministic MapReduce engine running on local threads.
//
// The contract every job can rely on:
//   * reduce sees ALL values for a key in exactly one invocation,
//   * values within a key arrive sorted by byte order,
//   * stage output is the concatenation of reduce outputs in ascending key
//     order, byte-identical for any worker count.
//
// The shuffle is an external merge sort: map-side buffers sort in memory and
// spill length-prefixed runs to a scratch directory once they exceed their
// share of the memory budget.

namespace recallforge::engine {

struct KeyedRecord {
  std::string key;
  std::string value;

  friend bool operator==(const KeyedRecord&, const KeyedRecord&) = default;
};

inline bool record_less(const KeyedRecord& a, const KeyedRecord& b) {
  if (int c = a.key.compare(b.key); c != 0) return c < 0;
  return a.value < b.value;
}

class Emitter {
 public:
  explicit Emitter(std::function<void(KeyedRecord&&)> sink) : sink_(std::move(sink)) {}

  void emit(std::string key, std::string value) {
    sink_(KeyedRecord{std::move(key), std::move(value)});
  }
  void emit(KeyedRecord&& rec) { sink_(std::move(rec)); }

 private:
  std::function<void(KeyedRecord&&)> sink_;
};

using MapFn = std::function<void(const KeyedRecord&, Emitter&)>;
using ReduceFn = std::function<void(const std::string& key,
                                    const std::vector<std::string>& values,
                                    Emitter&)>;

struct JobStage {
  std::string name;
  MapFn map;
  ReduceFn reduce;
  std::size_t partitions = 0;  // 0 = auto (worker count)
};

struct EngineConfig {
  std::size_t workers = 0;  // 0 = hardware concurrency
  std::size_t memory_budget_bytes = 256ull << 20;
  std::filesystem::path scratch_dir;  // empty = system temp dir

  std::size_t resolved_workers() const {
    if (workers != 0) return workers;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
  }
};

class StageError : public PipelineError {
 public:
  StageError(std::string stage, std::string phase, std::string detail)
      : PipelineError("stage '" + stage + "' " + phase + " failed: " + detail),
        stage_(std::move(stage)),
        phase_(std::move(phase)) {}

  const std::string& stage() const { return stage_; }
  const std::string& phase() const { return phase_; }

 private:
  std::string stage_;
  std::string phase_;
};

namespace detail {

// Internal carriers so worker threads can attach context before the stage
// wraps the failure into a StageError.
struct StageErrorAt : std::exception {
  std::size_t index;
  std::string what_;
  StageErrorAt(std::size_t i, std::string w) : index(i), what_(std::move(w)) {}
  const char* what() const noexcept override { return what_.c_str(); }
};

struct StageErrorKey : std::exception {
  std::string key;
  std::string what_;
  StageErrorKey(std::string k, std::string w) : key(std::move(k)), what_(std::move(w)) {}
  const char* what() const noexcept override { return what_.c_str(); }
};

inline std::filesystem::path scratch_root(const EngineConfig& cfg) {
  return cfg.scratch_dir.empty() ? std::filesystem::temp_directory_path() : cfg.scratch_dir;
}

/// Unique scratch subdirectory, removed on destruction.
class ScratchDir {
 public:
  ScratchDir(const std::filesystem::path& root, std::string_view tag) {
    static std::atomic<std::uint64_t> seq{0};
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    const auto pid = static_cast<std::uint64_t>(::getpid());
    for (int attempt = 0; attempt < 64; ++attempt) {
      auto name = std::string("rf-") + std::string(tag) + "-" + std::to_string(pid) + "-" +
                  std::to_string(seq.fetch_add(1));
      auto candidate = root / name;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw PipelineError("could not create scratch directory under " + root.string());
  }

  ~ScratchDir() {
    if (!path_.empty()) {
      std::error_code ec;
      std::filesystem::remove_all(path_, ec);
    }
  }

  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

class ThreadPool {
 public:
  explicit ThreadPool(std::size_t n) {
    for (std::size_t i = 0; i < std::max<std::size_t>(1, n); ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  template <typename F>
  auto submit(F&& fn) -> std::future<std::invoke_result_t<F>> {
    using R = std::invoke_result_t<F>;
    auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(fn));
    auto fut = task->get_future();
    {
      std::lock_guard<std::mutex> lock(mu_);
      queue_.emplace_back([task] { (*task)(); });
    }
    cv_.notify_one();
    return fut;
  }

 private:
  void worker_loop() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) return;
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      job();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  std::vector<std::thread> threads_;
  bool stopping_ = false;
};

inline void write_record(std::ofstream& out, const KeyedRecord& rec) {
  std::string buf;
  serde::put_u32_le(buf, static_cast<std::uint32_t>(rec.key.size()));
  buf.append(rec.key);
  serde::put_u32_le(buf, static_cast<std::uint32_t>(rec.value.size()));
  buf.append(rec.value);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw PipelineError("spill write failed");
}

/// Sequential reader over one spilled run file.
class RunReader {
 public:
  explicit RunReader(const std::filesystem::path& file) : in_(file, std::ios::binary) {
    if (!in_) throw PipelineError("cannot open spill file " + file.string());
  }

  bool next(KeyedRecord& out) {
    std::uint32_t klen = 0;
    if (!read_u32(klen)) return false;
    out.key.resize(klen);
    if (!read_bytes(out.key.data(), klen)) throw PipelineError("truncated spill file");
    std::uint32_t vlen = 0;
    if (!read_u32(vlen)) throw PipelineError("truncated spill file");
    out.value.resize(vlen);
    if (!read_bytes(out.value.data(), vlen)) throw PipelineError("truncated spill file");
    return true;
  }

 private:
  bool read_u32(std::uint32_t& v) {
    char raw[4];
    if (!read_bytes(raw, 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[i])) << (8 * i);
    }
    return true;
  }

  bool read_bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in_.gcount()) == n;
  }

  std::ifstream in_;
};

class SortedStream {
 public:
  virtual ~SortedStream() = default;
  virtual bool next(KeyedRecord& out) = 0;
};

class VectorStream : public SortedStream {
 public:
  explicit VectorStream(std::vector<KeyedRecord> records) : records_(std::move(records)) {}

  bool next(KeyedRecord& out) override {
    if (pos_ >= records_.size()) return false;
    out = std::move(records_[pos_++]);
    return true;
  }

 private:
  std::vector<KeyedRecord> records_;
  std::size_t pos_ = 0;
};

/// K-way merge over sorted sources. Duplicate (key, value) records are
/// interchangeable, so the heap tie-break does not affect output bytes.
class MergeStream : public SortedStream {
 public:
  explicit MergeStream(std::vector<std::unique_ptr<SortedStream>> sources)
      : sources_(std::move(sources)) {
    for (std::size_t i = 0; i < sources_.size(); ++i) {
      KeyedRecord rec;
      if (sources_[i]->next(rec)) heap_.push(Entry{std::move(rec), i});
    }
  }

  bool next(KeyedRecord& out) override {
    if (heap_.empty()) return false;
    Entry top = heap_.top();
    heap_.pop();
    out = std::move(top.record);
    KeyedRecord rec;
    if (sources_[top.source]->next(rec)) heap_.push(Entry{std::move(rec), top.source});
    return true;
  }

 private:
  struct Entry {
    KeyedRecord record;
    std::size_t source;
  };
  struct Greater {
    bool operator()(const Entry& a, const Entry& b) const {
      return record_less(b.record, a.record);
    }
  };

  std::vector<std::unique_ptr<SortedStream>> sources_;
  std::priority_queue<Entry, std::vector<Entry>, Greater> heap_;
};

/// Collects records, sorting in memory and spilling sorted runs to disk once
/// the buffer exceeds its budget. finish() yields one globally sorted stream.
class SpillSorter {
 public:
  SpillSorter(std::filesystem::path run_dir, std::string run_prefix, std::size_t budget_bytes)
      : run_dir_(std::move(run_dir)),
        run_prefix_(std::move(run_prefix)),
        budget_bytes_(std::max<std::size_t>(budget_bytes, 1)) {}

  void add(KeyedRecord&& rec) {
    buffered_bytes_ += rec.key.size() + rec.value.size() + sizeof(KeyedRecord);
    buffer_.push_back(std::move(rec));
    if (buffered_bytes_ > budget_bytes_) spill();
  }

  std::size_t spill_count() const { return run_files_.size(); }

  std::unique_ptr<SortedStream> finish() {
    std::sort(buffer_.begin(), buffer_.end(), record_less);
    if (run_files_.empty()) {
      return std::make_unique<VectorStream>(std::move(buffer_));
    }
    std::vector<std::unique_ptr<SortedStream>> sources;
    sources.push_back(std::make_unique<VectorStream>(std::move(buffer_)));
    for (const auto& file : run_files_) {
      sources.push_back(std::make_unique<RunStream>(file));
    }
    return std::make_unique<MergeStream>(std::move(sources));
  }

 private:
  class RunStream : public SortedStream {
   public:
    explicit RunStream(const std::filesystem::path& file) : reader_(file) {}
    bool next(KeyedRecord& out) override { return reader_.next(out); }

   private:
    RunReader reader_;
  };

  void spill() {
    std::sort(buffer_.begin(), buffer_.end(), record_less);
    auto file = run_dir_ / (run_prefix_ + "-run" + std::to_string(run_files_.size()) + ".bin");
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot create spill file " + file.string());
    for (const auto& rec : buffer_) write_record(out, rec);
    out.close();
    if (!out) throw PipelineError("spill flush failed for " + file.string());
    run_files_.push_back(file);
    buffer_.clear();
    buffered_bytes_ = 0;
  }

  std::filesystem::path run_dir_;
  std::string run_prefix_;
  std::size_t budget_bytes_;
  std::vector<KeyedRecord> buffer_;
  std::size_t buffered_bytes_ = 0;
  std::vector<std::filesystem::path> run_files_;
};

struct ReduceGroup {
  std::string key;
  std::vector<std::string> values;
};

}  // namespace detail

/// Runs one map/shuffle/reduce stage over the input records.
inline std::vector<KeyedRecord> run_stage(const JobStage& stage,
                                          const std::vector<KeyedRecord>& input,
                                          const EngineConfig& cfg = {},
                                          Counters* counters = nullptr) {
  if (!stage.map || !stage.reduce) {
    throw ValidationError("stage '" + stage.name + "' needs both map and reduce functions");
  }
  const std::size_t workers = cfg.resolved_workers();
  const std::size_t partitions = stage.partitions == 0 ? workers : stage.partitions;
  if (partitions < 1) throw ValidationError("partition count must be >= 1");

  detail::ScratchDir scratch(detail::scratch_root(cfg), stage.name.empty() ? "stage" : stage.name);
  detail::ThreadPool pool(workers);

  // Map phase: fixed-size chunks so run composition (though not the merged
  // stream) is independent of the worker count.
  const std::size_t chunk_target = std::max<std::size_t>(partitions, 1);
  const std::size_t chunk_size =
      input.empty() ? 1 : std::max<std::size_t>(1, (input.size() + chunk_target - 1) / chunk_target);
  const std::size_t chunks = input.empty() ? 0 : (input.size() + chunk_size - 1) / chunk_size;

  std::vector<std::unique_ptr<detail::SpillSorter>> sorters;
  sorters.reserve(chunks);
  const std::size_t sorter_budget = cfg.memory_budget_bytes / std::max<std::size_t>(1, chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    sorters.push_back(std::make_unique<detail::SpillSorter>(
        scratch.path(), "map" + std::to_string(c), sorter_budget));
  }

  std::vector<std::future<void>> map_futures;
  map_futures.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    map_futures.push_back(pool.submit([&, c] {
      const std::size_t begin = c * chunk_size;
      const std::size_t end = std::min(input.size(), begin + chunk_size);
      Emitter emitter([&](KeyedRecord&& rec) { sorters[c]->add(std::move(rec)); });
      for (std::size_t i = begin; i < end; ++i) {
        try {
          stage.map(input[i], emitter);
        } catch (const std::exception& e) {
          throw detail::StageErrorAt{i, e.what()};
        }
      }
    }));
  }
  for (auto& fut : map_futures) {
    try {
      fut.get();
    } catch (const detail::StageErrorAt& e) {
      throw StageError(stage.name, "map", "record #" + std::to_string(e.index) + ": " + e.what_);
    }
  }

  std::uint64_t spills = 0;
  std::vector<std::unique_ptr<detail::SortedStream>> streams;
  streams.reserve(chunks);
  for (auto& sorter : sorters) {
    spills += sorter->spill_count();
    streams.push_back(sorter->finish());
  }
  bump(counters, "engine." + stage.name + ".spilled_runs", spills);

  detail::MergeStream merged(std::move(streams));

  // Reduce phase: groups are formed in ascending key order, dispatched in
  // batches, and their outputs concatenated in submission order.
  constexpr std::size_t kGroupsPerBatch = 64;
  std::vector<std::future<std::vector<KeyedRecord>>> reduce_futures;
  std::vector<detail::ReduceGroup> batch;
  std::uint64_t group_count = 0;

  auto flush_batch = [&] {
    if (batch.empty()) return;
    auto groups = std::make_shared<std::vector<detail::ReduceGroup>>(std::move(batch));
    batch.clear();
    reduce_futures.push_back(pool.submit([groups, &stage]() {
      std::vector<KeyedRecord> out;
      Emitter emitter([&](KeyedRecord&& rec) { out.push_back(std::move(rec)); });
      for (const auto& group : *groups) {
        try {
          stage.reduce(group.key, group.values, emitter);
        } catch (const std::exception& e) {
          throw detail::StageErrorKey{group.key, e.what()};
        }
      }
      return out;
    }));
  };

  KeyedRecord rec;
  detail::ReduceGroup current;
  bool have_group = false;
  while (merged.next(rec)) {
    if (!have_group || rec.key != current.key) {
      if (have_group) {
        ++group_count;
        batch.push_back(std::move(current));
        if (batch.size() >= kGroupsPerBatch) flush_batch();
      }
      current = detail::ReduceGroup{std::move(rec.key), {}};
      have_group = true;
    }
    current.values.push_back(std::move(rec.value));
  }
  if (have_group) {
    ++group_count;
    batch.push_back(std::move(current));
  }
  flush_batch();

  std::vector<KeyedRecord> output;
  for (auto& fut : reduce_futures) {
    try {
      auto part = fut.get();
      output.insert(output.end(), std::make_move_iterator(part.begin()),
                    std::make_move_iterator(part.end()));
    } catch (const detail::StageErrorKey& e) {
      throw StageError(stage.name, "reduce", "key (" + std::to_string(e.key.size()) +
                                                 " bytes): " + e.what_);
    }
  }
  bump(counters, "engine." + stage.name + ".input_records", input.size());
  bump(counters, "engine." + stage.name + ".reduce_groups", group_count);
  bump(counters, "engine." + stage.name + ".output_records", output.size());
  return output;
}

/// Sequential composition of stages; stage i's output feeds stage i+1.
inline std::vector<KeyedRecord> run_pipeline(const std::vector<JobStage>& stages,
                                             std::vector<KeyedRecord> input,
                                             const EngineConfig& cfg = {},
                                             Counters* counters = nullptr) {
  if (stages.empty()) throw ValidationError("pipeline needs at least one stage");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    try {
      input = run_stage(stages[i], input, cfg, counters);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stages[i].name, "stage " + std::to_string(i), e.what());
    }
  }
  return input;
}

/// Value payload of a joined record: left value plus optional right value.
struct JoinedValue {
  std::string left;
  std::optional<std::string> right;

  friend bool operator==(const JoinedValue&, const JoinedValue&) = default;
};

inline std::string encode_join_value(const JoinedValue& jv) {
  std::string out;
  out.push_back(jv.right.has_value() ? '\1' : '\0');
  serde::put_length_prefixed(out, jv.left);
  if (jv.right.has_value()) serde::put_length_prefixed(out, *jv.right);
  return out;
}

inline JoinedValue decode_join_value(std::string_view bytes) {
  serde::ByteReader r(bytes);
  const auto flag = r.bytes(1)[0];
  JoinedValue jv;
  jv.left = std::string(r.length_prefixed());
  if (flag == '\1') jv.right = std::string(r.length_prefixed());
  return jv;
}

/// Left outer join of two keyed streams. Every left record appears once per
/// matching right record, or once with an absent right side; right-only keys
/// are dropped. Output ascends by key, then left value, then right value.
inline std::vector<KeyedRecord> left_outer_join(const std::vector<KeyedRecord>& left,
                                                const std::vector<KeyedRecord>& right,
                                                const EngineConfig& cfg = {},
                                                Counters* counters = nullptr) {
  detail::ScratchDir scratch(detail::scratch_root(cfg), "join");
  const std::size_t budget = std::max<std::size_t>(1, cfg.memory_budget_bytes / 2);

  auto sorted_stream = [&](const std::vector<KeyedRecord>& side, const char* tag) {
    detail::SpillSorter sorter(scratch.path(), tag, budget);
    for (const auto& rec : side) sorter.add(KeyedRecord{rec});
    return sorter.finish();
  };

  auto ls = sorted_stream(left, "join-left");
  auto rs = sorted_stream(right, "join-right");

  std::vector<KeyedRecord> output;
  KeyedRecord lrec, rrec;
  bool have_r = rs->next(rrec);

  std::string current_key;
  std::vector<std::string> left_values;
  std::vector<std::string> right_values;
  bool have_l_group = false;
  std::uint64_t unmatched_left = 0;

  auto emit_group = [&] {
    if (!have_l_group) return;
    if (right_values.empty()) {
      ++unmatched_left;
      for (const auto& lv : left_values) {
        output.push_back(KeyedRecord{current_key, encode_join_value({lv, std::nullopt})});
      }
    } else {
      for (const auto& lv : left_values) {
        for (const auto& rv : right_values) {
          output.push_back(KeyedRecord{current_key, encode_join_value({lv, rv})});
        }
      }
    }
    left_values.clear();
    right_values.clear();
    have_l_group = false;
  };

  while (ls->next(lrec)) {
    if (!have_l_group || lrec.key != current_key) {
      emit_group();
      current_key = lrec.key;
      have_l_group = true;
      // advance right side to the current key
      while (have_r && rrec.key < current_key) have_r = rs->next(rrec);
      while (have_r && rrec.key == current_key) {
        right_values.push_back(std::move(rrec.value));
        have_r = rs->next(rrec);
      }
    }
    left_values.push_back(std::move(lrec.value));
  }
  emit_group();

  bump(counters, "engine.join.left_records", left.size());
  bump(counters, "engine.join.right_records", right.size());
  bump(counters, "engine.join.unmatched_left_keys", unmatched_left);
  bump(counters, "engine.join.output_records", output.size());
  return output;
}

}  // namespace recallforge::engine
