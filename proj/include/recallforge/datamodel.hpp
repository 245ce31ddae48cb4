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
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "recallforge/common.hpp"
#include "recallforge/serde.hpp"

// Domain records and ingestion for the four tab-separated input tables
// (behavior log, item info, match packages, purchase history) plus the
// feature sidecar and the binary item-pair artifact format.
//
// All inputs are UTF-8, tab-delimited, no header. Parsers are streaming:
// one record at a time, rejected lines counted with their line numbers, and
// a reject rate above the configured threshold raised as a hard error when
// the stream is drained.

namespace recallforge::data {

enum class BehaviorType : int { browse = 1, favorite = 2, add_to_cart = 3, buy = 4 };

struct BehaviorRecord {
  UserId user_id = 0;
  ItemId item_id = 0;
  BehaviorType behavior = BehaviorType::browse;
  std::optional<std::string> geohash;
  CatId item_category = 0;
  std::int64_t time_minutes = 0;  // minutes since 1970-01-01 00:00

  friend bool operator==(const BehaviorRecord&, const BehaviorRecord&) = default;
};

struct ItemInfo {
  ItemId item_id = 0;
  CatId cat_id = 0;
  std::vector<TermId> terms;
  std::optional<std::vector<double>> features;

  friend bool operator==(const ItemInfo&, const ItemInfo&) = default;
};

struct MatchPackage {
  std::uint64_t coll_id = 0;
  std::vector<ItemId> item_ids;  // length >= 2, no duplicates

  friend bool operator==(const MatchPackage&, const MatchPackage&) = default;
};

struct PurchaseRecord {
  UserId user_id = 0;
  ItemId item_id = 0;
  std::int64_t create_at_day = 0;  // days since 1970-01-01

  friend bool operator==(const PurchaseRecord&, const PurchaseRecord&) = default;
};

// ---------------------------------------------------------------------------
// Calendar arithmetic (proleptic Gregorian), kept explicit so date handling
// is identical everywhere.

inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

inline CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return CivilDate{y + (m <= 2), m, d};
}

namespace detail {

inline bool parse_fixed_uint(std::string_view s, std::uint64_t& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace detail

/// Parses "YYYY-MM-DD" into days since epoch; nullopt on malformed input.
inline std::optional<std::int64_t> parse_date_days(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  const auto ys = s.substr(0, 4), ms = s.substr(5, 2), ds = s.substr(8, 2);
  if (!detail::all_digits(ys) || !detail::all_digits(ms) || !detail::all_digits(ds)) {
    return std::nullopt;
  }
  std::uint64_t y, m, d;
  detail::parse_fixed_uint(ys, y);
  detail::parse_fixed_uint(ms, m);
  detail::parse_fixed_uint(ds, d);
  if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  const auto days = days_from_civil(static_cast<std::int64_t>(y), static_cast<unsigned>(m),
                                    static_cast<unsigned>(d));
  // Round-trip so nonexistent dates (e.g. Feb 30) don't silently roll over.
  const auto back = civil_from_days(days);
  if (back.year != static_cast<std::int64_t>(y) || back.month != m || back.day != d) {
    return std::nullopt;
  }
  return days;
}

/// Parses "YYYY-MM-DD HH" into minutes since epoch.
inline std::optional<std::int64_t> parse_hour_minutes(std::string_view s) {
  if (s.size() != 13 || s[10] != ' ') return std::nullopt;
  const auto date = parse_date_days(s.substr(0, 10));
  if (!date) return std::nullopt;
  const auto hs = s.substr(11, 2);
  if (!detail::all_digits(hs)) return std::nullopt;
  std::uint64_t h;
  detail::parse_fixed_uint(hs, h);
  if (h > 23) return std::nullopt;
  return *date * 1440 + static_cast<std::int64_t>(h) * 60;
}

inline std::string format_date_days(std::int64_t days) {
  const auto c = civil_from_days(days);
  char buf[32];  // sized for the full i64 year range
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u", static_cast<long long>(c.year), c.month,
                c.day);
  return buf;
}

inline std::string format_hour_minutes(std::int64_t minutes) {
  const std::int64_t days = minutes >= 0 ? minutes / 1440 : (minutes - 1439) / 1440;
  const auto hour = static_cast<unsigned>((minutes - days * 1440) / 60);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%s %02u", format_date_days(days).c_str(), hour);
  return buf;
}

// ---------------------------------------------------------------------------
// Streaming TSV ingestion.

struct ParseStats {
  std::uint64_t lines = 0;
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  std::vector<std::uint64_t> rejected_lines;  // 1-based, capped

  static constexpr std::size_t kMaxReportedRejects = 100;

  void note_reject(std::uint64_t line_number) {
    ++rejected;
    if (rejected_lines.size() < kMaxReportedRejects) rejected_lines.push_back(line_number);
  }
};

struct ParseOptions {
  double max_reject_rate = 0.01;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

}  // namespace detail

/// Line-oriented reader driving a per-table parse function. next() skips and
/// counts rejected lines; finish() (also run when the stream drains) enforces
/// the reject-rate threshold.
template <typename Record>
class TsvReader {
 public:
  using ParseFn = std::function<std::optional<Record>(const std::vector<std::string_view>&)>;

  TsvReader(const std::filesystem::path& path, ParseFn parse, ParseOptions options = {})
      : path_(path), in_(path), parse_(std::move(parse)), options_(options) {
    if (!in_) throw ValidationError("cannot open input file " + path.string());
  }

  std::optional<Record> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++stats_.lines;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) {
        stats_.note_reject(stats_.lines);
        continue;
      }
      auto rec = parse_(detail::split_tabs(line));
      if (!rec) {
        stats_.note_reject(stats_.lines);
        continue;
      }
      ++stats_.accepted;
      return rec;
    }
    finish();
    return std::nullopt;
  }

  /// Throws ValidationError when the reject rate exceeds the threshold.
  void finish() {
    if (finished_) return;
    finished_ = true;
    if (stats_.lines == 0) return;
    const double rate = static_cast<double>(stats_.rejected) / static_cast<double>(stats_.lines);
    if (rate > options_.max_reject_rate) {
      std::string detail = path_.string() + ": " + std::to_string(stats_.rejected) + "/" +
                           std::to_string(stats_.lines) + " lines rejected (first bad lines:";
      for (std::size_t i = 0; i < std::min<std::size_t>(5, stats_.rejected_lines.size()); ++i) {
        detail += " " + std::to_string(stats_.rejected_lines[i]);
      }
      throw ValidationError("reject rate above threshold for " + detail + ")");
    }
  }

  /// Drains the stream and applies the reject-rate check.
  std::vector<Record> read_all() {
    std::vector<Record> out;
    while (auto rec = next()) out.push_back(std::move(*rec));
    finish();
    return out;
  }

  const ParseStats& stats() const { return stats_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  ParseFn parse_;
  ParseOptions options_;
  ParseStats stats_;
  bool finished_ = false;
};

// Column layout: user_id, item_id, behavior_type, geohash (may be empty),
// item_category, time "YYYY-MM-DD HH".
inline std::optional<BehaviorRecord> parse_behavior_fields(
    const std::vector<std::string_view>& f) {
  if (f.size() != 6) return std::nullopt;
  BehaviorRecord rec;
  std::uint64_t behavior = 0;
  if (!detail::parse_fixed_uint(f[0], rec.user_id)) return std::nullopt;
  if (!detail::parse_fixed_uint(f[1], rec.item_id)) return std::nullopt;
  if (!detail::parse_fixed_uint(f[2], behavior)) return std::nullopt;
  if (behavior < 1 || behavior > 4) return std::nullopt;
  rec.behavior = static_cast<BehaviorType>(behavior);
  if (!f[3].empty()) rec.geohash = std::string(f[3]);
  if (!detail::parse_fixed_uint(f[4], rec.item_category)) return std::nullopt;
  const auto t = parse_hour_minutes(f[5]);
  if (!t) return std::nullopt;
  rec.time_minutes = *t;
  return rec;
}

// Column layout: item_id, cat_id, comma-separated term ids (may be empty).
inline std::optional<ItemInfo> parse_item_fields(const std::vector<std::string_view>& f) {
  if (f.size() != 3) return std::nullopt;
  ItemInfo rec;
  if (!detail::parse_fixed_uint(f[0], rec.item_id)) return std::nullopt;
  if (!detail::parse_fixed_uint(f[1], rec.cat_id)) return std::nullopt;
  std::string_view terms = f[2];
  while (!terms.empty()) {
    const auto comma = terms.find(',');
    const auto field = terms.substr(0, comma);
    TermId term = 0;
    if (!detail::parse_fixed_uint(field, term)) return std::nullopt;
    rec.terms.push_back(term);
    if (comma == std::string_view::npos) break;
    terms.remove_prefix(comma + 1);
  }
  return rec;
}

// Column layout: coll_id, comma-separated item ids (>= 2, distinct).
inline std::optional<MatchPackage> parse_package_fields(const std::vector<std::string_view>& f) {
  if (f.size() != 2) return std::nullopt;
  MatchPackage rec;
  if (!detail::parse_fixed_uint(f[0], rec.coll_id)) return std::nullopt;
  std::string_view ids = f[1];
  while (!ids.empty()) {
    const auto comma = ids.find(',');
    ItemId id = 0;
    if (!detail::parse_fixed_uint(ids.substr(0, comma), id)) return std::nullopt;
    rec.item_ids.push_back(id);
    if (comma == std::string_view::npos) break;
    ids.remove_prefix(comma + 1);
  }
  if (rec.item_ids.size() < 2) return std::nullopt;
  std::set<ItemId> distinct(rec.item_ids.begin(), rec.item_ids.end());
  if (distinct.size() != rec.item_ids.size()) return std::nullopt;
  return rec;
}

// Column layout: user_id, item_id, create_at "YYYY-MM-DD".
inline std::optional<PurchaseRecord> parse_purchase_fields(
    const std::vector<std::string_view>& f) {
  if (f.size() != 3) return std::nullopt;
  PurchaseRecord rec;
  if (!detail::parse_fixed_uint(f[0], rec.user_id)) return std::nullopt;
  if (!detail::parse_fixed_uint(f[1], rec.item_id)) return std::nullopt;
  const auto d = parse_date_days(f[2]);
  if (!d) return std::nullopt;
  rec.create_at_day = *d;
  return rec;
}

inline TsvReader<BehaviorRecord> open_behavior_log(const std::filesystem::path& path,
                                                   ParseOptions options = {}) {
  return TsvReader<BehaviorRecord>(path, parse_behavior_fields, options);
}

inline TsvReader<ItemInfo> open_item_info(const std::filesystem::path& path,
                                          ParseOptions options = {}) {
  return TsvReader<ItemInfo>(path, parse_item_fields, options);
}

inline TsvReader<MatchPackage> open_match_packages(const std::filesystem::path& path,
                                                   ParseOptions options = {}) {
  return TsvReader<MatchPackage>(path, parse_package_fields, options);
}

inline TsvReader<PurchaseRecord> open_purchase_history(const std::filesystem::path& path,
                                                       ParseOptions options = {}) {
  return TsvReader<PurchaseRecord>(path, parse_purchase_fields, options);
}

// ---------------------------------------------------------------------------
// Feature sidecar: item_id TAB comma-separated reals, one line per item.
// Vectors must share one dimension (expected_dim, or inferred from the first
// accepted line when 0); mismatching lines are rejected.

inline std::unordered_map<ItemId, std::vector<double>> load_feature_sidecar(
    const std::filesystem::path& path, std::size_t expected_dim = 0, ParseStats* stats = nullptr,
    ParseOptions options = {}) {
  std::unordered_map<ItemId, std::vector<double>> out;
  std::size_t dim = expected_dim;
  auto parse = [&](const std::vector<std::string_view>& f) -> std::optional<std::pair<ItemId, std::vector<double>>> {
    if (f.size() != 2) return std::nullopt;
    ItemId id = 0;
    if (!detail::parse_fixed_uint(f[0], id)) return std::nullopt;
    std::vector<double> vec;
    std::string_view vals = f[1];
    while (!vals.empty()) {
      const auto comma = vals.find(',');
      const auto field = vals.substr(0, comma);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size()) return std::nullopt;
      vec.push_back(v);
      if (comma == std::string_view::npos) break;
      vals.remove_prefix(comma + 1);
    }
    if (vec.empty()) return std::nullopt;
    if (dim == 0) dim = vec.size();
    if (vec.size() != dim) return std::nullopt;
    return std::make_pair(id, std::move(vec));
  };
  TsvReader<std::pair<ItemId, std::vector<double>>> reader(path, parse, options);
  while (auto rec = reader.next()) out[rec->first] = std::move(rec->second);
  reader.finish();
  if (stats != nullptr) *stats = reader.stats();
  return out;
}

inline void attach_features(std::vector<ItemInfo>& items,
                            const std::unordered_map<ItemId, std::vector<double>>& sidecar) {
  for (auto& item : items) {
    if (auto it = sidecar.find(item.item_id); it != sidecar.end()) item.features = it->second;
  }
}

/// Ground-truth pair list: two tab-separated item ids per line, stored
/// canonically regardless of input order.
inline std::set<PairKey> load_truth_pairs(const std::filesystem::path& path,
                                          ParseStats* stats = nullptr, ParseOptions options = {}) {
  auto parse = [](const std::vector<std::string_view>& f) -> std::optional<PairKey> {
    if (f.size() != 2) return std::nullopt;
    ItemId a = 0, b = 0;
    if (!detail::parse_fixed_uint(f[0], a)) return std::nullopt;
    if (!detail::parse_fixed_uint(f[1], b)) return std::nullopt;
    if (a == b) return std::nullopt;
    return make_pair_key(a, b);
  };
  TsvReader<PairKey> reader(path, parse, options);
  std::set<PairKey> out;
  while (auto key = reader.next()) out.insert(*key);
  reader.finish();
  if (stats != nullptr) *stats = reader.stats();
  return out;
}

// ---------------------------------------------------------------------------
// Canonical TSV writers, mirroring the parser layouts above. All writes are
// atomic (temp file + rename).

inline void write_behavior_log(std::span<const BehaviorRecord> records,
                               const std::filesystem::path& path) {
  std::string buf;
  for (const auto& b : records) {
    buf += std::to_string(b.user_id);
    buf += '\t';
    buf += std::to_string(b.item_id);
    buf += '\t';
    buf += std::to_string(static_cast<int>(b.behavior));
    buf += '\t';
    if (b.geohash) buf += *b.geohash;
    buf += '\t';
    buf += std::to_string(b.item_category);
    buf += '\t';
    buf += format_hour_minutes(b.time_minutes);
    buf += '\n';
  }
  serde::write_file_atomic(path, buf);
}

inline void write_item_info(std::span<const ItemInfo> items, const std::filesystem::path& path) {
  std::string buf;
  for (const auto& item : items) {
    buf += std::to_string(item.item_id);
    buf += '\t';
    buf += std::to_string(item.cat_id);
    buf += '\t';
    for (std::size_t i = 0; i < item.terms.size(); ++i) {
      if (i > 0) buf += ',';
      buf += std::to_string(item.terms[i]);
    }
    buf += '\n';
  }
  serde::write_file_atomic(path, buf);
}

/// Ordered by item id so the emitted sidecar is deterministic.
inline void write_feature_sidecar(const std::map<ItemId, std::vector<double>>& features,
                                  const std::filesystem::path& path) {
  std::string buf;
  for (const auto& [id, vec] : features) {
    buf += std::to_string(id);
    buf += '\t';
    for (std::size_t i = 0; i < vec.size(); ++i) {
      if (i > 0) buf += ',';
      buf += serde::format_double(vec[i]);
    }
    buf += '\n';
  }
  serde::write_file_atomic(path, buf);
}

inline void write_match_packages(std::span<const MatchPackage> packages,
                                 const std::filesystem::path& path) {
  std::string buf;
  for (const auto& pkg : packages) {
    buf += std::to_string(pkg.coll_id);
    buf += '\t';
    for (std::size_t i = 0; i < pkg.item_ids.size(); ++i) {
      if (i > 0) buf += ',';
      buf += std::to_string(pkg.item_ids[i]);
    }
    buf += '\n';
  }
  serde::write_file_atomic(path, buf);
}

inline void write_purchase_history(std::span<const PurchaseRecord> records,
                                   const std::filesystem::path& path) {
  std::string buf;
  for (const auto& rec : records) {
    buf += std::to_string(rec.user_id);
    buf += '\t';
    buf += std::to_string(rec.item_id);
    buf += '\t';
    buf += format_date_days(rec.create_at_day);
    buf += '\n';
  }
  serde::write_file_atomic(path, buf);
}

inline void write_truth_pairs(const std::set<PairKey>& pairs, const std::filesystem::path& path) {
  std::string buf;
  for (const auto& [hi, lo] : pairs) {
    buf += std::to_string(hi);
    buf += '\t';
    buf += std::to_string(lo);
    buf += '\n';
  }
  serde::write_file_atomic(path, buf);
}

// ---------------------------------------------------------------------------
// Binary item-pair artifact: magic, version, count, fixed-width records,
// trailing FNV-1a checksum over everything before it. Loads verify the
// checksum, so truncation and corruption surface as hard errors.

inline constexpr std::uint32_t kPairMagic = 0x52465052;  // "RFPR"
inline constexpr std::uint32_t kPairVersion = 1;

inline void persist_pairs(const std::vector<ItemPair>& pairs, const std::filesystem::path& path) {
  std::string buf;
  serde::put_u32_le(buf, kPairMagic);
  serde::put_u32_le(buf, kPairVersion);
  serde::put_u64_le(buf, pairs.size());
  for (const auto& p : pairs) {
    serde::put_u64_le(buf, p.hi);
    serde::put_u64_le(buf, p.lo);
    serde::put_f64_le(buf, p.score);
  }
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

inline std::vector<ItemPair> load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError("cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 24) throw PipelineError("pair file too short: " + path.string());

  const std::string_view body(buf.data(), buf.size() - 8);
  serde::ByteReader tail(std::string_view(buf).substr(buf.size() - 8));
  if (tail.u64_le() != serde::fnv1a64(body)) {
    throw PipelineError("checksum mismatch in " + path.string());
  }

  serde::ByteReader r(body);
  if (r.u32_le() != kPairMagic) throw PipelineError("bad magic in " + path.string());
  if (r.u32_le() != kPairVersion) throw PipelineError("unsupported version in " + path.string());
  const auto count = r.u64_le();
  if (body.size() != 16 + count * 24) throw PipelineError("length mismatch in " + path.string());
  std::vector<ItemPair> pairs;
  pairs.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    ItemPair p;
    p.hi = r.u64_le();
    p.lo = r.u64_le();
    p.score = r.f64_le();
    pairs.push_back(p);
  }
  return pairs;
}

}  // namespace recallforge::data
