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

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "recallforge/common.hpp"

// Byte-level encoding helpers for engine keys and values. Keys use big-endian
// integers so that lexicographic byte order equals numeric order; values use
// little-endian fixed-width fields.

namespace recallforge::serde {

inline void put_u64_be(std::string& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) {
    out.push_back(static_cast<char>((v >> shift) & 0xff));
  }
}

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<char>((v >> shift) & 0xff));
  }
}

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int shift = 0; shift < 64; shift += 8) {
    out.push_back(static_cast<char>((v >> shift) & 0xff));
  }
}

inline void put_i64_le(std::string& out, std::int64_t v) {
  put_u64_le(out, static_cast<std::uint64_t>(v));
}

inline void put_f64_le(std::string& out, double v) {
  put_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

/// Bounds-checked cursor over a byte buffer; throws PipelineError on
/// truncated or malformed records.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  bool empty() const { return pos_ >= data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

  std::uint64_t u64_be() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v = (v << 8) | static_cast<unsigned char>(data_[pos_ + i]);
    }
    pos_ += 8;
    return v;
  }

  std::uint32_t u32_le() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64_le() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  std::int64_t i64_le() { return static_cast<std::int64_t>(u64_le()); }

  double f64_le() { return std::bit_cast<double>(u64_le()); }

  std::string_view bytes(std::size_t n) {
    need(n);
    std::string_view v = data_.substr(pos_, n);
    pos_ += n;
    return v;
  }

  std::string_view length_prefixed() { return bytes(u32_le()); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) {
      throw PipelineError("truncated record: needed " + std::to_string(n) +
                          " bytes, have " + std::to_string(data_.size() - pos_));
    }
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

inline void put_length_prefixed(std::string& out, std::string_view bytes) {
  put_u32_le(out, static_cast<std::uint32_t>(bytes.size()));
  out.append(bytes);
}

/// FNV-1a 64-bit, used as the integrity checksum on binary artifacts.
class Fnv1a64 {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      hash_ ^= c;
      hash_ *= 0x100000001b3ull;
    }
  }
  std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  Fnv1a64 h;
  h.update(bytes);
  return h.digest();
}

/// Round-trippable decimal formatting for doubles; all persisted text
/// artifacts use this so outputs are byte-stable.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Writes bytes to a temp file and renames it into place, so readers never
/// observe a partially written artifact.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw PipelineError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace recallforge::serde
