// Copyright 2026 The sslvit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Little-endian binary encoding shared by every on-disk format.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sslvit/tensor.hpp"

namespace sslvit {

class ByteWriter {
 public:
  void put_bytes(std::span<const std::uint8_t> bytes);
  void put_magic(std::string_view magic);
  void put_u8(std::uint8_t v) { buf_.push_back(v); }
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_f32(float v);
  void put_f64(double v);
  /// u32 byte length followed by the raw UTF-8 bytes.
  void put_string(std::string_view s);

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; running past the end throws TruncatedFileError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> get_bytes(std::size_t n);
  /// Throws BadMagicError when the next bytes differ from `magic`.
  void expect_magic(std::string_view magic);
  std::uint8_t get_u8();
  std::uint32_t get_u32();
  std::uint64_t get_u64();
  float get_f32();
  double get_f64();
  std::string get_string();

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

/// u32 rank, u64 dims, then little-endian f64 data in row-major order.
void write_tensor(ByteWriter& out, const Tensor& t);
Tensor read_tensor(ByteReader& in, bool requires_grad = false);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// 64-bit FNV-1a, used for content fingerprints in reports.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace sslvit
