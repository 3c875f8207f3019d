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

#include "sslvit/serialize.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "sslvit/errors.hpp"

namespace sslvit {

void ByteWriter::put_bytes(std::span<const std::uint8_t> bytes) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

void ByteWriter::put_magic(std::string_view magic) {
  for (char c : magic) buf_.push_back(static_cast<std::uint8_t>(c));
}

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::put_string(std::string_view s) {
  put_u32(static_cast<std::uint32_t>(s.size()));
  for (char c : s) buf_.push_back(static_cast<std::uint8_t>(c));
}

std::span<const std::uint8_t> ByteReader::get_bytes(std::size_t n) {
  if (n > remaining()) {
    throw TruncatedFileError("unexpected end of data: need " + std::to_string(n) +
                             " bytes at offset " + std::to_string(pos_) + ", have " +
                             std::to_string(remaining()));
  }
  auto out = bytes_.subspan(pos_, n);
  pos_ += n;
  return out;
}

void ByteReader::expect_magic(std::string_view magic) {
  auto got = get_bytes(magic.size());
  for (std::size_t i = 0; i < magic.size(); ++i) {
    if (got[i] != static_cast<std::uint8_t>(magic[i])) {
      throw BadMagicError("bad magic: expected \"" + std::string(magic) + "\", got \"" +
                          std::string(got.begin(), got.end()) + "\"");
    }
  }
}

std::uint8_t ByteReader::get_u8() { return get_bytes(1)[0]; }

std::uint32_t ByteReader::get_u32() {
  auto b = get_bytes(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::get_u64() {
  auto b = get_bytes(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

float ByteReader::get_f32() { return std::bit_cast<float>(get_u32()); }

double ByteReader::get_f64() { return std::bit_cast<double>(get_u64()); }

std::string ByteReader::get_string() {
  const std::uint32_t n = get_u32();
  auto b = get_bytes(n);
  return std::string(b.begin(), b.end());
}

void write_tensor(ByteWriter& out, const Tensor& t) {
  out.put_u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) out.put_u64(d);
  for (double v : t.data()) out.put_f64(v);
}

Tensor read_tensor(ByteReader& in, bool requires_grad) {
  const std::uint32_t rank = in.get_u32();
  if (rank > 8) throw FormatError("tensor rank " + std::to_string(rank) + " is implausible");
  Shape shape(rank);
  std::uint64_t numel = 1;
  for (auto& d : shape) {
    const std::uint64_t v = in.get_u64();
    if (v == 0) throw FormatError("tensor with zero-sized dimension");
    d = static_cast<std::size_t>(v);
    numel *= v;
  }
  if (numel > in.remaining() / 8) {
    throw TruncatedFileError("tensor payload of " + std::to_string(numel) +
                             " values exceeds remaining data");
  }
  std::vector<double> data(numel);
  for (auto& v : data) v = in.get_f64();
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace sslvit
