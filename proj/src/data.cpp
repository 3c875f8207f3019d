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

#include "sslvit/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <string>

#include <json.hpp>

#include "sslvit/errors.hpp"
#include "sslvit/rng.hpp"
#include "sslvit/serialize.hpp"

namespace sslvit {
namespace {

constexpr char kDatasetMagic[] = "SSLD";
constexpr std::uint32_t kDatasetVersion = 1;
constexpr char kEmbeddingMagic[] = "SSLE";
constexpr std::uint32_t kEmbeddingVersion = 1;

Dataset subset_with_classes(const Dataset& src, const std::vector<ClassId>& classes) {
  Dataset out;
  out.classes = classes;
  out.channels = src.channels;
  out.height = src.height;
  out.width = src.width;
  const std::set<ClassId> keep(classes.begin(), classes.end());
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (keep.count(src.records[i].class_id)) {
      out.records.push_back(src.records[i]);
      out.images.push_back(src.images[i]);
    }
  }
  return out;
}

}  // namespace

void Dataset::validate() const {
  if (records.size() != images.size())
    throw InvalidArgument("dataset: record and image counts differ");
  const std::set<ClassId> known(classes.begin(), classes.end());
  if (known.size() != classes.size()) throw InvalidArgument("dataset: duplicate class ids");
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!known.count(records[i].class_id))
      throw InvalidArgument("dataset: record " + std::to_string(records[i].id) +
                            " has unknown class " + std::to_string(records[i].class_id));
    const ImageU8& im = images[i];
    if (im.channels != channels || im.height != height || im.width != width ||
        im.pixels.size() != channels * height * width)
      throw InvalidArgument("dataset: image " + std::to_string(i) + " has non-uniform size");
  }
}

std::vector<std::vector<std::size_t>> Dataset::indices_by_class() const {
  std::map<ClassId, std::size_t> slot;
  for (std::size_t c = 0; c < classes.size(); ++c) slot[classes[c]] = c;
  std::vector<std::vector<std::size_t>> out(classes.size());
  for (std::size_t i = 0; i < records.size(); ++i) out[slot.at(records[i].class_id)].push_back(i);
  return out;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
  d.validate();
  nlohmann::json manifest;
  manifest["format"] = "sslvit-dataset";
  manifest["channels"] = d.channels;
  manifest["height"] = d.height;
  manifest["width"] = d.width;
  manifest["classes"] = d.classes;
  nlohmann::json samples = nlohmann::json::array();
  const std::size_t plane = d.channels * d.height * d.width;
  for (std::size_t i = 0; i < d.size(); ++i) {
    samples.push_back({{"id", d.records[i].id},
                       {"class_id", d.records[i].class_id},
                       {"offset", i * plane}});
  }
  manifest["samples"] = std::move(samples);
  ByteWriter w;
  w.put_magic(kDatasetMagic);
  w.put_u32(kDatasetVersion);
  w.put_string(manifest.dump());
  for (const auto& im : d.images) w.put_bytes(im.pixels);
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kDatasetMagic);
  const std::uint32_t version = r.get_u32();
  if (version != kDatasetVersion)
    throw VersionMismatchError("dataset version " + std::to_string(version) + " is not supported");
  Dataset d;
  std::vector<std::uint64_t> offsets;
  try {
    const auto m = nlohmann::json::parse(r.get_string());
    if (m.value("format", "") != "sslvit-dataset") throw FormatError("dataset: wrong manifest format tag");
    d.channels = m.at("channels").get<std::size_t>();
    d.height = m.at("height").get<std::size_t>();
    d.width = m.at("width").get<std::size_t>();
    d.classes = m.at("classes").get<std::vector<ClassId>>();
    for (const auto& s : m.at("samples")) {
      d.records.push_back({s.at("id").get<std::uint64_t>(), s.at("class_id").get<ClassId>()});
      offsets.push_back(s.at("offset").get<std::uint64_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  const std::size_t plane = d.channels * d.height * d.width;
  const std::size_t payload_start = r.position();
  const std::size_t payload = r.remaining();
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    if (offsets[i] > payload || plane > payload - offsets[i])
      throw TruncatedFileError("dataset: image " + std::to_string(i) + " extends past end of file");
    const auto* p = bytes.data() + payload_start + offsets[i];
    d.images.push_back({d.channels, d.height, d.width, std::vector<std::uint8_t>(p, p + plane)});
  }
  try {
    d.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  return d;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file_atomic(path, encode_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

std::vector<std::uint8_t> encode_embeddings(const EmbeddingStore& s) {
  if (s.values.size() != s.size() * s.dim)
    throw InvalidArgument("embedding store: values do not match N x dim");
  ByteWriter w;
  w.put_magic(kEmbeddingMagic);
  w.put_u32(kEmbeddingVersion);
  w.put_u64(s.size());
  w.put_u32(static_cast<std::uint32_t>(s.dim));
  for (double v : s.values) w.put_f32(static_cast<float>(v));
  for (ClassId l : s.labels) w.put_u32(l);
  return w.take();
}

EmbeddingStore decode_embeddings(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kEmbeddingMagic);
  const std::uint32_t version = r.get_u32();
  if (version != kEmbeddingVersion)
    throw VersionMismatchError("embedding store version " + std::to_string(version) +
                               " is not supported (expected 1)");
  const std::uint64_t n = r.get_u64();
  const std::uint32_t dim = r.get_u32();
  // Reject sizes the payload cannot hold before allocating.
  if (n > r.remaining() / 4 || (dim > 0 && n * dim > r.remaining() / 4))
    throw TruncatedFileError("embedding store: header promises more data than present");
  EmbeddingStore s;
  s.dim = dim;
  s.values.resize(n * dim);
  for (auto& v : s.values) v = static_cast<double>(r.get_f32());
  s.labels.resize(n);
  for (auto& l : s.labels) l = r.get_u32();
  if (r.remaining() != 0) throw FormatError("embedding store: trailing bytes");
  return s;
}

void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
  write_file_atomic(path, encode_embeddings(store));
}

EmbeddingStore read_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(read_file(path));
}

std::vector<Image> synth_templates(const SynthOptions& o) {
  if (o.num_classes == 0 || o.per_class == 0 || o.image_size == 0 || o.channels == 0)
    throw InvalidArgument("synth: all counts must be positive");
  Rng rng(derive_seed(o.seed, 0x7e3a11));
  const std::size_t s = o.image_size;
  std::vector<Image> out;
  for (std::size_t k = 0; k < o.num_classes; ++k) {
    Image t{o.channels, s, s, std::vector<double>(o.channels * s * s)};
    for (std::size_t c = 0; c < o.channels; ++c) {
      const double level = 60.0 + 136.0 * rng.uniform();
      struct Wave {
        double amp, fx, fy, phase;
      };
      std::vector<Wave> waves(3);
      for (auto& w : waves) {
        w.amp = 20.0 + 30.0 * rng.uniform();
        w.fx = static_cast<double>(rng.uniform_index(3));
        w.fy = static_cast<double>(rng.uniform_index(3));
        if (w.fx == 0.0 && w.fy == 0.0) w.fx = 1.0;
        w.phase = 2.0 * std::numbers::pi * rng.uniform();
      }
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
          double v = level;
          for (const auto& w : waves)
            v += w.amp * std::sin(2.0 * std::numbers::pi *
                                      (w.fx * static_cast<double>(x) + w.fy * static_cast<double>(y)) /
                                      static_cast<double>(s) +
                                  w.phase);
          t.at(c, y, x) = std::clamp(v, 0.0, 255.0);
        }
    }
    out.push_back(std::move(t));
  }
  return out;
}

Dataset synth_dataset(const SynthOptions& o) {
  const auto templates = synth_templates(o);
  Rng rng(derive_seed(o.seed, 0x5a3b1e));
  const std::size_t s = o.image_size;
  const auto shift_range = static_cast<std::ptrdiff_t>(o.max_shift);
  Dataset d;
  d.channels = o.channels;
  d.height = s;
  d.width = s;
  for (std::size_t k = 0; k < o.num_classes; ++k) d.classes.push_back(static_cast<ClassId>(k));
  std::uint64_t id = 0;
  for (std::size_t k = 0; k < o.num_classes; ++k) {
    for (std::size_t n = 0; n < o.per_class; ++n) {
      const std::ptrdiff_t dy =
          static_cast<std::ptrdiff_t>(rng.uniform_index(2 * o.max_shift + 1)) - shift_range;
      const std::ptrdiff_t dx =
          static_cast<std::ptrdiff_t>(rng.uniform_index(2 * o.max_shift + 1)) - shift_range;
      ImageU8 im{o.channels, s, s, std::vector<std::uint8_t>(o.channels * s * s)};
      const auto ss = static_cast<std::ptrdiff_t>(s);
      for (std::size_t c = 0; c < o.channels; ++c)
        for (std::size_t y = 0; y < s; ++y)
          for (std::size_t x = 0; x < s; ++x) {
            const auto sy = static_cast<std::size_t>(((static_cast<std::ptrdiff_t>(y) - dy) % ss + ss) % ss);
            const auto sx = static_cast<std::size_t>(((static_cast<std::ptrdiff_t>(x) - dx) % ss + ss) % ss);
            double v = templates[k].at(c, sy, sx);
            if (o.noise_std > 0.0) v += o.noise_std * rng.normal();
            im.pixels[(c * s + y) * s + x] =
                static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
          }
      d.records.push_back({id++, static_cast<ClassId>(k)});
      d.images.push_back(std::move(im));
    }
  }
  return d;
}

std::vector<Dataset> split_classes(const Dataset& dataset, std::span<const double> fractions) {
  if (fractions.empty()) throw InvalidArgument("split_classes: no fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw InvalidArgument("split_classes: negative fraction");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("split_classes: fractions must sum to 1");
  const std::size_t n = dataset.classes.size();
  std::vector<std::size_t> counts(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += counts[i];
    remainders.emplace_back(exact - static_cast<double>(counts[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[remainders[i % remainders.size()].second];
  std::vector<std::vector<ClassId>> lists;
  std::size_t pos = 0;
  for (std::size_t c : counts) {
    lists.emplace_back(dataset.classes.begin() + static_cast<std::ptrdiff_t>(pos),
                       dataset.classes.begin() + static_cast<std::ptrdiff_t>(pos + c));
    pos += c;
  }
  return split_classes(dataset, lists);
}

std::vector<Dataset> split_classes(const Dataset& dataset,
                                   const std::vector<std::vector<ClassId>>& lists) {
  std::set<ClassId> seen;
  const std::set<ClassId> all(dataset.classes.begin(), dataset.classes.end());
  for (const auto& l : lists)
    for (ClassId c : l) {
      if (!all.count(c)) throw InvalidArgument("split_classes: unknown class " + std::to_string(c));
      if (!seen.insert(c).second)
        throw InvalidArgument("split_classes: class " + std::to_string(c) + " appears in two lists");
    }
  if (seen.size() != all.size())
    throw InvalidArgument("split_classes: lists do not cover every class");
  std::vector<Dataset> out;
  for (const auto& l : lists) out.push_back(subset_with_classes(dataset, l));
  return out;
}

}  // namespace sslvit
