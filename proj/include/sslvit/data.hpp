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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sslvit/image.hpp"

namespace sslvit {

using ClassId = std::uint32_t;

struct SampleRecord {
  std::uint64_t id = 0;
  ClassId class_id = 0;
  bool operator==(const SampleRecord&) const = default;
};

/// Labeled u8 images of uniform size.
struct Dataset {
  std::vector<ClassId> classes;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<SampleRecord> records;
  std::vector<ImageU8> images;  // parallel to records

  std::size_t size() const { return records.size(); }
  /// Throws InvalidArgument if records reference unknown classes or image
  /// sizes are not uniform.
  void validate() const;
  /// Indices of the samples of each class, in class-list order.
  std::vector<std::vector<std::size_t>> indices_by_class() const;
  bool operator==(const Dataset&) const = default;
};

/// Container "SSLD": magic, u32 version, length-prefixed JSON manifest,
/// then raw planes (see docs/formats.md).
std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// N labeled feature rows of width `dim`. Held as f64, stored as f32.
struct EmbeddingStore {
  std::size_t dim = 0;
  std::vector<double> values;  // row-major N x dim
  std::vector<ClassId> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  bool operator==(const EmbeddingStore&) const = default;
};

/// "SSLE" layout: magic, u32 version = 1, u64 N, u32 dim, N*dim f32, N u32.
std::vector<std::uint8_t> encode_embeddings(const EmbeddingStore& store);
EmbeddingStore decode_embeddings(std::span<const std::uint8_t> bytes);
void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore read_embeddings(const std::filesystem::path& path);

struct SynthOptions {
  std::size_t num_classes = 8;
  std::size_t per_class = 50;
  std::size_t image_size = 40;
  std::size_t channels = 3;
  double noise_std = 12.0;     // per-pixel Gaussian noise, u8 units
  std::size_t max_shift = 3;   // translation range, pixels, periodic
  std::uint64_t seed = 0;
};

/// Noise-free class templates (values in [0, 255]) used by synth_dataset.
std::vector<Image> synth_templates(const SynthOptions& options);

/// Class-conditional images: template + random translation + noise,
/// quantized to u8. Samples are grouped by class.
Dataset synth_dataset(const SynthOptions& options);

/// Class-disjoint subsets with the given class fractions (largest-remainder
/// rounding, in class-list order). Fractions must sum to 1.
std::vector<Dataset> split_classes(const Dataset& dataset, std::span<const double> fractions);

/// Class-disjoint subsets from explicit class lists, which must partition
/// the dataset's classes.
std::vector<Dataset> split_classes(const Dataset& dataset,
                                   const std::vector<std::vector<ClassId>>& lists);

}  // namespace sslvit
