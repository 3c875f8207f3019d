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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sslvit/image.hpp"
#include "sslvit/rng.hpp"
#include "sslvit/tensor.hpp"

namespace sslvit {

struct ViTConfig {
  std::size_t image_size = 32;  // pixels per side of a global view
  std::size_t patch_size = 8;
  std::size_t channels = 3;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t dim = 64;
  double mlp_ratio = 4.0;
  std::size_t out_dim = 128;  // projection-head width K
  // Resample positional embeddings for inputs whose patch grid differs
  // from the one implied by image_size.
  bool interpolate_pos = true;

  /// Throws InvalidArgument on inconsistent values.
  void validate() const;
  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t mlp_hidden() const;
  std::size_t patch_dim() const { return channels * patch_size * patch_size; }

  bool operator==(const ViTConfig&) const = default;
};

nlohmann::json to_json(const ViTConfig& config);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
ViTConfig vit_config_from_json(const nlohmann::json& j);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
  Tensor forward(const Tensor& x) const { return add(matmul(x, weight), bias); }
};

struct LayerNormParams {
  Tensor weight;  // [dim]
  Tensor bias;    // [dim]
  Tensor forward(const Tensor& x) const { return add(mul(layer_norm(x), weight), bias); }
};

struct TransformerBlock {
  LayerNormParams norm1;
  Linear qkv;
  Linear proj;
  LayerNormParams norm2;
  Linear fc1;
  Linear fc2;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Learnable weights of the encoder and its projection head, plus the
/// optional retrieval projection attached during metric fine-tuning.
///
/// Holds Tensor handles: copying a ViTParams shares storage. Use clone()
/// for an independent copy.
struct ViTParams {
  ViTConfig config;
  Linear patch_embed;
  Tensor cls_token;  // [1, dim]
  Tensor pos_embed;  // [num_patches + 1, dim]
  std::vector<TransformerBlock> blocks;
  LayerNormParams norm;
  Linear head;
  std::optional<Linear> retrieval;

  /// Truncated-normal(0.02) weights, zero biases and class token, unit norm
  /// gains.
  static ViTParams init(const ViTConfig& config, Rng& rng, bool requires_grad = true);

  /// Manifest order; this is the order tensors appear in checkpoints.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  ViTParams clone(bool requires_grad) const;
  void zero_grad();
};

/// Closed-form parameter count of ViTParams::init(config), excluding the
/// retrieval projection.
std::size_t expected_parameter_count(const ViTConfig& config);

/// Attaches a fresh dim -> out_dim retrieval projection.
void attach_retrieval_head(ViTParams& params, std::size_t out_dim, Rng& rng);

/// Non-overlapping p x p patches in raster order, each flattened
/// channel-major: [num_patches, channels * p * p].
Tensor patchify(const Image& image, std::size_t patch_size);

/// [rows_out * cols_out, grid_in * grid_in] bilinear resampling matrix
/// (half-pixel centers, edge clamped) on a square source grid.
Tensor bilinear_resample_matrix(std::size_t grid_in, std::size_t rows_out, std::size_t cols_out);

/// Backbone class-token embedding after the final norm, shape [dim].
Tensor encode(const ViTParams& params, const Image& image);

/// Projection-head logits, shape [out_dim].
Tensor head(const ViTParams& params, const Tensor& embedding);

/// Writes the "SVTC" checkpoint format (see docs/formats.md).
void save_checkpoint(const std::filesystem::path& path, const ViTParams& params);
std::vector<std::uint8_t> encode_checkpoint(const ViTParams& params);
ViTParams load_checkpoint(const std::filesystem::path& path, bool requires_grad = false);
ViTParams decode_checkpoint(std::span<const std::uint8_t> bytes, bool requires_grad = false);

}  // namespace sslvit
