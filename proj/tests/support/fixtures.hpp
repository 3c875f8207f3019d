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

#include <vector>

#include "sslvit/image.hpp"
#include "sslvit/rng.hpp"
#include "sslvit/vit.hpp"

namespace support {

/// Two-block, width-16 encoder small enough for exhaustive gradient checks.
inline sslvit::ViTConfig micro_vit() {
  sslvit::ViTConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.channels = 1;
  c.depth = 2;
  c.heads = 2;
  c.dim = 16;
  c.mlp_ratio = 2.0;
  c.out_dim = 8;
  return c;
}

inline sslvit::Image random_image(std::size_t channels, std::size_t size, sslvit::Rng& rng) {
  sslvit::Image img{channels, size, size, std::vector<double>(channels * size * size)};
  for (double& v : img.pixels) v = 2.0 * rng.uniform() - 1.0;
  return img;
}

inline sslvit::ImageU8 random_image_u8(std::size_t channels, std::size_t size, sslvit::Rng& rng) {
  sslvit::ImageU8 img{channels, size, size, std::vector<std::uint8_t>(channels * size * size)};
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng.uniform_index(256));
  return img;
}

/// Scales every parameter so the micro encoder is far from its near-zero
/// initialization and gradients are not dominated by a few coordinates.
inline void spread_parameters(sslvit::ViTParams& params, sslvit::Rng& rng, double scale = 0.5) {
  for (auto& t : params.parameters())
    for (double& v : t.mutable_data()) v = scale * rng.normal();
}

}  // namespace support
