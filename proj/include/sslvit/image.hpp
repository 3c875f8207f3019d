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
#include <vector>

namespace sslvit {

/// Planar (channels x height x width) 8-bit image as stored on disk.
struct ImageU8 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  bool operator==(const ImageU8&) const = default;
};

/// Planar floating-point image fed to the encoder.
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  bool operator==(const Image&) const = default;
};

/// Maps u8 intensities to [-1, 1].
double normalize_pixel(std::uint8_t v);

/// size x size window at (top, left), optionally mirrored left-right,
/// normalized to floating point.
Image crop(const ImageU8& image, std::size_t top, std::size_t left, std::size_t size, bool flip);

/// Centered size x size window (the whole image when sizes match).
Image center_crop(const ImageU8& image, std::size_t size);

}  // namespace sslvit
