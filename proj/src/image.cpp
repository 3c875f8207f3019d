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

#include "sslvit/image.hpp"

#include <string>

#include "sslvit/errors.hpp"

namespace sslvit {

double normalize_pixel(std::uint8_t v) { return (static_cast<double>(v) / 255.0 - 0.5) / 0.5; }

Image crop(const ImageU8& image, std::size_t top, std::size_t left, std::size_t size, bool flip) {
  if (size == 0 || top + size > image.height || left + size > image.width) {
    throw InvalidArgument("crop: window " + std::to_string(size) + " at (" + std::to_string(top) +
                          ", " + std::to_string(left) + ") exceeds image " +
                          std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  Image out{image.channels, size, size, std::vector<double>(image.channels * size * size)};
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const std::size_t sx = flip ? left + size - 1 - x : left + x;
        out.at(c, y, x) = normalize_pixel(image.at(c, top + y, sx));
      }
  return out;
}

Image center_crop(const ImageU8& image, std::size_t size) {
  if (size > image.height || size > image.width) {
    throw InvalidArgument("center_crop: size " + std::to_string(size) + " exceeds image " +
                          std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  return crop(image, (image.height - size) / 2, (image.width - size) / 2, size, false);
}

}  // namespace sslvit
