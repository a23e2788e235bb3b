// Copyright 2026 The difftrans Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace difftrans {

// RGB image with planar float channels in [0, 1] (channel-major, then rows).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, float fill = 0.0F)
      : height(h), width(w), data(static_cast<std::size_t>(3) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[c * plane() + static_cast<std::size_t>(y) * width + x];
  }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
  double mean() const;
};

// Rounds every value to the nearest 8-bit level, as storing would.
void quantize(Image& img);

// 8-bit RGB PNG.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);
std::vector<std::uint8_t> encode_png(const Image& img);

}  // namespace difftrans
