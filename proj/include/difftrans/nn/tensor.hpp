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

#include <cstddef>
#include <span>
#include <vector>

namespace difftrans::nn {

// Dense NCHW float tensor. Fully-connected activations use h = w = 1.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, float fill = 0.0F)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  float* sample(int i) { return data.data() + i * sample_size(); }
  const float* sample(int i) const { return data.data() + i * sample_size(); }
  std::span<const float> sample_span(int i) const { return {sample(i), sample_size()}; }
  float& at(int ni, int ci, int y, int x) {
    return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
  }
  float at(int ni, int ci, int y, int x) const {
    return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
  }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  Tensor zeros_like() const { return Tensor(n, c, h, w); }
};

// Trainable parameter with its accumulated gradient.
struct Param {
  std::vector<float> value;
  std::vector<float> grad;
  bool decay = true;  // subject to weight decay

  explicit Param(std::size_t n = 0) : value(n, 0.0F), grad(n, 0.0F) {}
};

}  // namespace difftrans::nn
