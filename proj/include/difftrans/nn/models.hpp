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

// Network builders for the scorer/classifier (residual CNN) and the
// translator (residual generator + patch discriminator).

#include <memory>

#include "difftrans/nn/layers.hpp"
#include "json.hpp"

namespace difftrans::nn {

// Residual classifier. With `imagenet_stem` and two blocks per stage at
// base width 64 this is ResNet-18; the desk default is a 3x3 stem and one
// basic block per stage.
struct ResNetConfig {
  int image_side = 64;
  int base_width = 16;
  int stages = 4;
  int blocks_per_stage = 1;
  bool imagenet_stem = false;
  int num_classes = 2;

  static ResNetConfig resnet18(int image_side = 224);
  void validate() const;
};
void to_json(nlohmann::json& j, const ResNetConfig& c);
void from_json(const nlohmann::json& j, ResNetConfig& c);

std::unique_ptr<Sequential> build_resnet(const ResNetConfig& config, Rng& rng);

struct GeneratorConfig {
  int image_side = 64;
  int base_width = 64;
  int res_blocks = 3;
  int stem_kernel = 7;
  double init_std = 0.02;
  // Init of the last convolution. The body is added to the input, so 0
  // starts the generator as the exact identity map.
  double output_init_std = 0.02;

  void validate() const;
};
void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

// x + body(x), clamped to [0, 1]; body = c7 - d2 - d2 - R*n - u2 - u2 - c7
// with instance normalization. Upsampling is nearest-neighbour + conv.
std::unique_ptr<Sequential> build_generator(const GeneratorConfig& config, Rng& rng);

// PatchGAN with three stride-2 4x4 convs, a stride-1 conv and a 1-channel
// head: 70x70 receptive field.
struct DiscriminatorConfig {
  int base_width = 64;
  int layers = 3;
  double init_std = 0.02;
};
void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

std::unique_ptr<Sequential> build_discriminator(const DiscriminatorConfig& config, Rng& rng);

}  // namespace difftrans::nn
