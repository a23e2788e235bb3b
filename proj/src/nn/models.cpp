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

#include "difftrans/nn/models.hpp"

#include "difftrans/errors.hpp"

namespace difftrans::nn {

namespace {

LayerPtr basic_block(int in, int out, int stride, Rng& rng) {
  auto body = std::make_unique<Sequential>();
  body->emplace<Conv2d>(in, out, 3, stride, 1, rng, kHeInit, false);
  body->emplace<BatchNorm2d>(out);
  body->emplace<ReLU>();
  body->emplace<Conv2d>(out, out, 3, 1, 1, rng, kHeInit, false);
  body->emplace<BatchNorm2d>(out);
  LayerPtr shortcut;
  if (stride != 1 || in != out) {
    auto sc = std::make_unique<Sequential>();
    sc->emplace<Conv2d>(in, out, 1, stride, 0, rng, kHeInit, false);
    sc->emplace<BatchNorm2d>(out);
    shortcut = std::move(sc);
  }
  return std::make_unique<Residual>(std::move(body), std::move(shortcut), true);
}

}  // namespace

ResNetConfig ResNetConfig::resnet18(int image_side) {
  ResNetConfig c;
  c.image_side = image_side;
  c.base_width = 64;
  c.stages = 4;
  c.blocks_per_stage = 2;
  c.imagenet_stem = true;
  return c;
}

void ResNetConfig::validate() const {
  if (image_side < 8 || base_width < 1 || stages < 1 || blocks_per_stage < 1 || num_classes < 2)
    throw ValidationError("invalid residual network configuration");
  const int reduction = (imagenet_stem ? 4 : 1) << (stages - 1);
  if (image_side < reduction) throw ValidationError("image_side too small for the number of stages");
}

void to_json(nlohmann::json& j, const ResNetConfig& c) {
  j = {{"image_side", c.image_side},     {"base_width", c.base_width},
       {"stages", c.stages},             {"blocks_per_stage", c.blocks_per_stage},
       {"imagenet_stem", c.imagenet_stem}, {"num_classes", c.num_classes}};
}

void from_json(const nlohmann::json& j, ResNetConfig& c) {
  c.image_side = j.value("image_side", c.image_side);
  c.base_width = j.value("base_width", c.base_width);
  c.stages = j.value("stages", c.stages);
  c.blocks_per_stage = j.value("blocks_per_stage", c.blocks_per_stage);
  c.imagenet_stem = j.value("imagenet_stem", c.imagenet_stem);
  c.num_classes = j.value("num_classes", c.num_classes);
}

std::unique_ptr<Sequential> build_resnet(const ResNetConfig& c, Rng& rng) {
  c.validate();
  auto net = std::make_unique<Sequential>();
  if (c.imagenet_stem) {
    net->emplace<Conv2d>(3, c.base_width, 7, 2, 3, rng, kHeInit, false);
    net->emplace<BatchNorm2d>(c.base_width);
    net->emplace<ReLU>();
    net->emplace<MaxPool2d>(3, 2, 1);
  } else {
    net->emplace<Conv2d>(3, c.base_width, 3, 1, 1, rng, kHeInit, false);
    net->emplace<BatchNorm2d>(c.base_width);
    net->emplace<ReLU>();
  }
  int width = c.base_width;
  for (int s = 0; s < c.stages; ++s) {
    const int out = c.base_width << s;
    for (int b = 0; b < c.blocks_per_stage; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      net->add(basic_block(width, out, stride, rng));
      width = out;
    }
  }
  net->emplace<GlobalAvgPool>();
  net->emplace<Linear>(width, c.num_classes, rng);
  return net;
}

void GeneratorConfig::validate() const {
  if (image_side % 4 != 0 || image_side < 8)
    throw ValidationError("generator image_side must be a multiple of 4 and at least 8");
  if (base_width < 1 || res_blocks < 0 || stem_kernel < 1 || stem_kernel % 2 == 0 || init_std < 0 ||
      output_init_std < 0)
    throw ValidationError("invalid generator configuration");
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"image_side", c.image_side}, {"base_width", c.base_width},         {"res_blocks", c.res_blocks},
       {"stem_kernel", c.stem_kernel}, {"init_std", c.init_std}, {"output_init_std", c.output_init_std}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  c.image_side = j.value("image_side", c.image_side);
  c.base_width = j.value("base_width", c.base_width);
  c.res_blocks = j.value("res_blocks", c.res_blocks);
  c.stem_kernel = j.value("stem_kernel", c.stem_kernel);
  c.init_std = j.value("init_std", c.init_std);
  c.output_init_std = j.value("output_init_std", c.output_init_std);
}

std::unique_ptr<Sequential> build_generator(const GeneratorConfig& c, Rng& rng) {
  c.validate();
  const int w = c.base_width;
  const int k = c.stem_kernel;
  auto body = std::make_unique<Sequential>();
  body->emplace<Conv2d>(3, w, k, 1, k / 2, rng, c.init_std);
  body->emplace<InstanceNorm2d>();
  body->emplace<ReLU>();
  body->emplace<Conv2d>(w, 2 * w, 3, 2, 1, rng, c.init_std);
  body->emplace<InstanceNorm2d>();
  body->emplace<ReLU>();
  body->emplace<Conv2d>(2 * w, 4 * w, 3, 2, 1, rng, c.init_std);
  body->emplace<InstanceNorm2d>();
  body->emplace<ReLU>();
  for (int r = 0; r < c.res_blocks; ++r) {
    auto rb = std::make_unique<Sequential>();
    rb->emplace<Conv2d>(4 * w, 4 * w, 3, 1, 1, rng, c.init_std);
    rb->emplace<InstanceNorm2d>();
    rb->emplace<ReLU>();
    rb->emplace<Conv2d>(4 * w, 4 * w, 3, 1, 1, rng, c.init_std);
    rb->emplace<InstanceNorm2d>();
    body->emplace<Residual>(std::move(rb), nullptr, false);
  }
  body->emplace<Upsample2x>();
  body->emplace<Conv2d>(4 * w, 2 * w, 3, 1, 1, rng, c.init_std);
  body->emplace<InstanceNorm2d>();
  body->emplace<ReLU>();
  body->emplace<Upsample2x>();
  body->emplace<Conv2d>(2 * w, w, 3, 1, 1, rng, c.init_std);
  body->emplace<InstanceNorm2d>();
  body->emplace<ReLU>();
  body->emplace<Conv2d>(w, 3, k, 1, k / 2, rng, c.output_init_std);

  auto net = std::make_unique<Sequential>();
  net->emplace<Residual>(std::move(body), nullptr, false);
  net->emplace<Clamp01>();
  return net;
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = {{"base_width", c.base_width}, {"layers", c.layers}, {"init_std", c.init_std}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  c.base_width = j.value("base_width", c.base_width);
  c.layers = j.value("layers", c.layers);
  c.init_std = j.value("init_std", c.init_std);
}

std::unique_ptr<Sequential> build_discriminator(const DiscriminatorConfig& c, Rng& rng) {
  if (c.base_width < 1 || c.layers < 1) throw ValidationError("invalid discriminator configuration");
  auto net = std::make_unique<Sequential>();
  net->emplace<Conv2d>(3, c.base_width, 4, 2, 1, rng, c.init_std);
  net->emplace<ReLU>(0.2F);
  int width = c.base_width;
  for (int l = 1; l < c.layers; ++l) {
    const int out = c.base_width * std::min(1 << l, 8);
    net->emplace<Conv2d>(width, out, 4, 2, 1, rng, c.init_std);
    net->emplace<InstanceNorm2d>();
    net->emplace<ReLU>(0.2F);
    width = out;
  }
  const int out = c.base_width * std::min(1 << c.layers, 8);
  net->emplace<Conv2d>(width, out, 4, 1, 1, rng, c.init_std);
  net->emplace<InstanceNorm2d>();
  net->emplace<ReLU>(0.2F);
  net->emplace<Conv2d>(out, 1, 4, 1, 1, rng, c.init_std);
  return net;
}

}  // namespace difftrans::nn
