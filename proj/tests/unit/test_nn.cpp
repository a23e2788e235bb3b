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

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "difftrans/errors.hpp"
#include "difftrans/nn/bundle.hpp"
#include "difftrans/nn/layers.hpp"
#include "difftrans/nn/models.hpp"
#include "difftrans/nn/optim.hpp"
#include "test_support.hpp"

using namespace difftrans;
using namespace difftrans::nn;

namespace {

Tensor random_tensor(int n, int c, int h, int w, std::mt19937_64& g, float lo = -1.0F, float hi = 1.0F) {
  Tensor t(n, c, h, w);
  std::uniform_real_distribution<float> u(lo, hi);
  for (auto& v : t.data) v = u(g);
  return t;
}

void normalize(std::vector<float>& v) {
  double norm = 0;
  for (float x : v) norm += static_cast<double>(x) * x;
  if (norm == 0) return;
  for (auto& x : v) x = static_cast<float>(x / std::sqrt(norm));
}

// Unit direction mixing a random component with the analytic gradient, so
// the directional derivative stays well above float rounding noise.
std::vector<float> unit_direction(const std::vector<float>& grad, std::mt19937_64& g) {
  std::normal_distribution<float> d(0.0F, 1.0F);
  std::vector<float> v(grad.size()), a = grad;
  for (auto& x : v) x = d(g);
  normalize(v);
  normalize(a);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += a[i];
  normalize(v);
  return v;
}

// Mean of w * layer(x): a linear functional of the output.
double probe(Layer& layer, const Tensor& x, const Tensor& w, bool train) {
  const Tensor y = layer.forward(x, train);
  layer.clear_cache();
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(w.data[i]) * y.data[i];
  return s / static_cast<double>(y.size());
}

bool close(double fd, double analytic, double rel) {
  return std::abs(fd - analytic) <= rel * std::max(std::abs(fd), std::abs(analytic)) + 1e-6;
}

// Directional finite-difference check of input and parameter gradients.
void check_gradients(Layer& layer, const Tensor& x, bool train, std::uint64_t seed, double rel = 0.05,
                     double h = 3e-3) {
  std::mt19937_64 g(seed);
  const Tensor y0 = layer.forward(x, train);
  const Tensor w = random_tensor(y0.n, y0.c, y0.h, y0.w, g);
  layer.clear_cache();

  zero_grad(layer);
  const Tensor y = layer.forward(x, train);
  Tensor gy = w;
  for (auto& v : gy.data) v /= static_cast<float>(y.size());
  const Tensor gx = layer.backward(gy);
  REQUIRE(gx.same_shape(x));

  for (int trial = 0; trial < 3; ++trial) {
    const auto d = unit_direction(gx.data, g);
    double analytic = 0;
    for (std::size_t i = 0; i < d.size(); ++i) analytic += static_cast<double>(gx.data[i]) * d[i];
    Tensor xp = x, xm = x;
    for (std::size_t i = 0; i < d.size(); ++i) {
      xp.data[i] += static_cast<float>(h) * d[i];
      xm.data[i] -= static_cast<float>(h) * d[i];
    }
    const double fd = (probe(layer, xp, w, train) - probe(layer, xm, w, train)) / (2 * h);
    CHECK_MESSAGE(close(fd, analytic, rel), "input fd " << fd << " analytic " << analytic);
  }

  auto params = parameters(layer);
  std::size_t total = 0;
  for (auto* p : params) total += p->value.size();
  if (total == 0) return;
  std::vector<float> flat;
  flat.reserve(total);
  for (auto* p : params) flat.insert(flat.end(), p->grad.begin(), p->grad.end());
  for (int trial = 0; trial < 3; ++trial) {
    const auto d = unit_direction(flat, g);
    double analytic = 0;
    for (std::size_t k = 0; k < total; ++k) analytic += static_cast<double>(flat[k]) * d[k];
    auto shift = [&](float sign) {
      std::size_t j = 0;
      for (auto* p : params)
        for (auto& v : p->value) v += sign * static_cast<float>(h) * d[j++];
    };
    shift(1.0F);
    const double lp = probe(layer, x, w, train);
    shift(-2.0F);
    const double lm = probe(layer, x, w, train);
    shift(1.0F);
    const double fd = (lp - lm) / (2 * h);
    CHECK_MESSAGE(close(fd, analytic, rel), "param fd " << fd << " analytic " << analytic);
  }
}

}  // namespace

TEST_CASE("layer gradients match finite differences") {
  std::mt19937_64 g(1);
  Rng rng(3);
  SUBCASE("conv stride 1") {
    Conv2d conv(3, 4, 3, 1, 1, rng);
    check_gradients(conv, random_tensor(2, 3, 6, 6, g), true, 10);
  }
  SUBCASE("conv stride 2 without bias") {
    Conv2d conv(2, 3, 4, 2, 1, rng, 0.1, false);
    check_gradients(conv, random_tensor(2, 2, 8, 8, g), true, 11);
  }
  SUBCASE("linear") {
    Linear lin(5, 3, rng);
    check_gradients(lin, random_tensor(4, 5, 1, 1, g), true, 12);
  }
  SUBCASE("batch norm in training mode") {
    BatchNorm2d bn(3);
    check_gradients(bn, random_tensor(4, 3, 3, 3, g), true, 13);
  }
  SUBCASE("instance norm") {
    InstanceNorm2d in;
    check_gradients(in, random_tensor(2, 3, 4, 4, g), true, 14);
  }
  SUBCASE("leaky relu") {
    ReLU r(0.2F);
    check_gradients(r, random_tensor(2, 3, 4, 4, g), true, 15);
  }
  SUBCASE("max pool") {
    MaxPool2d mp(3, 2, 1);
    check_gradients(mp, random_tensor(2, 2, 6, 6, g), true, 16);
  }
  SUBCASE("global average pool") {
    GlobalAvgPool gap;
    check_gradients(gap, random_tensor(2, 3, 4, 4, g), true, 17);
  }
  SUBCASE("nearest upsample") {
    Upsample2x up;
    check_gradients(up, random_tensor(2, 2, 3, 3, g), true, 18);
  }
  SUBCASE("clamp inside the unit interval") {
    Clamp01 c;
    check_gradients(c, random_tensor(2, 2, 3, 3, g, 0.1F, 0.9F), true, 19);
  }
  SUBCASE("residual with projection") {
    auto body = std::make_unique<Sequential>();
    body->emplace<Conv2d>(2, 3, 3, 1, 1, rng).emplace<InstanceNorm2d>();
    auto shortcut = std::make_unique<Conv2d>(2, 3, 1, 1, 0, rng);
    Residual res(std::move(body), std::move(shortcut), true);
    check_gradients(res, random_tensor(2, 2, 5, 5, g), true, 20);
  }
}

TEST_CASE("model gradients match finite differences") {
  std::mt19937_64 g(2);
  Rng rng(4);
  SUBCASE("resnet") {
    ResNetConfig cfg;
    cfg.image_side = 16;
    cfg.base_width = 4;
    cfg.stages = 2;
    auto net = build_resnet(cfg, rng);
    check_gradients(*net, random_tensor(3, 3, 16, 16, g, 0.0F, 1.0F), true, 30, 0.05, 1e-3);
  }
  SUBCASE("generator") {
    GeneratorConfig cfg;
    cfg.image_side = 32;
    cfg.base_width = 4;
    cfg.res_blocks = 1;
    cfg.output_init_std = 0.1;
    auto net = build_generator(cfg, rng);
    check_gradients(*net, random_tensor(1, 3, 32, 32, g, 0.3F, 0.7F), true, 31, 0.05, 1e-3);
  }
  SUBCASE("discriminator") {
    DiscriminatorConfig cfg;
    cfg.base_width = 4;
    auto net = build_discriminator(cfg, rng);
    check_gradients(*net, random_tensor(2, 3, 64, 64, g, 0.0F, 1.0F), true, 32, 0.05, 1e-3);
  }
}

TEST_CASE("loss gradients") {
  std::mt19937_64 g(5);
  const Tensor logits = random_tensor(4, 2, 1, 1, g, -2.0F, 2.0F);
  const std::vector<int> labels{0, 1, 1, 0};
  Tensor grad;
  const double loss = softmax_cross_entropy(logits, labels, grad);
  double oracle = 0;
  for (int i = 0; i < 4; ++i) {
    const double a = logits.at(i, 0, 0, 0), b = logits.at(i, 1, 0, 0);
    const double m = std::max(a, b);
    const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
    oracle += lse - (labels[i] ? b : a);
  }
  CHECK(loss == doctest::Approx(oracle / 4).epsilon(1e-6));
  for (int i = 0; i < 4; ++i) {
    const auto p = softmax(logits)[i];
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(grad.at(i, 1, 0, 0) == doctest::Approx((p[1] - labels[i]) / 4).epsilon(1e-5));
  }

  const Tensor pred = random_tensor(2, 1, 2, 2, g);
  const double mse = mse_to_constant(pred, 1.0F, grad, 2.0);
  double ref = 0;
  for (float v : pred.data) ref += (v - 1.0) * (v - 1.0) / 8;
  CHECK(mse == doctest::Approx(ref));
  for (std::size_t i = 0; i < pred.size(); ++i) CHECK(grad.data[i] == doctest::Approx(2.0 * 2 * (pred.data[i] - 1) / 8));

  const Tensor target = random_tensor(2, 1, 2, 2, g);
  const double l1 = l1_loss(pred, target, grad);
  double r1 = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) r1 += std::abs(pred.data[i] - target.data[i]) / 8;
  CHECK(l1 == doctest::Approx(r1));
}

TEST_CASE("adam first step is lr times the gradient sign") {
  Param p(3);
  p.value = {1.0F, -2.0F, 0.5F};
  p.grad = {0.3F, -0.1F, 2.0F};
  Adam opt({&p}, {.lr = 0.01, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.0});
  opt.step();
  CHECK(p.value[0] == doctest::Approx(0.99).epsilon(1e-5));
  CHECK(p.value[1] == doctest::Approx(-1.99).epsilon(1e-5));
  CHECK(p.value[2] == doctest::Approx(0.49).epsilon(1e-5));
  opt.zero_grad();
  CHECK(p.grad[0] == 0.0F);

  Param q(1);
  q.value = {2.0F};
  q.grad = {0.0F};
  Adam decay({&q}, {.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.5});
  decay.step();
  CHECK(q.value[0] == doctest::Approx(1.9).epsilon(1e-5));
}

TEST_CASE("state and bundle round trip") {
  testing::TempDir dir("bundle");
  Rng rng(8);
  ResNetConfig cfg;
  cfg.image_side = 16;
  cfg.base_width = 4;
  auto a = build_resnet(cfg, rng);
  Rng rng2(9);
  auto b = build_resnet(cfg, rng2);
  Bundle bundle;
  bundle.header = {{"kind", "test"}, {"value", 3}};
  bundle.tensors = state_of(*a);
  write_bundle(dir.str("a.bundle"), bundle);
  const Bundle back = read_bundle(dir.str("a.bundle"), "test");
  CHECK(back.header == bundle.header);
  CHECK(back.tensors == bundle.tensors);
  CHECK(tensors_hash(back.tensors) == tensors_hash(bundle.tensors));
  load_state(*b, back.tensors);
  CHECK(state_of(*b) == bundle.tensors);
  CHECK(tensors_hash(state_of(*b)) != tensors_hash(state_of(*build_resnet(cfg, rng2))));

  CHECK_THROWS_AS(read_bundle(dir.str("a.bundle"), "other"), ParseError);
  std::ofstream(dir.str("junk.bundle")) << "not a bundle";
  CHECK_THROWS_AS(read_bundle(dir.str("junk.bundle")), ParseError);
  auto wrong = bundle.tensors;
  wrong.pop_back();
  CHECK_THROWS_AS(load_state(*b, wrong), Error);
}

TEST_CASE("model configs validate") {
  ResNetConfig r;
  r.image_side = 0;
  CHECK_THROWS_AS(r.validate(), ValidationError);
  GeneratorConfig gc;
  gc.output_init_std = -1;
  CHECK_THROWS_AS(gc.validate(), ValidationError);
  const ResNetConfig r18 = ResNetConfig::resnet18();
  CHECK(r18.blocks_per_stage == 2);
  CHECK(r18.base_width == 64);
  CHECK(r18.imagenet_stem);
  Rng rng(0);
  ResNetConfig small;
  small.image_side = 32;
  auto net = build_resnet(small, rng);
  const Tensor out = net->forward(Tensor(2, 3, 32, 32, 0.5F), false);
  CHECK(out.n == 2);
  CHECK(out.c == 2);
}
