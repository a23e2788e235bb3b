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

// Layers with hand-written backward passes. A layer caches what its
// backward pass needs during forward(), so every forward must be followed
// by its backward before the same layer is run forward again.

#include <memory>
#include <string>
#include <vector>

#include "difftrans/nn/tensor.hpp"
#include "difftrans/random.hpp"

namespace difftrans::nn {

// Passing this as init_std selects He (Kaiming) normal initialization.
inline constexpr double kHeInit = -1.0;

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_params(std::vector<Param*>& /*out*/) {}
  // Non-trainable persistent state (batch-norm running statistics).
  virtual void collect_buffers(std::vector<std::vector<float>*>& /*out*/) {}
  // Frees activation caches.
  virtual void clear_cache() {}
};

using LayerPtr = std::unique_ptr<Layer>;

class Conv2d : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, Rng& rng,
         double init_std = kHeInit, bool bias = true);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;
  void clear_cache() override;

 private:
  int in_, out_, k_, stride_, pad_;
  bool has_bias_;
  Param weight_, bias_;
  std::vector<float> cols_;
  int n_ = 0, h_ = 0, w_ = 0, ho_ = 0, wo_ = 0;
};

class Linear : public Layer {
 public:
  Linear(int in_features, int out_features, Rng& rng, double init_std = kHeInit);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;
  void clear_cache() override { input_ = Tensor(); }

 private:
  int in_, out_;
  Param weight_, bias_;
  Tensor input_;
};

class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_buffers(std::vector<std::vector<float>*>& out) override;
  void clear_cache() override { xhat_ = Tensor(); }

 private:
  int channels_;
  double momentum_, eps_;
  Param gamma_, beta_;
  std::vector<float> running_mean_, running_var_;
  Tensor xhat_;
  std::vector<float> inv_std_;
  bool cached_train_ = false;
};

// Per-sample, per-channel normalization without affine parameters.
class InstanceNorm2d : public Layer {
 public:
  explicit InstanceNorm2d(double eps = 1e-5) : eps_(eps) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void clear_cache() override { xhat_ = Tensor(); }

 private:
  double eps_;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

class ReLU : public Layer {
 public:
  explicit ReLU(float negative_slope = 0.0F) : slope_(negative_slope) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void clear_cache() override { input_ = Tensor(); }

 private:
  float slope_;
  Tensor input_;
};

class MaxPool2d : public Layer {
 public:
  MaxPool2d(int kernel, int stride, int pad) : k_(kernel), stride_(stride), pad_(pad) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void clear_cache() override { argmax_.clear(); }

 private:
  int k_, stride_, pad_;
  std::vector<int> argmax_;
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
};

class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  int h_ = 0, w_ = 0;
};

class Upsample2x : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
};

// Clamps to [0, 1]; gradient flows only where the input was inside.
class Clamp01 : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void clear_cache() override { input_ = Tensor(); }

 private:
  Tensor input_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  Sequential& add(LayerPtr layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  template <typename L, typename... Args>
  Sequential& emplace(Args&&... args) {
    return add(std::make_unique<L>(std::forward<Args>(args)...));
  }
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_buffers(std::vector<std::vector<float>*>& out) override;
  void clear_cache() override;
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<LayerPtr> layers_;
};

// y = body(x) + shortcut(x), optionally followed by ReLU. A null shortcut
// is the identity.
class Residual : public Layer {
 public:
  Residual(LayerPtr body, LayerPtr shortcut, bool relu_after);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<Param*>& out) override;
  void collect_buffers(std::vector<std::vector<float>*>& out) override;
  void clear_cache() override;

 private:
  LayerPtr body_, shortcut_;
  bool relu_after_;
  Tensor sum_;
};

std::vector<Param*> parameters(Layer& layer);
std::size_t parameter_count(Layer& layer);
void zero_grad(Layer& layer);

// Flattened copy of every parameter and buffer, in collection order.
std::vector<std::vector<float>> state_of(Layer& layer);
void load_state(Layer& layer, const std::vector<std::vector<float>>& state);

}  // namespace difftrans::nn
