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

#include <span>
#include <vector>

#include "difftrans/nn/tensor.hpp"

namespace difftrans::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Coupled L2 penalty added to the gradient (torch.optim.Adam semantics).
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig config);
  void step();
  void zero_grad();
  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }

 private:
  std::vector<Param*> params_;
  AdamConfig config_;
  std::vector<std::vector<float>> m_, v_;
  long step_ = 0;
};

// Mean softmax cross-entropy over a (n, k, 1, 1) logit tensor. Writes the
// gradient w.r.t. the logits into `grad`.
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor& grad);

// Row-wise softmax of (n, k, 1, 1) logits.
std::vector<std::vector<double>> softmax(const Tensor& logits);

// mean((pred - target)^2), gradient scaled by `weight`.
double mse_to_constant(const Tensor& pred, float target, Tensor& grad, double weight = 1.0);

// mean(|pred - target|), gradient scaled by `weight`.
double l1_loss(const Tensor& pred, const Tensor& target, Tensor& grad, double weight = 1.0);

void add_inplace(Tensor& dst, const Tensor& src);

}  // namespace difftrans::nn
