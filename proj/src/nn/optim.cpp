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

#include "difftrans/nn/optim.hpp"

#include <algorithm>
#include <cmath>

#include "difftrans/errors.hpp"

namespace difftrans::nn {

Adam::Adam(std::vector<Param*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const Param* p : params_) {
    m_.emplace_back(p->value.size(), 0.0F);
    v_.emplace_back(p->value.size(), 0.0F);
  }
}

void Adam::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  const auto b1 = static_cast<float>(config_.beta1);
  const auto b2 = static_cast<float>(config_.beta2);
  const auto step_size = static_cast<float>(config_.lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(config_.eps);
  const auto wd = static_cast<float>(config_.weight_decay);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    const float decay = p.decay ? wd : 0.0F;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float g = p.grad[i] + decay * p.value[i];
      m[i] = b1 * m[i] + (1.0F - b1) * g;
      v[i] = b2 * v[i] + (1.0F - b2) * g * g;
      p.value[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0F);
}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor& grad) {
  const int n = logits.n;
  const int k = static_cast<int>(logits.sample_size());
  if (static_cast<int>(labels.size()) != n) throw ValidationError("label count does not match batch");
  grad = logits.zeros_like();
  double loss = 0.0;
  for (int b = 0; b < n; ++b) {
    const float* z = logits.sample(b);
    const double mx = *std::max_element(z, z + k);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(z[j] - mx);
    const double log_denom = std::log(denom);
    loss -= z[labels[b]] - mx - log_denom;
    float* g = grad.sample(b);
    for (int j = 0; j < k; ++j) {
      const double pj = std::exp(z[j] - mx - log_denom);
      g[j] = static_cast<float>((pj - (j == labels[b] ? 1.0 : 0.0)) / n);
    }
  }
  return loss / n;
}

std::vector<std::vector<double>> softmax(const Tensor& logits) {
  const int k = static_cast<int>(logits.sample_size());
  std::vector<std::vector<double>> out(logits.n, std::vector<double>(k));
  for (int b = 0; b < logits.n; ++b) {
    const float* z = logits.sample(b);
    const double mx = *std::max_element(z, z + k);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(z[j] - mx);
    for (int j = 0; j < k; ++j) out[b][j] = std::exp(z[j] - mx) / denom;
  }
  return out;
}

double mse_to_constant(const Tensor& pred, float target, Tensor& grad, double weight) {
  grad = pred.zeros_like();
  const double n = static_cast<double>(pred.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - target;
    loss += d * d;
    grad.data[i] = static_cast<float>(weight * 2.0 * d / n);
  }
  return loss / n;
}

double l1_loss(const Tensor& pred, const Tensor& target, Tensor& grad, double weight) {
  if (!pred.same_shape(target)) throw ValidationError("l1_loss: shape mismatch");
  grad = pred.zeros_like();
  const double n = static_cast<double>(pred.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    loss += std::abs(d);
    grad.data[i] = static_cast<float>(weight * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / n);
  }
  return loss / n;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  if (!dst.same_shape(src)) throw ValidationError("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace difftrans::nn
