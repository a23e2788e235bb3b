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

#include "difftrans/nn/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "difftrans/errors.hpp"

namespace difftrans::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void fill_normal(std::vector<float>& v, Rng& rng, double stddev) {
  for (float& x : v) x = static_cast<float>(normal(rng, 0.0, stddev));
}

void check_channels(const Tensor& x, int expected, const char* layer) {
  if (x.c != expected)
    throw ValidationError(std::string(layer) + ": expected " + std::to_string(expected) +
                          " input channels, got " + std::to_string(x.c));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, Rng& rng,
               double init_std, bool bias)
    : in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      has_bias_(bias),
      weight_(static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel),
      bias_(bias ? static_cast<std::size_t>(out_channels) : 0) {
  const double stddev = init_std == kHeInit ? std::sqrt(2.0 / (in_channels * kernel * kernel)) : init_std;
  fill_normal(weight_.value, rng, stddev);
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  check_channels(x, in_, "Conv2d");
  n_ = x.n;
  h_ = x.h;
  w_ = x.w;
  ho_ = (h_ + 2 * pad_ - k_) / stride_ + 1;
  wo_ = (w_ + 2 * pad_ - k_) / stride_ + 1;
  if (ho_ <= 0 || wo_ <= 0) throw ValidationError("Conv2d: input too small for kernel");
  const int kk = in_ * k_ * k_;
  const std::size_t p = static_cast<std::size_t>(ho_) * wo_;
  const std::size_t np = p * n_;
  cols_.assign(static_cast<std::size_t>(kk) * np, 0.0F);
  for (int ci = 0; ci < in_; ++ci) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        float* row = cols_.data() + static_cast<std::size_t>((ci * k_ + ky) * k_ + kx) * np;
        for (int b = 0; b < n_; ++b) {
          const float* src = x.sample(b) + static_cast<std::size_t>(ci) * h_ * w_;
          float* dst = row + b * p;
          for (int oy = 0; oy < ho_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h_) continue;
            const float* srow = src + static_cast<std::size_t>(iy) * w_;
            float* drow = dst + static_cast<std::size_t>(oy) * wo_;
            for (int ox = 0; ox < wo_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < w_) drow[ox] = srow[ix];
            }
          }
        }
      }
    }
  }
  RowMat y(out_, static_cast<Eigen::Index>(np));
  y.noalias() = ConstMapMat(weight_.value.data(), out_, kk) *
                ConstMapMat(cols_.data(), kk, static_cast<Eigen::Index>(np));
  Tensor out(n_, out_, ho_, wo_);
  for (int b = 0; b < n_; ++b) {
    for (int co = 0; co < out_; ++co) {
      const float bias = has_bias_ ? bias_.value[co] : 0.0F;
      const float* src = y.data() + static_cast<std::size_t>(co) * np + b * p;
      float* dst = out.sample(b) + co * p;
      for (std::size_t i = 0; i < p; ++i) dst[i] = src[i] + bias;
    }
  }
  if (!train) {
    cols_.clear();
    cols_.shrink_to_fit();
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& g) {
  if (cols_.empty()) throw Error("Conv2d::backward without a training forward pass");
  const int kk = in_ * k_ * k_;
  const std::size_t p = static_cast<std::size_t>(ho_) * wo_;
  const std::size_t np = p * n_;
  RowMat dy(out_, static_cast<Eigen::Index>(np));
  for (int b = 0; b < n_; ++b)
    for (int co = 0; co < out_; ++co)
      std::copy_n(g.sample(b) + co * p, p, dy.data() + static_cast<std::size_t>(co) * np + b * p);

  MapMat(weight_.grad.data(), out_, kk).noalias() +=
      dy * ConstMapMat(cols_.data(), kk, static_cast<Eigen::Index>(np)).transpose();
  if (has_bias_) {
    for (int co = 0; co < out_; ++co) bias_.grad[co] += dy.row(co).sum();
  }
  RowMat dcols(kk, static_cast<Eigen::Index>(np));
  dcols.noalias() = ConstMapMat(weight_.value.data(), out_, kk).transpose() * dy;

  Tensor dx(n_, in_, h_, w_);
  for (int ci = 0; ci < in_; ++ci) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const float* row = dcols.data() + static_cast<std::size_t>((ci * k_ + ky) * k_ + kx) * np;
        for (int b = 0; b < n_; ++b) {
          float* dst = dx.sample(b) + static_cast<std::size_t>(ci) * h_ * w_;
          const float* src = row + b * p;
          for (int oy = 0; oy < ho_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h_) continue;
            float* drow = dst + static_cast<std::size_t>(iy) * w_;
            const float* srow = src + static_cast<std::size_t>(oy) * wo_;
            for (int ox = 0; ox < wo_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < w_) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
  return dx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

void Conv2d::clear_cache() {
  cols_.clear();
  cols_.shrink_to_fit();
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features, Rng& rng, double init_std)
    : in_(in_features),
      out_(out_features),
      weight_(static_cast<std::size_t>(in_features) * out_features),
      bias_(static_cast<std::size_t>(out_features)) {
  const double stddev = init_std == kHeInit ? std::sqrt(1.0 / in_features) : init_std;
  fill_normal(weight_.value, rng, stddev);
}

Tensor Linear::forward(const Tensor& x, bool train) {
  if (static_cast<int>(x.sample_size()) != in_)
    throw ValidationError("Linear: expected " + std::to_string(in_) + " input features");
  Tensor out(x.n, out_, 1, 1);
  MapMat y(out.data.data(), x.n, out_);
  y.noalias() = ConstMapMat(x.data.data(), x.n, in_) * ConstMapMat(weight_.value.data(), out_, in_).transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias_.value.data(), out_);
  if (train) input_ = x;
  return out;
}

Tensor Linear::backward(const Tensor& g) {
  const int n = input_.n;
  ConstMapMat dy(g.data.data(), n, out_);
  ConstMapMat xin(input_.data.data(), n, in_);
  MapMat(weight_.grad.data(), out_, in_).noalias() += dy.transpose() * xin;
  Eigen::Map<Eigen::RowVectorXf>(bias_.grad.data(), out_) += dy.colwise().sum();
  Tensor dx(input_.n, input_.c, input_.h, input_.w);
  MapMat(dx.data.data(), n, in_).noalias() = dy * ConstMapMat(weight_.value.data(), out_, in_);
  return dx;
}

void Linear::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, double momentum, double eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(static_cast<std::size_t>(channels)),
      beta_(static_cast<std::size_t>(channels)),
      running_mean_(static_cast<std::size_t>(channels), 0.0F),
      running_var_(static_cast<std::size_t>(channels), 1.0F) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0F);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
  check_channels(x, channels_, "BatchNorm2d");
  Tensor out = x.zeros_like();
  const std::size_t p = x.plane();
  const double m = static_cast<double>(x.n) * p;
  if (train) {
    xhat_ = x.zeros_like();
    inv_std_.assign(channels_, 0.0F);
  }
  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (train) {
      double s = 0.0, ss = 0.0;
      for (int b = 0; b < x.n; ++b) {
        const float* src = x.sample(b) + c * p;
        for (std::size_t i = 0; i < p; ++i) s += src[i];
      }
      mean = s / m;
      for (int b = 0; b < x.n; ++b) {
        const float* src = x.sample(b) + c * p;
        for (std::size_t i = 0; i < p; ++i) ss += (src[i] - mean) * (src[i] - mean);
      }
      var = ss / m;
      running_mean_[c] = static_cast<float>((1 - momentum_) * running_mean_[c] + momentum_ * mean);
      const double unbiased = m > 1 ? ss / (m - 1) : var;
      running_var_[c] = static_cast<float>((1 - momentum_) * running_var_[c] + momentum_ * unbiased);
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps_));
    const float gm = gamma_.value[c], bt = beta_.value[c];
    const float mu = static_cast<float>(mean);
    if (train) inv_std_[c] = inv;
    for (int b = 0; b < x.n; ++b) {
      const float* src = x.sample(b) + c * p;
      float* dst = out.sample(b) + c * p;
      float* xh = train ? xhat_.sample(b) + c * p : nullptr;
      for (std::size_t i = 0; i < p; ++i) {
        const float v = (src[i] - mu) * inv;
        if (xh) xh[i] = v;
        dst[i] = gm * v + bt;
      }
    }
  }
  cached_train_ = train;
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& g) {
  if (!cached_train_) throw Error("BatchNorm2d::backward without a training forward pass");
  Tensor dx = g.zeros_like();
  const std::size_t p = g.plane();
  const double m = static_cast<double>(g.n) * p;
  for (int c = 0; c < channels_; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int b = 0; b < g.n; ++b) {
      const float* gs = g.sample(b) + c * p;
      const float* xh = xhat_.sample(b) + c * p;
      for (std::size_t i = 0; i < p; ++i) {
        sum_g += gs[i];
        sum_gx += gs[i] * xh[i];
      }
    }
    gamma_.grad[c] += static_cast<float>(sum_gx);
    beta_.grad[c] += static_cast<float>(sum_g);
    const double scale = gamma_.value[c] * inv_std_[c] / m;
    for (int b = 0; b < g.n; ++b) {
      const float* gs = g.sample(b) + c * p;
      const float* xh = xhat_.sample(b) + c * p;
      float* d = dx.sample(b) + c * p;
      for (std::size_t i = 0; i < p; ++i)
        d[i] = static_cast<float>(scale * (m * gs[i] - sum_g - xh[i] * sum_gx));
    }
  }
  return dx;
}

void BatchNorm2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void BatchNorm2d::collect_buffers(std::vector<std::vector<float>*>& out) {
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// ---------------------------------------------------------------- InstanceNorm2d

Tensor InstanceNorm2d::forward(const Tensor& x, bool train) {
  Tensor out = x.zeros_like();
  const std::size_t p = x.plane();
  if (train) {
    xhat_ = x.zeros_like();
    inv_std_.assign(static_cast<std::size_t>(x.n) * x.c, 0.0F);
  }
  for (int b = 0; b < x.n; ++b) {
    for (int c = 0; c < x.c; ++c) {
      const float* src = x.sample(b) + c * p;
      double s = 0.0, ss = 0.0;
      for (std::size_t i = 0; i < p; ++i) s += src[i];
      const double mean = s / p;
      for (std::size_t i = 0; i < p; ++i) ss += (src[i] - mean) * (src[i] - mean);
      const float inv = static_cast<float>(1.0 / std::sqrt(ss / p + eps_));
      const float mu = static_cast<float>(mean);
      float* dst = out.sample(b) + c * p;
      for (std::size_t i = 0; i < p; ++i) dst[i] = (src[i] - mu) * inv;
      if (train) {
        inv_std_[static_cast<std::size_t>(b) * x.c + c] = inv;
        std::copy_n(dst, p, xhat_.sample(b) + c * p);
      }
    }
  }
  return out;
}

Tensor InstanceNorm2d::backward(const Tensor& g) {
  if (xhat_.data.empty()) throw Error("InstanceNorm2d::backward without a training forward pass");
  Tensor dx = g.zeros_like();
  const std::size_t p = g.plane();
  const double m = static_cast<double>(p);
  for (int b = 0; b < g.n; ++b) {
    for (int c = 0; c < g.c; ++c) {
      const float* gs = g.sample(b) + c * p;
      const float* xh = xhat_.sample(b) + c * p;
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t i = 0; i < p; ++i) {
        sum_g += gs[i];
        sum_gx += gs[i] * xh[i];
      }
      const double scale = inv_std_[static_cast<std::size_t>(b) * g.c + c] / m;
      float* d = dx.sample(b) + c * p;
      for (std::size_t i = 0; i < p; ++i)
        d[i] = static_cast<float>(scale * (m * gs[i] - sum_g - xh[i] * sum_gx));
    }
  }
  return dx;
}

// ---------------------------------------------------------------- ReLU

Tensor ReLU::forward(const Tensor& x, bool train) {
  Tensor out = x;
  for (float& v : out.data)
    if (v < 0.0F) v *= slope_;
  if (train) input_ = x;
  return out;
}

Tensor ReLU::backward(const Tensor& g) {
  Tensor dx = g;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (input_.data[i] < 0.0F) dx.data[i] *= slope_;
  return dx;
}

// ---------------------------------------------------------------- MaxPool2d

Tensor MaxPool2d::forward(const Tensor& x, bool train) {
  n_ = x.n;
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  const int ho = (h_ + 2 * pad_ - k_) / stride_ + 1;
  const int wo = (w_ + 2 * pad_ - k_) / stride_ + 1;
  Tensor out(n_, c_, ho, wo);
  if (train) argmax_.assign(out.size(), -1);
  std::size_t o = 0;
  for (int b = 0; b < n_; ++b) {
    for (int c = 0; c < c_; ++c) {
      const float* src = x.sample(b) + c * x.plane();
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox, ++o) {
          float best = -std::numeric_limits<float>::infinity();
          int arg = -1;
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h_) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= w_) continue;
              if (src[iy * w_ + ix] > best) {
                best = src[iy * w_ + ix];
                arg = iy * w_ + ix;
              }
            }
          }
          out.data[o] = best;
          if (train) argmax_[o] = arg;
        }
      }
    }
  }
  return out;
}

Tensor MaxPool2d::backward(const Tensor& g) {
  Tensor dx(n_, c_, h_, w_);
  const std::size_t per_plane = g.plane();
  for (std::size_t o = 0; o < g.size(); ++o) {
    if (argmax_[o] < 0) continue;
    const std::size_t plane_index = o / per_plane;
    dx.data[plane_index * dx.plane() + argmax_[o]] += g.data[o];
  }
  return dx;
}

// ---------------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x, bool) {
  h_ = x.h;
  w_ = x.w;
  Tensor out(x.n, x.c, 1, 1);
  const std::size_t p = x.plane();
  for (int b = 0; b < x.n; ++b)
    for (int c = 0; c < x.c; ++c) {
      const float* src = x.sample(b) + c * p;
      double s = 0.0;
      for (std::size_t i = 0; i < p; ++i) s += src[i];
      out.at(b, c, 0, 0) = static_cast<float>(s / p);
    }
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& g) {
  Tensor dx(g.n, g.c, h_, w_);
  const std::size_t p = dx.plane();
  const float inv = 1.0F / static_cast<float>(p);
  for (int b = 0; b < g.n; ++b)
    for (int c = 0; c < g.c; ++c) {
      float* d = dx.sample(b) + c * p;
      std::fill(d, d + p, g.at(b, c, 0, 0) * inv);
    }
  return dx;
}

// ---------------------------------------------------------------- Upsample2x

Tensor Upsample2x::forward(const Tensor& x, bool) {
  Tensor out(x.n, x.c, x.h * 2, x.w * 2);
  for (int b = 0; b < x.n; ++b)
    for (int c = 0; c < x.c; ++c)
      for (int y = 0; y < out.h; ++y)
        for (int xx = 0; xx < out.w; ++xx) out.at(b, c, y, xx) = x.at(b, c, y / 2, xx / 2);
  return out;
}

Tensor Upsample2x::backward(const Tensor& g) {
  Tensor dx(g.n, g.c, g.h / 2, g.w / 2);
  for (int b = 0; b < g.n; ++b)
    for (int c = 0; c < g.c; ++c)
      for (int y = 0; y < g.h; ++y)
        for (int xx = 0; xx < g.w; ++xx) dx.at(b, c, y / 2, xx / 2) += g.at(b, c, y, xx);
  return dx;
}

// ---------------------------------------------------------------- Clamp01

Tensor Clamp01::forward(const Tensor& x, bool train) {
  Tensor out = x;
  for (float& v : out.data) v = std::clamp(v, 0.0F, 1.0F);
  if (train) input_ = x;
  return out;
}

Tensor Clamp01::backward(const Tensor& g) {
  Tensor dx = g;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (input_.data[i] < 0.0F || input_.data[i] > 1.0F) dx.data[i] = 0.0F;
  return dx;
}

// ---------------------------------------------------------------- Sequential

Tensor Sequential::forward(const Tensor& x, bool train) {
  Tensor cur = x;
  for (auto& l : layers_) cur = l->forward(cur, train);
  return cur;
}

Tensor Sequential::backward(const Tensor& g) {
  Tensor cur = g;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  return cur;
}

void Sequential::collect_params(std::vector<Param*>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

void Sequential::collect_buffers(std::vector<std::vector<float>*>& out) {
  for (auto& l : layers_) l->collect_buffers(out);
}

void Sequential::clear_cache() {
  for (auto& l : layers_) l->clear_cache();
}

// ---------------------------------------------------------------- Residual

Residual::Residual(LayerPtr body, LayerPtr shortcut, bool relu_after)
    : body_(std::move(body)), shortcut_(std::move(shortcut)), relu_after_(relu_after) {}

Tensor Residual::forward(const Tensor& x, bool train) {
  Tensor y = body_->forward(x, train);
  const Tensor s = shortcut_ ? shortcut_->forward(x, train) : x;
  if (!y.same_shape(s)) throw ValidationError("Residual: body and shortcut shapes differ");
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += s.data[i];
  if (relu_after_) {
    if (train) sum_ = y;
    for (float& v : y.data) v = std::max(v, 0.0F);
  }
  return y;
}

Tensor Residual::backward(const Tensor& g) {
  Tensor gs = g;
  if (relu_after_)
    for (std::size_t i = 0; i < gs.size(); ++i)
      if (sum_.data[i] <= 0.0F) gs.data[i] = 0.0F;
  Tensor dx = body_->backward(gs);
  const Tensor ds = shortcut_ ? shortcut_->backward(gs) : gs;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += ds.data[i];
  return dx;
}

void Residual::collect_params(std::vector<Param*>& out) {
  body_->collect_params(out);
  if (shortcut_) shortcut_->collect_params(out);
}

void Residual::collect_buffers(std::vector<std::vector<float>*>& out) {
  body_->collect_buffers(out);
  if (shortcut_) shortcut_->collect_buffers(out);
}

void Residual::clear_cache() {
  body_->clear_cache();
  if (shortcut_) shortcut_->clear_cache();
  sum_ = Tensor();
}

// ---------------------------------------------------------------- helpers

std::vector<Param*> parameters(Layer& layer) {
  std::vector<Param*> out;
  layer.collect_params(out);
  return out;
}

std::size_t parameter_count(Layer& layer) {
  std::size_t n = 0;
  for (const Param* p : parameters(layer)) n += p->value.size();
  return n;
}

void zero_grad(Layer& layer) {
  for (Param* p : parameters(layer)) std::fill(p->grad.begin(), p->grad.end(), 0.0F);
}

std::vector<std::vector<float>> state_of(Layer& layer) {
  std::vector<std::vector<float>> out;
  for (const Param* p : parameters(layer)) out.push_back(p->value);
  std::vector<std::vector<float>*> buffers;
  layer.collect_buffers(buffers);
  for (const auto* b : buffers) out.push_back(*b);
  return out;
}

void load_state(Layer& layer, const std::vector<std::vector<float>>& state) {
  std::vector<std::vector<float>*> slots;
  for (Param* p : parameters(layer)) slots.push_back(&p->value);
  layer.collect_buffers(slots);
  if (slots.size() != state.size())
    throw ValidationError("state has " + std::to_string(state.size()) + " tensors, network expects " +
                          std::to_string(slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]->size() != state[i].size())
      throw ValidationError("state tensor " + std::to_string(i) + " has wrong size");
    *slots[i] = state[i];
  }
}

}  // namespace difftrans::nn
