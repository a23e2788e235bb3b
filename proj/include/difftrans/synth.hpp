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

// Synthetic two-class patch generator. Each patch has a feature intensity
// t in [0, 1]: the contrast of a class-specific motif drawn over a stained
// noise texture. At t = 0 the two classes are indistinguishable. Three
// simulated annotators flip the true class with a probability that falls
// as t rises.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "difftrans/dataset.hpp"
#include "difftrans/image.hpp"
#include "json.hpp"

namespace difftrans::synth {

struct RenderParams {
  int side = 64;
  double noise_level = 0.05;   // stddev of per-pixel noise
  double max_contrast = 0.22;  // motif amplitude at t = 1
  std::array<double, 3> stain{0.80, 0.55, 0.72};
};

// Deterministic in (cls, t, seed, params). Class 0 draws a rotated lattice
// of round gland-like spots, class 1 draws sawtooth bands.
Image render_patch(ClassId cls, double t, std::uint64_t seed, const RenderParams& params);

// Annotator error rate e(t) = floor + (ceiling - floor) * (1 - t)^power.
struct ErrorCurve {
  double floor = 0.02;
  double ceiling = 0.45;
  double power = 2.0;

  double operator()(double t) const;
  void validate() const;  // monotone decreasing and below 0.5
};

// P(all three annotators agree | t) under independent flips.
double agreement_probability(double error_rate);

struct IntensityDistribution {
  enum class Kind { kUniform, kPoint } kind = Kind::kUniform;
  double lo = 0.0;  // uniform lower bound / point mass location
  double hi = 1.0;  // uniform upper bound
  static IntensityDistribution parse(const std::string& spec);  // "uniform:0,1" or "point:1"
  std::string to_string() const;
};

struct SynthConfig {
  int n_slides = 40;
  int patches_per_slide = 25;
  double class_balance = 0.7;  // probability of class 0
  IntensityDistribution intensity;
  ErrorCurve error_curve;
  RenderParams render;
  double train_fraction = 0.65;
  ClassNames class_names = kDefaultClassNames;
  std::uint64_t seed = 0;
};

struct SynthTruth {
  std::string patch_id;
  ClassId true_class;
  double t;
};

struct SynthResult {
  DatasetManifest manifest;
  std::vector<SynthTruth> truth;
  std::string manifest_path;
  std::string truth_path;
};

// Writes images/<patch_id>.png, manifest.tsv and truth.tsv into out_dir.
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

SynthResult generate_dataset(const SynthConfig& config, const std::string& out_dir);

// truth.tsv: patch_id<TAB>t, consumed by tests only.
std::vector<std::pair<std::string, double>> load_truth(const std::string& path);

}  // namespace difftrans::synth
