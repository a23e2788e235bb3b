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

// Unpaired easy-to-hard image translation with a cycle-consistent
// adversarial pair of generators.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "difftrans/dataset.hpp"
#include "difftrans/image.hpp"
#include "difftrans/nn/layers.hpp"
#include "difftrans/nn/models.hpp"
#include "json.hpp"

namespace difftrans::translator {

enum class AdversarialLoss { kLeastSquares, kLogistic };

struct TranslatorConfig {
  AdversarialLoss adversarial = AdversarialLoss::kLeastSquares;
  double lambda_cycle = 10.0;
  // Identity term weight as a fraction of lambda_cycle.
  double identity_ratio = 0.5;
  int epochs = 200;
  int batch_size = 1;
  double lr_generator = 2e-4;
  double lr_discriminator = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int pool_size = 50;
  // 0 means ceil(max(|easy|, |hard|) / batch_size).
  int steps_per_epoch = 0;
  std::size_t min_target = 100;
  nn::GeneratorConfig generator;
  nn::DiscriminatorConfig discriminator;
  std::uint64_t seed = 0;

  double identity_weight() const { return identity_ratio * lambda_cycle; }
  // Multiplier on the base rate for a 0-based epoch: constant for the first
  // half, then linear decay towards zero.
  double lr_factor(int epoch) const;
  void validate() const;
};
void to_json(nlohmann::json& j, const TranslatorConfig& c);
void from_json(const nlohmann::json& j, TranslatorConfig& c);

struct TranslatorModel {
  TranslatorConfig config;
  ClassId class_id = 0;
  double phi = 0.0;
  std::string data_fingerprint;
  int epochs_completed = 0;
  std::vector<std::vector<float>> g_easy_to_hard, g_hard_to_easy, d_easy, d_hard;

  std::string hash() const;
  void save(const std::string& path) const;
  static TranslatorModel load(const std::string& path);
};

struct EpochTrace {
  int epoch = 0;  // 1-based
  double lr_factor = 1.0;
  double adversarial = 0.0;    // generator adversarial loss, both directions
  double cycle = 0.0;          // weighted cycle loss, both directions
  double identity = 0.0;       // weighted identity loss, both directions
  double discriminator = 0.0;  // both discriminators
};

struct TrainResult {
  TranslatorModel model;  // last finite state when aborted
  std::vector<EpochTrace> traces;
  bool aborted = false;
  std::string abort_reason;
  std::vector<std::string> warnings;
};

std::string fingerprint(const std::vector<Image>& easy, const std::vector<Image>& hard);

// Throws ValidationError for an empty domain, mismatched sizes or an invalid
// config and MinTargetViolation when |hard| < config.min_target.
TrainResult train_translator(const std::vector<Image>& easy, const std::vector<Image>& hard,
                             const TranslatorConfig& config, ClassId class_id = 0, double phi = 0.0,
                             const std::function<void(const EpochTrace&)>& on_epoch = {});

struct GeneratedImage {
  std::string patch_id;  // "gen:" + source_id
  std::string source_id;
  ClassId source_class = 0;
  double phi = 0.0;
  std::string model_hash;
  Image image;
};

class Translator {
 public:
  explicit Translator(const TranslatorModel& model, bool easy_to_hard = true);
  ~Translator();
  Translator(Translator&&) noexcept;
  Translator& operator=(Translator&&) noexcept;

  std::vector<Image> apply(const std::vector<Image>& images, int batch_size = 16) const;

 private:
  int side_;
  std::unique_ptr<nn::Sequential> net_;
};

// Throws ValidationError when an image does not match the training size.
std::vector<GeneratedImage> translate(const TranslatorModel& model, const std::vector<Image>& images,
                                      const std::vector<std::string>& source_ids);

void write_traces(const std::vector<EpochTrace>& traces, const std::string& path);

}  // namespace difftrans::translator
