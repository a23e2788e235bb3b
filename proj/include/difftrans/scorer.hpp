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

// Confidence scorer and downstream classifiers: a residual CNN trained
// with Adam + L2, exponential learning-rate decay and online color
// jitter, evaluated by test-set AUC after every epoch.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "difftrans/dataset.hpp"
#include "difftrans/image.hpp"
#include "difftrans/nn/layers.hpp"
#include "difftrans/nn/models.hpp"
#include "difftrans/random.hpp"
#include "json.hpp"

namespace difftrans::scorer {

// Uniform factors as in torchvision's ColorJitter: brightness, contrast and
// saturation in [1 - r, 1 + r], hue shift in [-r, r], applied in random order.
struct JitterConfig {
  bool enabled = true;
  double brightness = 0.5;
  double contrast = 0.5;
  double saturation = 0.5;
  double hue = 0.2;
};
void to_json(nlohmann::json& j, const JitterConfig& c);
void from_json(const nlohmann::json& j, JitterConfig& c);

void color_jitter(Image& img, Rng& rng, const JitterConfig& config);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double initial_lr = 1e-3;
  double lr_decay = 0.91;  // multiplicative, per epoch
  double weight_decay = 1e-4;
  JitterConfig jitter;
  nn::ResNetConfig arch;
  // 1-based epoch numbers after which a checkpoint is kept. Empty keeps
  // only the final epoch.
  std::vector<int> checkpoint_epochs;
  std::uint64_t seed = 0;

  void validate() const;
  std::string hash() const;
  double learning_rate(int epoch) const;  // 0-based epoch
};
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Images with labels; `agreement` is used to stratify evaluation.
struct LabeledSet {
  std::vector<std::string> ids;
  std::vector<Image> images;
  std::vector<ClassId> labels;
  std::vector<Agreement> agreement;

  std::size_t size() const { return images.size(); }
  void append(const LabeledSet& other);
};

LabeledSet load_split(const DatasetManifest& manifest, Split split);
LabeledSet load_records(const DatasetManifest& manifest, const std::vector<const PatchRecord*>& records);

class Classifier;

struct ScorerCheckpoint {
  int epoch = 0;
  std::string training_config_hash;
  nn::ResNetConfig arch;
  std::vector<std::vector<float>> state;

  void save(const std::string& path) const;
  static ScorerCheckpoint load(const std::string& path);
  // All-zero weights: every logit is 0, so every confidence is 0.5.
  static ScorerCheckpoint degenerate(const nn::ResNetConfig& arch);
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;
  // NaN when the stratum lacks one of the classes or no eval set is given.
  double auc_all = 0.0, auc_high = 0.0, auc_low = 0.0;
};

struct TrainResult {
  std::vector<ScorerCheckpoint> checkpoints;
  std::vector<EpochLog> log;
};

// Trains on `train` (plus `extra`, when given) and evaluates on `eval`
// after every epoch.
TrainResult train_classifier(const LabeledSet& train, const LabeledSet* eval, const TrainConfig& config,
                             const LabeledSet* extra = nullptr,
                             const std::function<void(const EpochLog&)>& on_epoch = {});

struct ConfidenceScore {
  std::string patch_id;
  int checkpoint_epoch = 0;
  double own_class_confidence = 0.0;  // softmax probability of the gold class
  double p_second_class = 0.0;         // softmax probability of class 1
  ClassId predicted_class = 0;
  ClassId gold_class = 0;

  double predicted_confidence() const { return std::max(p_second_class, 1.0 - p_second_class); }
};

// Inference-only wrapper around a checkpoint. Scoring never applies jitter.
class Classifier {
 public:
  explicit Classifier(const ScorerCheckpoint& checkpoint);
  ~Classifier();
  Classifier(Classifier&&) noexcept;
  Classifier& operator=(Classifier&&) noexcept;

  // Softmax probability of class 1 for every image.
  std::vector<double> predict(const std::vector<Image>& images, int batch_size = 64) const;
  int epoch() const { return epoch_; }
  int image_side() const { return arch_.image_side; }

 private:
  nn::ResNetConfig arch_;
  int epoch_;
  std::unique_ptr<nn::Sequential> net_;
};

std::vector<ConfidenceScore> score(const ScorerCheckpoint& checkpoint, const LabeledSet& data);

void save_scores(const std::vector<ConfidenceScore>& scores, const ClassNames& classes, const std::string& path);
std::vector<ConfidenceScore> load_scores(const std::string& path, const ClassNames& classes);

// Checkpoints at 17, 19, 21, 23 ("earlier"), 25 (initial scorer) and
// 27, 29, 31, 33 ("later").
inline constexpr std::array<int, 4> kEarlierEpochs{17, 19, 21, 23};
inline constexpr int kInitialEpoch = 25;
inline constexpr std::array<int, 4> kLaterEpochs{27, 29, 31, 33};

struct Ladder {
  std::vector<ScorerCheckpoint> earlier;
  ScorerCheckpoint initial;
  std::vector<ScorerCheckpoint> later;
  std::vector<EpochLog> log;

  std::size_t size() const { return earlier.size() + 1 + later.size(); }
};

// Requires config.epochs >= 33.
Ladder checkpoint_ladder(const LabeledSet& train, const LabeledSet* eval, TrainConfig config);

void write_training_log(const std::vector<EpochLog>& log, const std::string& path);

}  // namespace difftrans::scorer
