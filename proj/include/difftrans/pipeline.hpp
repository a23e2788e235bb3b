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

// End-to-end experiment graph with content-keyed completion markers.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "difftrans/augmenter.hpp"
#include "difftrans/errors.hpp"
#include "difftrans/partition.hpp"
#include "difftrans/scorer.hpp"
#include "difftrans/synth.hpp"
#include "difftrans/translator.hpp"
#include "json.hpp"

namespace difftrans::pipeline {

struct DatasetSource {
  std::string manifest;                   // existing manifest, or
  std::optional<synth::SynthConfig> synth;  // generated into <output>/data
};

struct PartitionSettings {
  std::vector<double> phis{50.0, 25.0, 12.5};
  double easy_fraction = 50.0;
  std::size_t min_target = 100;
  std::string class_name;  // empty selects the first class
  partition::ConfidenceMode mode = partition::ConfidenceMode::kGoldClass;
};

struct AugmentSettings {
  augmenter::CombineMode naive_mode = augmenter::CombineMode::kSplice;
  // Number of naive images; empty matches the kept count at naive_phi.
  std::optional<std::size_t> naive_count;
  double naive_phi = 25.0;
};

struct ExperimentConfig {
  DatasetSource dataset;
  scorer::TrainConfig scorer;
  int score_epoch = scorer::kInitialEpoch;
  PartitionSettings partition;
  translator::TranslatorConfig translator;
  AugmentSettings augment;
  scorer::TrainConfig classifier;
  int n_seeds = 5;
  // Classifier variants to train; empty trains unmodified, naive and every phi.
  std::vector<std::string> variants;
  std::size_t histogram_bins = 20;
  std::string output_dir = "experiment";
  bool deterministic = true;
  std::uint64_t seed = 0;

  void validate() const;
  std::string hash() const;
  std::vector<std::string> resolved_variants() const;
};
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// Throws ParseError on malformed JSON and ValidationError on invalid values.
ExperimentConfig load_config(const std::string& path);

// "50", "25", "12.5".
std::string phi_tag(double phi);

// Relative output directories resolve against DIFFTRANS_OUTPUT_ROOT when set.
std::string resolve_output_dir(const std::string& dir);

class StageFailure : public Error {
 public:
  StageFailure(const std::string& stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageRecord {
  std::string name;
  std::string key;
  bool executed = false;
};

struct RunReport {
  std::string output_dir;
  std::vector<StageRecord> stages;

  std::vector<std::string> executed() const;
};

struct RunOptions {
  std::function<void(const std::string&)> log;
};

// Runs every stage whose marker is missing, stale or downstream of a stage
// that ran. Throws StageFailure naming the first failing stage.
RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Names of the machine-readable report files under <output>/reports.
inline const std::vector<std::string> kReportFiles{"auc_table.tsv",         "ks_agreement.tsv",
                                                   "histograms.tsv",        "maintained_label.tsv",
                                                   "difficulty_shift.tsv",  "stage_keys.tsv"};

}  // namespace difftrans::pipeline
