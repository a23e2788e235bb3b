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

// Splits one class's scored images into the easy (source) and hard
// (target) domains used to train the translator.

#include <cstddef>
#include <string>
#include <vector>

#include "difftrans/dataset.hpp"
#include "difftrans/scorer.hpp"

namespace difftrans::partition {

enum class ConfidenceMode {
  kGoldClass,       // softmax probability of the image's gold class
  kPredictedClass,  // softmax probability of the predicted class
};

struct PartitionConfig {
  double phi = 50.0;            // percent of the class used as the hard domain
  double easy_fraction = 50.0;  // percent of the class used as the easy domain
  std::size_t min_target = 100;
  ConfidenceMode mode = ConfidenceMode::kGoldClass;
};

struct DomainPartition {
  ClassId class_id = 0;
  double phi = 0.0;
  double easy_fraction = 0.0;
  int scorer_epoch = 0;
  // Both sets ordered by ascending (confidence, patch_id).
  std::vector<std::string> hard_set;
  std::vector<std::string> easy_set;
  // Every input, ordered by ascending (confidence, patch_id).
  std::vector<std::pair<std::string, double>> ranked;
};

enum class Domain { kEasy, kHard, kNeither };
const char* to_string(Domain d);

// floor(percent / 100 * n), robust to representation error.
std::size_t percent_count(double percent, std::size_t n);

// Throws MinTargetViolation when the hard set is smaller than
// config.min_target, ValidationError on mixed classes or phi outside (0, 100].
DomainPartition partition(const std::vector<scorer::ConfidenceScore>& scores, const PartitionConfig& config);

Domain domain_of(const DomainPartition& p, const std::string& patch_id);

// patch_id, domain (EASY/HARD/NEITHER), confidence.
void save_partition(const DomainPartition& p, const ClassNames& classes, const std::string& path);
DomainPartition load_partition(const std::string& path, const ClassNames& classes);

}  // namespace difftrans::partition
