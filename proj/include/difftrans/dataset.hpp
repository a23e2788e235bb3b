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

// Dataset model: patch records with three annotator labels, derived gold
// label and agreement level, manifest I/O and slide-level splitting.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace difftrans {

// Index into DatasetManifest::class_names (0 or 1).
using ClassId = std::uint8_t;

enum class Agreement : std::uint8_t { kTwoOfThree, kThreeOfThree };
enum class Split : std::uint8_t { kTrain, kTest };

const char* to_string(Agreement a);
const char* to_string(Split s);
Split parse_split(const std::string& s);

using ClassNames = std::array<std::string, 2>;
inline const ClassNames kDefaultClassNames{"HP", "SSA"};

struct GoldLabel {
  ClassId gold;
  Agreement agreement;
  friend bool operator==(const GoldLabel&, const GoldLabel&) = default;
};

GoldLabel derive_gold_and_agreement(const std::array<ClassId, 3>& labels);
// Validates names against `classes`; throws ValidationError otherwise.
GoldLabel derive_gold_and_agreement(std::span<const std::string> labels, const ClassNames& classes);

struct PatchRecord {
  std::string patch_id;
  std::string slide_id;
  std::string image_ref;  // relative to the manifest directory unless absolute
  std::array<ClassId, 3> annotator_labels{};
  Split split = Split::kTrain;

  GoldLabel gold() const { return derive_gold_and_agreement(annotator_labels); }
  ClassId gold_label() const { return gold().gold; }
  Agreement agreement() const { return gold().agreement; }
  friend bool operator==(const PatchRecord&, const PatchRecord&) = default;
};

struct DatasetManifest {
  std::vector<PatchRecord> records;
  ClassNames class_names = kDefaultClassNames;
  int image_side = 64;
  // Directory image_refs are resolved against. Not serialized.
  std::string base_dir;

  std::string resolve(const PatchRecord& r) const;
  std::optional<ClassId> class_id(const std::string& name) const;
  std::vector<const PatchRecord*> select(Split split) const;
  const PatchRecord* find(const std::string& patch_id) const;

  // Throws ValidationError on duplicate ids or a slide appearing in both splits.
  void validate() const;

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.records == b.records && a.class_names == b.class_names &&
           a.image_side == b.image_side;
  }
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

// Assigns whole slides to TRAIN/TEST. Slides are ordered by id, shuffled
// with mt19937_64(seed) (Fisher-Yates via uniform_index) and taken into
// TRAIN while the train patch count stays closest to the target.
DatasetManifest split_by_slide(const DatasetManifest& manifest, double train_fraction,
                               std::uint64_t seed);

struct VerifyReport {
  bool ok = true;
  std::vector<std::string> problems;
};

// Checks invariants and (optionally) that every image exists with the
// configured side length.
VerifyReport verify_manifest(const DatasetManifest& manifest, bool check_images);

// Per split and agreement level, count of images per gold class.
struct StratumCounts {
  // [split][agreement][class]
  std::array<std::array<std::array<std::size_t, 2>, 2>, 2> counts{};
  std::size_t at(Split s, Agreement a, ClassId c) const {
    return counts[static_cast<int>(s)][static_cast<int>(a)][c];
  }
};
StratumCounts count_strata(const DatasetManifest& manifest);

}  // namespace difftrans
