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

// Label-maintenance filtering, the naive combine-parts baseline and
// assembly of augmented training sets.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "difftrans/dataset.hpp"
#include "difftrans/image.hpp"
#include "difftrans/scorer.hpp"
#include "difftrans/translator.hpp"

namespace difftrans::augmenter {

struct FilterResult {
  std::vector<translator::GeneratedImage> kept;
  std::vector<translator::GeneratedImage> rejected;
  std::vector<std::string> rejection_reasons;  // parallel to rejected
  std::vector<double> p_second_class;          // per input, in input order

  std::size_t total() const { return kept.size() + rejected.size(); }
  // Percent kept; empty when there was no input.
  std::optional<double> maintained_rate() const;
};

// Keeps images whose predicted class equals their source class. Throws
// ValidationError when an image lacks a source id or model hash.
FilterResult filter_label_maintained(const std::vector<translator::GeneratedImage>& images,
                                     const scorer::ScorerCheckpoint& checkpoint);

enum class CombineMode { kSplice, kBlend };
const char* to_string(CombineMode m);
CombineMode parse_combine_mode(const std::string& s);

// Splice: left half from a, right half from b. Blend: per-pixel mean.
Image combine(const Image& a, const Image& b, CombineMode mode);

struct NaiveImage {
  Image image;
  std::size_t easy_index = 0;
  std::size_t hard_index = 0;
};

// Pairs are drawn uniformly with replacement. Throws ValidationError on an
// empty set or a size mismatch.
std::vector<NaiveImage> naive_augment(const std::vector<Image>& easy, const std::vector<Image>& hard,
                                      std::size_t n_outputs, std::uint64_t seed,
                                      CombineMode mode = CombineMode::kSplice);

std::string generated_provenance(double phi);  // GENERATED_PHI_<phi>
inline constexpr const char* kNaiveProvenance = "NAIVE";

struct AddedImage {
  std::string patch_id;
  std::string image_ref;
  ClassId class_id = 0;
  std::string provenance;
  std::vector<std::string> source_ids;
  std::string model_hash;  // translator bundle hash; empty for naive images
  std::optional<Image> image;  // in-memory pixels; otherwise read from image_ref
};

struct AugmentedDataset {
  DatasetManifest base;
  std::vector<AddedImage> added;
  std::string base_dir;  // directory image_refs of added images resolve against

  std::size_t training_size() const;
};

AddedImage from_generated(const translator::GeneratedImage& g);
AddedImage from_naive(NaiveImage n, std::size_t index, ClassId cls, const std::string& easy_id,
                      const std::string& hard_id);

// Throws ContaminationError when a source lies in the TEST split, NotFoundError
// for an unknown source and ValidationError when the class disagrees with
// the source's gold class.
AugmentedDataset assemble(const DatasetManifest& base, std::vector<AddedImage> added);

// Base TRAIN records followed by the added images.
scorer::LabeledSet training_set(const AugmentedDataset& data);

// Writes pixels to dir/images and the manifest to dir/manifest_name.
// Returns the manifest path.
std::string save_augmentation(AugmentedDataset& data, const std::string& dir,
                              const std::string& manifest_name = "augmentation.tsv");
std::vector<AddedImage> load_augmentation(const std::string& path, const ClassNames& classes);

void save_filter_report(const FilterResult& r, const ClassNames& classes, const std::string& path);

}  // namespace difftrans::augmenter
