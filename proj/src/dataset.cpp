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

#include "difftrans/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <unordered_set>

#include "difftrans/errors.hpp"
#include "difftrans/image.hpp"
#include "difftrans/random.hpp"
#include "difftrans/tsv.hpp"

namespace difftrans {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kManifestColumns{"patch_id", "slide_id", "image_ref", "label_a",
                                                "label_b",  "label_c",  "split"};

}  // namespace

const char* to_string(Agreement a) {
  return a == Agreement::kThreeOfThree ? "THREE_OF_THREE" : "TWO_OF_THREE";
}

const char* to_string(Split s) { return s == Split::kTrain ? "TRAIN" : "TEST"; }

Split parse_split(const std::string& s) {
  if (s == "TRAIN") return Split::kTrain;
  if (s == "TEST") return Split::kTest;
  throw ValidationError("unknown split '" + s + "'");
}

GoldLabel derive_gold_and_agreement(const std::array<ClassId, 3>& labels) {
  int ones = 0;
  for (ClassId l : labels) {
    if (l > 1) throw ValidationError("class id " + std::to_string(l) + " outside {0, 1}");
    ones += l;
  }
  const ClassId gold = ones >= 2 ? 1 : 0;
  const bool unanimous = ones == 0 || ones == 3;
  return {gold, unanimous ? Agreement::kThreeOfThree : Agreement::kTwoOfThree};
}

GoldLabel derive_gold_and_agreement(std::span<const std::string> labels, const ClassNames& classes) {
  if (labels.size() != 3)
    throw ValidationError("expected exactly 3 annotator labels, got " + std::to_string(labels.size()));
  std::array<ClassId, 3> ids{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (labels[i] == classes[0]) {
      ids[i] = 0;
    } else if (labels[i] == classes[1]) {
      ids[i] = 1;
    } else {
      throw ValidationError("label '" + labels[i] + "' is not one of " + classes[0] + "/" + classes[1]);
    }
  }
  return derive_gold_and_agreement(ids);
}

std::string DatasetManifest::resolve(const PatchRecord& r) const {
  const fs::path p(r.image_ref);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (fs::path(base_dir) / p).string();
}

std::optional<ClassId> DatasetManifest::class_id(const std::string& name) const {
  if (name == class_names[0]) return ClassId{0};
  if (name == class_names[1]) return ClassId{1};
  return std::nullopt;
}

std::vector<const PatchRecord*> DatasetManifest::select(Split split) const {
  std::vector<const PatchRecord*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

const PatchRecord* DatasetManifest::find(const std::string& patch_id) const {
  for (const auto& r : records)
    if (r.patch_id == patch_id) return &r;
  return nullptr;
}

void DatasetManifest::validate() const {
  std::unordered_set<std::string> ids;
  std::map<std::string, Split> slide_split;
  for (const auto& r : records) {
    if (!ids.insert(r.patch_id).second) throw ValidationError("duplicate patch_id '" + r.patch_id + "'");
    auto [it, inserted] = slide_split.emplace(r.slide_id, r.split);
    if (!inserted && it->second != r.split)
      throw ValidationError("slide '" + r.slide_id + "' appears in both TRAIN and TEST");
  }
}

DatasetManifest load_manifest(const std::string& path) {
  const tsv::Table t = tsv::read_table(path);
  DatasetManifest m;
  m.base_dir = fs::path(path).parent_path().string();
  if (const auto* c = t.meta_value("classes")) {
    const auto names = tsv::split(*c, ',');
    if (names.size() != 2 || names[0].empty() || names[1].empty() || names[0] == names[1])
      throw ParseError(path, 0, "classes must name two distinct classes");
    m.class_names = {names[0], names[1]};
  }
  if (const auto* s = t.meta_value("image_side")) {
    try {
      m.image_side = std::stoi(*s);
    } catch (const std::exception&) {
      throw ParseError(path, 0, "image_side is not an integer");
    }
  }
  std::array<int, 7> col{};
  for (std::size_t i = 0; i < kManifestColumns.size(); ++i) {
    col[i] = t.column(kManifestColumns[i]);
    if (col[i] < 0) throw ParseError(path, 0, "missing required column '" + kManifestColumns[i] + "'");
  }
  std::unordered_set<std::string> ids;
  m.records.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    const auto& f = row.fields;
    PatchRecord r;
    r.patch_id = f[col[0]];
    r.slide_id = f[col[1]];
    r.image_ref = f[col[2]];
    if (r.patch_id.empty() || r.slide_id.empty() || r.image_ref.empty())
      throw ParseError(path, row.line, "empty required field");
    for (int k = 0; k < 3; ++k) {
      const auto id = m.class_id(f[col[3 + k]]);
      if (!id) throw ParseError(path, row.line, "unknown class label '" + f[col[3 + k]] + "'");
      r.annotator_labels[k] = *id;
    }
    try {
      r.split = parse_split(f[col[6]]);
    } catch (const ValidationError& e) {
      throw ParseError(path, row.line, e.what());
    }
    if (!ids.insert(r.patch_id).second)
      throw ParseError(path, row.line, "duplicate patch_id '" + r.patch_id + "'");
    m.records.push_back(std::move(r));
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  tsv::Table t;
  t.meta = {{"classes", manifest.class_names[0] + "," + manifest.class_names[1]},
            {"image_side", std::to_string(manifest.image_side)}};
  t.header = kManifestColumns;
  t.rows.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    t.rows.push_back({0,
                      {r.patch_id, r.slide_id, r.image_ref, manifest.class_names[r.annotator_labels[0]],
                       manifest.class_names[r.annotator_labels[1]],
                       manifest.class_names[r.annotator_labels[2]], to_string(r.split)}});
  }
  tsv::write_table(path, t);
}

DatasetManifest split_by_slide(const DatasetManifest& manifest, double train_fraction,
                               std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("train_fraction must lie in (0, 1)");
  std::map<std::string, std::size_t> slide_sizes;
  for (const auto& r : manifest.records) ++slide_sizes[r.slide_id];
  if (slide_sizes.size() < 2) throw ValidationError("need at least 2 slides to form both splits");

  std::vector<std::string> slides;
  for (const auto& [id, n] : slide_sizes) slides.push_back(id);
  Rng rng(seed);
  shuffle(slides, rng);

  const double target = train_fraction * static_cast<double>(manifest.records.size());
  std::size_t best_k = 1;
  double best_gap = std::numeric_limits<double>::infinity();
  std::size_t cum = 0;
  for (std::size_t k = 1; k < slides.size(); ++k) {
    cum += slide_sizes[slides[k - 1]];
    const double gap = std::abs(static_cast<double>(cum) - target);
    if (gap < best_gap) {
      best_gap = gap;
      best_k = k;
    }
  }
  std::set<std::string> train(slides.begin(), slides.begin() + static_cast<std::ptrdiff_t>(best_k));

  DatasetManifest out = manifest;
  for (auto& r : out.records) r.split = train.count(r.slide_id) ? Split::kTrain : Split::kTest;
  return out;
}

VerifyReport verify_manifest(const DatasetManifest& manifest, bool check_images) {
  VerifyReport rep;
  auto fail = [&](std::string msg) {
    rep.ok = false;
    rep.problems.push_back(std::move(msg));
  };
  try {
    manifest.validate();
  } catch (const ValidationError& e) {
    fail(e.what());
  }
  if (check_images) {
    for (const auto& r : manifest.records) {
      const std::string p = manifest.resolve(r);
      if (!fs::exists(p)) {
        fail("missing image for " + r.patch_id + ": " + p);
        continue;
      }
      try {
        const Image img = read_png(p);
        if (img.height != manifest.image_side || img.width != manifest.image_side)
          fail("image for " + r.patch_id + " is " + std::to_string(img.width) + "x" +
               std::to_string(img.height) + ", expected side " + std::to_string(manifest.image_side));
      } catch (const Error& e) {
        fail(e.what());
      }
    }
  }
  return rep;
}

StratumCounts count_strata(const DatasetManifest& manifest) {
  StratumCounts c;
  for (const auto& r : manifest.records) {
    const GoldLabel g = r.gold();
    ++c.counts[static_cast<int>(r.split)][static_cast<int>(g.agreement)][g.gold];
  }
  return c;
}

}  // namespace difftrans
