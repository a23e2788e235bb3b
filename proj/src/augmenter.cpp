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

#include "difftrans/augmenter.hpp"

#include <cctype>
#include <cmath>
#include <filesystem>
#include <unordered_map>

#include "difftrans/errors.hpp"
#include "difftrans/random.hpp"
#include "difftrans/tsv.hpp"

namespace fs = std::filesystem;

namespace difftrans::augmenter {

std::optional<double> FilterResult::maintained_rate() const {
  if (total() == 0) return std::nullopt;
  return 100.0 * static_cast<double>(kept.size()) / static_cast<double>(total());
}

FilterResult filter_label_maintained(const std::vector<translator::GeneratedImage>& images,
                                     const scorer::ScorerCheckpoint& checkpoint) {
  for (const auto& g : images)
    if (g.source_id.empty() || g.model_hash.empty())
      throw ValidationError("generated image '" + g.patch_id + "' has no provenance");
  FilterResult r;
  if (images.empty()) return r;
  std::vector<Image> pixels;
  pixels.reserve(images.size());
  for (const auto& g : images) pixels.push_back(g.image);
  r.p_second_class = scorer::Classifier(checkpoint).predict(pixels);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ClassId predicted = r.p_second_class[i] > 0.5 ? 1 : 0;
    if (predicted == images[i].source_class) {
      r.kept.push_back(images[i]);
    } else {
      r.rejected.push_back(images[i]);
      r.rejection_reasons.push_back("predicted class " + std::to_string(predicted) + " differs from source class " +
                                    std::to_string(images[i].source_class));
    }
  }
  return r;
}

const char* to_string(CombineMode m) { return m == CombineMode::kSplice ? "splice" : "blend"; }

CombineMode parse_combine_mode(const std::string& s) {
  if (s == "splice") return CombineMode::kSplice;
  if (s == "blend") return CombineMode::kBlend;
  throw ValidationError("unknown combine mode '" + s + "'");
}

Image combine(const Image& a, const Image& b, CombineMode mode) {
  if (!a.same_shape(b)) throw ValidationError("combine: image sizes differ");
  Image out = a;
  const int half = a.width / 2;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        if (mode == CombineMode::kSplice) {
          if (x >= half) out.at(c, y, x) = b.at(c, y, x);
        } else {
          out.at(c, y, x) = 0.5F * (a.at(c, y, x) + b.at(c, y, x));
        }
      }
  return out;
}

std::vector<NaiveImage> naive_augment(const std::vector<Image>& easy, const std::vector<Image>& hard,
                                      std::size_t n_outputs, std::uint64_t seed, CombineMode mode) {
  if (n_outputs == 0) return {};
  if (easy.empty() || hard.empty()) throw ValidationError("naive_augment needs non-empty easy and hard sets");
  for (const auto* set : {&easy, &hard})
    for (const auto& img : *set)
      if (!img.same_shape(easy.front())) throw ValidationError("naive_augment: image sizes differ");
  Rng rng(derive_seed(seed, "naive"));
  std::vector<NaiveImage> out;
  out.reserve(n_outputs);
  for (std::size_t i = 0; i < n_outputs; ++i) {
    NaiveImage n;
    n.easy_index = uniform_index(rng, easy.size());
    n.hard_index = uniform_index(rng, hard.size());
    n.image = combine(easy[n.easy_index], hard[n.hard_index], mode);
    out.push_back(std::move(n));
  }
  return out;
}

std::string generated_provenance(double phi) { return "GENERATED_PHI_" + tsv::fmt(phi, phi == std::floor(phi) ? 0 : 1); }

AddedImage from_generated(const translator::GeneratedImage& g) {
  AddedImage a;
  a.patch_id = g.patch_id;
  a.class_id = g.source_class;
  a.provenance = generated_provenance(g.phi);
  a.source_ids = {g.source_id};
  a.model_hash = g.model_hash;
  a.image = g.image;
  return a;
}

AddedImage from_naive(NaiveImage n, std::size_t index, ClassId cls, const std::string& easy_id,
                      const std::string& hard_id) {
  AddedImage a;
  a.patch_id = "naive:" + std::to_string(index);
  a.class_id = cls;
  a.provenance = kNaiveProvenance;
  a.source_ids = {easy_id, hard_id};
  a.image = std::move(n.image);
  return a;
}

std::size_t AugmentedDataset::training_size() const {
  std::size_t n = 0;
  for (const auto& r : base.records)
    if (r.split == Split::kTrain) ++n;
  return n + added.size();
}

AugmentedDataset assemble(const DatasetManifest& base, std::vector<AddedImage> added) {
  std::unordered_map<std::string, const PatchRecord*> by_id;
  for (const auto& r : base.records) by_id.emplace(r.patch_id, &r);
  for (const auto& a : added) {
    if (a.source_ids.empty()) throw ValidationError("added image '" + a.patch_id + "' has no source");
    if (by_id.count(a.patch_id)) throw ValidationError("added image id '" + a.patch_id + "' collides with base");
    for (const auto& s : a.source_ids) {
      auto it = by_id.find(s);
      if (it == by_id.end()) throw NotFoundError("source '" + s + "' of '" + a.patch_id + "' not in manifest");
      if (it->second->split != Split::kTrain)
        throw ContaminationError("added image '" + a.patch_id + "' derives from TEST patch '" + s + "'");
      if (it->second->gold_label() != a.class_id)
        throw ValidationError("added image '" + a.patch_id + "' class differs from source '" + s + "'");
    }
  }
  AugmentedDataset d;
  d.base = base;
  d.added = std::move(added);
  return d;
}

scorer::LabeledSet training_set(const AugmentedDataset& data) {
  scorer::LabeledSet set = scorer::load_split(data.base, Split::kTrain);
  for (const auto& a : data.added) {
    set.ids.push_back(a.patch_id);
    if (a.image) {
      set.images.push_back(*a.image);
    } else {
      const fs::path p(a.image_ref);
      set.images.push_back(read_png(p.is_absolute() || data.base_dir.empty() ? p.string()
                                                                            : (fs::path(data.base_dir) / p).string()));
    }
    set.labels.push_back(a.class_id);
    // Added images carry no annotator labels; counted with the high stratum.
    set.agreement.push_back(Agreement::kThreeOfThree);
  }
  return set;
}

namespace {

std::string file_stem(const std::string& id) {
  std::string s = id;
  for (char& ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.')) ch = '_';
  return s;
}

}  // namespace

std::string save_augmentation(AugmentedDataset& data, const std::string& dir, const std::string& manifest_name) {
  fs::create_directories(fs::path(dir) / "images");
  tsv::Table t;
  t.header = {"patch_id", "image_ref", "class", "provenance", "source_ids", "model_hash"};
  for (auto& a : data.added) {
    if (a.image) {
      a.image_ref = "images/" + file_stem(a.patch_id) + ".png";
      write_png((fs::path(dir) / a.image_ref).string(), *a.image);
    }
    std::string sources;
    for (const auto& s : a.source_ids) sources += (sources.empty() ? "" : ",") + s;
    t.rows.push_back({0, {a.patch_id, a.image_ref, data.base.class_names[a.class_id], a.provenance, sources, a.model_hash}});
  }
  data.base_dir = dir;
  const std::string path = (fs::path(dir) / manifest_name).string();
  tsv::write_table(path, t);
  return path;
}

std::vector<AddedImage> load_augmentation(const std::string& path, const ClassNames& classes) {
  const tsv::Table t = tsv::read_table(path);
  const int id = t.column("patch_id"), ref = t.column("image_ref"), cls = t.column("class"),
            prov = t.column("provenance"), src = t.column("source_ids"), mh = t.column("model_hash");
  if (id < 0 || ref < 0 || cls < 0 || prov < 0 || src < 0) throw ParseError(path, 0, "missing augmentation columns");
  std::vector<AddedImage> out;
  for (const auto& row : t.rows) {
    AddedImage a;
    a.patch_id = row.fields[id];
    a.image_ref = row.fields[ref];
    if (row.fields[cls] == classes[0]) {
      a.class_id = 0;
    } else if (row.fields[cls] == classes[1]) {
      a.class_id = 1;
    } else {
      throw ParseError(path, row.line, "unknown class '" + row.fields[cls] + "'");
    }
    a.provenance = row.fields[prov];
    a.source_ids = tsv::split(row.fields[src], ',');
    if (mh >= 0) a.model_hash = row.fields[mh];
    if (a.provenance.empty() || a.source_ids.empty() || a.source_ids.front().empty())
      throw ParseError(path, row.line, "missing provenance");
    out.push_back(std::move(a));
  }
  return out;
}

void save_filter_report(const FilterResult& r, const ClassNames& classes, const std::string& path) {
  tsv::Table t;
  const auto rate = r.maintained_rate();
  t.meta = {{"maintained_rate", rate ? tsv::fmt(*rate, 2) : "N/A"},
            {"kept", std::to_string(r.kept.size())},
            {"total", std::to_string(r.total())}};
  t.header = {"patch_id", "source_id", "class", "status", "reason"};
  for (const auto& g : r.kept) t.rows.push_back({0, {g.patch_id, g.source_id, classes[g.source_class], "KEPT", ""}});
  for (std::size_t i = 0; i < r.rejected.size(); ++i) {
    const auto& g = r.rejected[i];
    t.rows.push_back({0, {g.patch_id, g.source_id, classes[g.source_class], "REJECTED", r.rejection_reasons[i]}});
  }
  tsv::write_table(path, t);
}

}  // namespace difftrans::augmenter
