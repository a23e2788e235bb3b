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

#include "difftrans/partition.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "difftrans/errors.hpp"
#include "difftrans/tsv.hpp"

namespace difftrans::partition {

const char* to_string(Domain d) {
  switch (d) {
    case Domain::kEasy: return "EASY";
    case Domain::kHard: return "HARD";
    case Domain::kNeither: return "NEITHER";
  }
  return "?";
}

std::size_t percent_count(double percent, std::size_t n) {
  return static_cast<std::size_t>(std::floor(percent * static_cast<double>(n) / 100.0 + 1e-9));
}

DomainPartition partition(const std::vector<scorer::ConfidenceScore>& scores, const PartitionConfig& config) {
  if (!(config.phi > 0.0 && config.phi <= 100.0)) throw ValidationError("phi must lie in (0, 100]");
  if (!(config.easy_fraction >= 0.0 && config.easy_fraction <= 100.0))
    throw ValidationError("easy_fraction must lie in [0, 100]");
  DomainPartition p;
  p.phi = config.phi;
  p.easy_fraction = config.easy_fraction;
  if (!scores.empty()) {
    p.class_id = scores.front().gold_class;
    p.scorer_epoch = scores.front().checkpoint_epoch;
  }
  for (const auto& s : scores) {
    if (s.gold_class != p.class_id) throw ValidationError("partition input mixes gold classes");
    const double c =
        config.mode == ConfidenceMode::kGoldClass ? s.own_class_confidence : s.predicted_confidence();
    p.ranked.emplace_back(s.patch_id, c);
  }
  std::sort(p.ranked.begin(), p.ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  const std::size_t n = p.ranked.size();
  const std::size_t n_hard = percent_count(config.phi, n);
  const std::size_t n_easy = percent_count(config.easy_fraction, n);
  if (n_hard < config.min_target) throw MinTargetViolation(n_hard, config.min_target);
  for (std::size_t i = 0; i < n_hard; ++i) p.hard_set.push_back(p.ranked[i].first);
  for (std::size_t i = n - n_easy; i < n; ++i) p.easy_set.push_back(p.ranked[i].first);
  return p;
}

Domain domain_of(const DomainPartition& p, const std::string& patch_id) {
  if (std::find(p.hard_set.begin(), p.hard_set.end(), patch_id) != p.hard_set.end()) return Domain::kHard;
  if (std::find(p.easy_set.begin(), p.easy_set.end(), patch_id) != p.easy_set.end()) return Domain::kEasy;
  return Domain::kNeither;
}

void save_partition(const DomainPartition& p, const ClassNames& classes, const std::string& path) {
  tsv::Table t;
  t.meta = {{"class", classes[p.class_id]},
            {"phi", tsv::fmt(p.phi, 4)},
            {"easy_fraction", tsv::fmt(p.easy_fraction, 4)},
            {"scorer_epoch", std::to_string(p.scorer_epoch)}};
  t.header = {"patch_id", "domain", "confidence"};
  const std::unordered_set<std::string> hard(p.hard_set.begin(), p.hard_set.end());
  const std::unordered_set<std::string> easy(p.easy_set.begin(), p.easy_set.end());
  for (const auto& [id, c] : p.ranked) {
    // When the sets overlap (phi + easy_fraction > 100) HARD wins.
    const Domain d = hard.count(id) ? Domain::kHard : (easy.count(id) ? Domain::kEasy : Domain::kNeither);
    t.rows.push_back({0, {id, to_string(d), tsv::fmt(c, 9)}});
  }
  tsv::write_table(path, t);
}

DomainPartition load_partition(const std::string& path, const ClassNames& classes) {
  const tsv::Table t = tsv::read_table(path);
  DomainPartition p;
  const auto* cls = t.meta_value("class");
  if (!cls) throw ParseError(path, 0, "missing #class");
  if (*cls == classes[0]) {
    p.class_id = 0;
  } else if (*cls == classes[1]) {
    p.class_id = 1;
  } else {
    throw ParseError(path, 0, "unknown class '" + *cls + "'");
  }
  if (const auto* v = t.meta_value("phi")) p.phi = std::stod(*v);
  if (const auto* v = t.meta_value("easy_fraction")) p.easy_fraction = std::stod(*v);
  if (const auto* v = t.meta_value("scorer_epoch")) p.scorer_epoch = std::stoi(*v);
  const int id = t.column("patch_id"), dc = t.column("domain"), cc = t.column("confidence");
  if (id < 0 || dc < 0 || cc < 0) throw ParseError(path, 0, "missing partition columns");
  for (const auto& row : t.rows) {
    const auto& f = row.fields;
    p.ranked.emplace_back(f[id], std::stod(f[cc]));
    if (f[dc] == "HARD") {
      p.hard_set.push_back(f[id]);
    } else if (f[dc] == "EASY") {
      p.easy_set.push_back(f[id]);
    } else if (f[dc] != "NEITHER") {
      throw ParseError(path, row.line, "unknown domain '" + f[dc] + "'");
    }
  }
  return p;
}

}  // namespace difftrans::partition
