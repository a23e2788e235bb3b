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

// Persistent store for blinded annotation sessions (single SQLite file).

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "difftrans/dataset.hpp"
#include "difftrans/metrics.hpp"

struct sqlite3;

namespace difftrans::annotation {

struct Candidate {
  std::string id;
  std::string image_path;
};

struct CandidatePools {
  ClassId class_id = 0;  // class of the easy, hard and generated images
  std::vector<Candidate> easy;
  std::vector<Candidate> hard;
  std::vector<Candidate> other_class;
  std::map<std::string, Candidate> generated_by_source;
};

// Easy and hard sets from a partition, translations from a generated-image
// manifest and every manifest image of the other class.
CandidatePools pools_from_experiment(const DatasetManifest& manifest, const std::string& partition_path,
                                     const std::string& generated_manifest_path);

struct SessionSpec {
  std::string annotator_id;
  std::size_t n_per_group = 75;
  // Selects the items; sessions with equal seeds share their item set.
  std::uint64_t seed = 0;
};

// Annotator-facing view of an item: no group, class or provenance.
struct PublicItem {
  std::string item_id;
  std::string image_token;
  std::size_t position = 0;  // 1-based presentation index
  std::size_t total = 0;
  std::optional<std::string> label;
};

struct Progress {
  std::size_t labeled = 0;
  std::size_t total = 0;
};

enum class LabelOutcome { kStored, kUnchanged, kReplaced };
const char* to_string(LabelOutcome o);

struct AuditEntry {
  std::string item_id;
  std::string old_label;  // empty for the first label
  std::string new_label;
  std::string timestamp;
};

class Store {
 public:
  Store(const std::string& path, ClassNames classes = kDefaultClassNames);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const ClassNames& classes() const { return classes_; }

  // Throws ValidationError naming the first group with too few candidates.
  std::string create_session(const SessionSpec& spec, const CandidatePools& pools);
  bool has_session(const std::string& session_id) const;
  std::vector<std::string> sessions() const;

  std::vector<PublicItem> items(const std::string& session_id) const;
  // First unlabeled item in presentation order.
  std::optional<PublicItem> next_item(const std::string& session_id) const;
  // Image file behind an opaque token.
  std::optional<std::string> image_path(const std::string& token) const;

  // Throws NotFoundError for an unknown session or item and ValidationError
  // for a label outside the class set.
  LabelOutcome record_label(const std::string& session_id, const std::string& item_id, const std::string& label,
                            const std::string& timestamp);
  Progress progress(const std::string& session_id) const;
  std::vector<AuditEntry> audit(const std::string& session_id) const;

  // Unblinded per-item labels across exactly three sessions over one item set.
  std::vector<metrics::BlindedItemLabels> blinded_labels(const std::vector<std::string>& session_ids) const;

 private:
  void exec(const std::string& sql) const;
  void require_session(const std::string& session_id) const;

  sqlite3* db_ = nullptr;
  ClassNames classes_;
  std::string salt_;
  mutable std::mutex mutex_;
};

std::string random_token(std::size_t bytes = 16);

}  // namespace difftrans::annotation
