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

#include "difftrans/annotation/store.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <random>
#include <filesystem>
#include <set>

#include "difftrans/augmenter.hpp"
#include "difftrans/errors.hpp"
#include "difftrans/hashing.hpp"
#include "difftrans/partition.hpp"
#include "difftrans/random.hpp"

namespace difftrans::annotation {

namespace {

class Statement {
 public:
  Statement(sqlite3* db, const std::string& sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt_, nullptr) != SQLITE_OK)
      throw IoError(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int i, const std::string& v) {
    sqlite3_bind_text(stmt_, i, v.c_str(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Statement& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(stmt_, i, v);
    return *this;
  }
  // True while a row is available.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw IoError(std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }
  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? reinterpret_cast<const char*>(p) : "";
  }
  std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }
  bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

constexpr const char* kSchema = R"(
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS sessions (
  session_id TEXT PRIMARY KEY, annotator_id TEXT NOT NULL, seed INTEGER NOT NULL,
  n_per_group INTEGER NOT NULL, created INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS items (
  session_id TEXT NOT NULL, item_id TEXT NOT NULL, position INTEGER NOT NULL,
  image_token TEXT NOT NULL UNIQUE, image_path TEXT NOT NULL, hidden_group TEXT NOT NULL,
  original_class INTEGER NOT NULL, source_id TEXT NOT NULL,
  PRIMARY KEY (session_id, item_id));
CREATE TABLE IF NOT EXISTS labels (
  session_id TEXT NOT NULL, item_id TEXT NOT NULL, label TEXT NOT NULL, timestamp TEXT NOT NULL,
  PRIMARY KEY (session_id, item_id));
CREATE TABLE IF NOT EXISTS audit (
  id INTEGER PRIMARY KEY AUTOINCREMENT, session_id TEXT NOT NULL, item_id TEXT NOT NULL,
  old_label TEXT NOT NULL, new_label TEXT NOT NULL, timestamp TEXT NOT NULL);
)";

struct PlannedItem {
  metrics::ImageGroup group;
  Candidate candidate;
  ClassId original_class;
};

std::vector<Candidate> pick(std::vector<Candidate> pool, std::size_t n, Rng& rng) {
  std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) { return a.id < b.id; });
  shuffle(pool, rng);
  pool.resize(n);
  return pool;
}

}  // namespace

const char* to_string(LabelOutcome o) {
  switch (o) {
    case LabelOutcome::kStored: return "stored";
    case LabelOutcome::kUnchanged: return "unchanged";
    case LabelOutcome::kReplaced: return "replaced";
  }
  return "?";
}

std::string random_token(std::size_t bytes) {
  static std::mutex m;
  static std::random_device rd;
  static const char* hex = "0123456789abcdef";
  std::lock_guard lock(m);
  std::string out;
  for (std::size_t i = 0; i < bytes; ++i) {
    const unsigned v = rd() & 0xFFU;
    out += hex[v >> 4];
    out += hex[v & 0xFU];
  }
  return out;
}

CandidatePools pools_from_experiment(const DatasetManifest& manifest, const std::string& partition_path,
                                     const std::string& generated_manifest_path) {
  const auto p = partition::load_partition(partition_path, manifest.class_names);
  CandidatePools pools;
  pools.class_id = p.class_id;
  auto candidate = [&](const std::string& id) {
    const PatchRecord* r = manifest.find(id);
    if (!r) throw NotFoundError("patch '" + id + "' not in manifest");
    return Candidate{id, manifest.resolve(*r)};
  };
  for (const auto& id : p.easy_set) pools.easy.push_back(candidate(id));
  for (const auto& id : p.hard_set) pools.hard.push_back(candidate(id));
  for (const auto& r : manifest.records)
    if (r.gold_label() != p.class_id) pools.other_class.push_back({r.patch_id, manifest.resolve(r)});
  const auto dir = std::filesystem::path(generated_manifest_path).parent_path();
  for (const auto& g : augmenter::load_augmentation(generated_manifest_path, manifest.class_names))
    pools.generated_by_source[g.source_ids.front()] = {g.patch_id, (dir / g.image_ref).string()};
  return pools;
}

Store::Store(const std::string& path, ClassNames classes) : classes_(std::move(classes)) {
  if (sqlite3_open(path.c_str(), &db_) != SQLITE_OK) {
    const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw IoError("cannot open annotation store " + path + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec("PRAGMA journal_mode=WAL;");
  exec("PRAGMA synchronous=FULL;");
  exec(kSchema);
  Statement q(db_, "SELECT value FROM meta WHERE key = 'salt'");
  if (q.step()) {
    salt_ = q.text(0);
  } else {
    salt_ = random_token();
    Statement ins(db_, "INSERT INTO meta (key, value) VALUES ('salt', ?)");
    ins.bind(1, salt_).step();
  }
}

Store::~Store() { sqlite3_close(db_); }

void Store::exec(const std::string& sql) const {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    const std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw IoError("sqlite: " + msg);
  }
}

void Store::require_session(const std::string& session_id) const {
  Statement q(db_, "SELECT 1 FROM sessions WHERE session_id = ?");
  if (!q.bind(1, session_id).step()) throw NotFoundError("unknown session '" + session_id + "'");
}

std::string Store::create_session(const SessionSpec& spec, const CandidatePools& pools) {
  if (spec.annotator_id.empty()) throw ValidationError("annotator_id is required");
  if (spec.n_per_group == 0) throw ValidationError("n_per_group must be positive");
  const std::size_t n = spec.n_per_group;
  std::vector<Candidate> easy;
  for (const auto& c : pools.easy)
    if (pools.generated_by_source.count(c.id)) easy.push_back(c);
  auto short_group = [&](metrics::ImageGroup g, std::size_t have) {
    throw ValidationError(std::string("group ") + metrics::to_string(g) + " has " + std::to_string(have) +
                          " candidates, " + std::to_string(n) + " required");
  };
  if (easy.size() < n) short_group(metrics::ImageGroup::kRealEasy, easy.size());
  if (pools.hard.size() < n) short_group(metrics::ImageGroup::kRealHard, pools.hard.size());
  if (pools.other_class.size() < n) short_group(metrics::ImageGroup::kOtherClass, pools.other_class.size());

  Rng select(derive_seed(spec.seed, "session:select"));
  const auto chosen_easy = pick(easy, n, select);
  const auto chosen_hard = pick(pools.hard, n, select);
  const auto chosen_other = pick(pools.other_class, n, select);
  const ClassId other = pools.class_id == 0 ? 1 : 0;
  std::vector<PlannedItem> plan;
  for (const auto& c : chosen_easy) plan.push_back({metrics::ImageGroup::kRealEasy, c, pools.class_id});
  for (const auto& c : chosen_easy)
    plan.push_back({metrics::ImageGroup::kGeneratedHard, pools.generated_by_source.at(c.id), pools.class_id});
  for (const auto& c : chosen_hard) plan.push_back({metrics::ImageGroup::kRealHard, c, pools.class_id});
  for (const auto& c : chosen_other) plan.push_back({metrics::ImageGroup::kOtherClass, c, other});
  Rng order(derive_seed(spec.seed, "session:order:" + spec.annotator_id));
  shuffle(plan, order);

  std::lock_guard lock(mutex_);
  const std::string session_id = random_token(12);
  exec("BEGIN IMMEDIATE");
  try {
    Statement count(db_, "SELECT COUNT(*) FROM sessions");
    count.step();
    Statement s(db_,
                "INSERT INTO sessions (session_id, annotator_id, seed, n_per_group, created) VALUES (?, ?, ?, ?, ?)");
    s.bind(1, session_id)
        .bind(2, spec.annotator_id)
        .bind(3, static_cast<std::int64_t>(spec.seed))
        .bind(4, static_cast<std::int64_t>(n))
        .bind(5, count.integer(0))
        .step();
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const auto& p = plan[i];
      const std::string item_id = sha256_hex(salt_ + "|" + metrics::to_string(p.group) + "|" + p.candidate.id).substr(0, 20);
      Statement ins(db_,
                    "INSERT INTO items (session_id, item_id, position, image_token, image_path, hidden_group, "
                    "original_class, source_id) VALUES (?, ?, ?, ?, ?, ?, ?, ?)");
      ins.bind(1, session_id)
          .bind(2, item_id)
          .bind(3, static_cast<std::int64_t>(i + 1))
          .bind(4, random_token())
          .bind(5, p.candidate.image_path)
          .bind(6, metrics::to_string(p.group))
          .bind(7, static_cast<std::int64_t>(p.original_class))
          .bind(8, p.candidate.id)
          .step();
    }
    exec("COMMIT");
  } catch (...) {
    exec("ROLLBACK");
    throw;
  }
  return session_id;
}

bool Store::has_session(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  Statement q(db_, "SELECT 1 FROM sessions WHERE session_id = ?");
  return q.bind(1, session_id).step();
}

std::vector<std::string> Store::sessions() const {
  std::lock_guard lock(mutex_);
  Statement q(db_, "SELECT session_id FROM sessions ORDER BY created");
  std::vector<std::string> out;
  while (q.step()) out.push_back(q.text(0));
  return out;
}

std::vector<PublicItem> Store::items(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  require_session(session_id);
  Statement q(db_,
              "SELECT i.item_id, i.image_token, i.position, l.label FROM items i LEFT JOIN labels l "
              "ON l.session_id = i.session_id AND l.item_id = i.item_id WHERE i.session_id = ? ORDER BY i.position");
  q.bind(1, session_id);
  std::vector<PublicItem> out;
  while (q.step()) {
    PublicItem it{q.text(0), q.text(1), static_cast<std::size_t>(q.integer(2)), 0, std::nullopt};
    if (!q.is_null(3)) it.label = q.text(3);
    out.push_back(std::move(it));
  }
  for (auto& it : out) it.total = out.size();
  return out;
}

std::optional<PublicItem> Store::next_item(const std::string& session_id) const {
  for (auto& it : items(session_id))
    if (!it.label) return it;
  return std::nullopt;
}

std::optional<std::string> Store::image_path(const std::string& token) const {
  std::lock_guard lock(mutex_);
  Statement q(db_, "SELECT image_path FROM items WHERE image_token = ?");
  if (!q.bind(1, token).step()) return std::nullopt;
  return q.text(0);
}

LabelOutcome Store::record_label(const std::string& session_id, const std::string& item_id, const std::string& label,
                                 const std::string& timestamp) {
  if (label != classes_[0] && label != classes_[1])
    throw ValidationError("label must be '" + classes_[0] + "' or '" + classes_[1] + "'");
  std::lock_guard lock(mutex_);
  require_session(session_id);
  {
    Statement q(db_, "SELECT 1 FROM items WHERE session_id = ? AND item_id = ?");
    if (!q.bind(1, session_id).bind(2, item_id).step())
      throw NotFoundError("unknown item '" + item_id + "' in session '" + session_id + "'");
  }
  exec("BEGIN IMMEDIATE");
  try {
    std::string old;
    bool existed = false;
    {
      Statement q(db_, "SELECT label FROM labels WHERE session_id = ? AND item_id = ?");
      if (q.bind(1, session_id).bind(2, item_id).step()) {
        existed = true;
        old = q.text(0);
      }
    }
    LabelOutcome outcome = LabelOutcome::kUnchanged;
    if (!existed || old != label) {
      Statement up(db_,
                   "INSERT INTO labels (session_id, item_id, label, timestamp) VALUES (?, ?, ?, ?) "
                   "ON CONFLICT(session_id, item_id) DO UPDATE SET label = excluded.label, timestamp = excluded.timestamp");
      up.bind(1, session_id).bind(2, item_id).bind(3, label).bind(4, timestamp).step();
      Statement au(db_,
                   "INSERT INTO audit (session_id, item_id, old_label, new_label, timestamp) VALUES (?, ?, ?, ?, ?)");
      au.bind(1, session_id).bind(2, item_id).bind(3, old).bind(4, label).bind(5, timestamp).step();
      outcome = existed ? LabelOutcome::kReplaced : LabelOutcome::kStored;
    }
    exec("COMMIT");
    return outcome;
  } catch (...) {
    exec("ROLLBACK");
    throw;
  }
}

Progress Store::progress(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  require_session(session_id);
  Progress p;
  Statement t(db_, "SELECT COUNT(*) FROM items WHERE session_id = ?");
  t.bind(1, session_id).step();
  p.total = static_cast<std::size_t>(t.integer(0));
  Statement l(db_, "SELECT COUNT(*) FROM labels WHERE session_id = ?");
  l.bind(1, session_id).step();
  p.labeled = static_cast<std::size_t>(l.integer(0));
  return p;
}

std::vector<AuditEntry> Store::audit(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  require_session(session_id);
  Statement q(db_, "SELECT item_id, old_label, new_label, timestamp FROM audit WHERE session_id = ? ORDER BY id");
  q.bind(1, session_id);
  std::vector<AuditEntry> out;
  while (q.step()) out.push_back({q.text(0), q.text(1), q.text(2), q.text(3)});
  return out;
}

std::vector<metrics::BlindedItemLabels> Store::blinded_labels(const std::vector<std::string>& session_ids) const {
  if (session_ids.size() != 3) throw ValidationError("the blinded report needs exactly three sessions");
  std::lock_guard lock(mutex_);
  std::map<std::string, metrics::BlindedItemLabels> by_item;
  std::set<std::string> reference;
  for (std::size_t a = 0; a < session_ids.size(); ++a) {
    require_session(session_ids[a]);
    Statement q(db_,
                "SELECT i.item_id, i.hidden_group, i.original_class, l.label FROM items i LEFT JOIN labels l "
                "ON l.session_id = i.session_id AND l.item_id = i.item_id WHERE i.session_id = ?");
    q.bind(1, session_ids[a]);
    std::set<std::string> ids;
    while (q.step()) {
      const std::string id = q.text(0);
      ids.insert(id);
      auto& entry = by_item[id];
      if (entry.labels.empty()) {
        entry.item_id = id;
        entry.group = metrics::parse_image_group(q.text(1));
        entry.original_class = static_cast<ClassId>(q.integer(2));
        entry.labels.resize(session_ids.size());
      }
      if (!q.is_null(3)) entry.labels[a] = q.text(3) == classes_[0] ? ClassId{0} : ClassId{1};
    }
    if (a == 0) {
      reference = ids;
    } else if (ids != reference) {
      throw ValidationError("sessions do not share one item set");
    }
  }
  std::vector<metrics::BlindedItemLabels> out;
  for (auto& [id, e] : by_item) out.push_back(std::move(e));
  return out;
}

}  // namespace difftrans::annotation
