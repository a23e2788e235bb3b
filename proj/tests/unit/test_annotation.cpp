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

#include <doctest.h>

#include <httplib.h>

#include <map>
#include <set>
#include <thread>

#include "difftrans/annotation/server.hpp"
#include "difftrans/annotation/store.hpp"
#include "difftrans/errors.hpp"
#include "difftrans/tsv.hpp"
#include "test_support.hpp"

using namespace difftrans;
using namespace difftrans::annotation;
using metrics::ImageGroup;
using nlohmann::json;

namespace {

struct Fixture {
  testing::TempDir dir{"annotation"};
  CandidatePools pools;
  // File bytes -> (group, index within the group's pool).
  std::map<std::string, std::pair<ImageGroup, std::size_t>> by_bytes;
  int serial = 0;

  Candidate add(ImageGroup g, std::size_t index, const std::string& id) {
    Image img(4, 4, static_cast<float>(serial % 250) / 255.0F);
    img.at(0, 0, 0) = static_cast<float>(serial / 250) / 255.0F;
    ++serial;
    const std::string path = dir.str(id + ".png");
    write_png(path, img);
    by_bytes[tsv::read_file(path)] = {g, index};
    return {id, path};
  }

  explicit Fixture(std::size_t per_group, std::size_t extra_easy_without_translation = 0) {
    for (std::size_t i = 0; i < per_group; ++i) {
      pools.easy.push_back(add(ImageGroup::kRealEasy, i, "easy" + std::to_string(i)));
      pools.generated_by_source["easy" + std::to_string(i)] =
          add(ImageGroup::kGeneratedHard, i, "gen_easy" + std::to_string(i));
      pools.hard.push_back(add(ImageGroup::kRealHard, i, "hard" + std::to_string(i)));
      pools.other_class.push_back(add(ImageGroup::kOtherClass, i, "other" + std::to_string(i)));
    }
    for (std::size_t i = 0; i < extra_easy_without_translation; ++i)
      pools.easy.push_back(add(ImageGroup::kRealEasy, 100 + i, "lonely" + std::to_string(i)));
  }
};

std::set<std::string> ids_of(const std::vector<PublicItem>& items) {
  std::set<std::string> out;
  for (const auto& i : items) out.insert(i.item_id);
  return out;
}

// Keys and values that would unblind an annotator.
const std::set<std::string> kForbiddenKeys{"group",  "hidden_group", "class",      "original_class", "source",
                                           "source_id", "provenance", "phi",       "confidence",     "model_hash",
                                           "image_path", "path",       "candidate", "annotator_id"};

void check_blind(const json& j, const Fixture& f) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      CHECK_MESSAGE(kForbiddenKeys.count(k) == 0, "forbidden key " << k);
      check_blind(v, f);
    }
  } else if (j.is_array()) {
    for (const auto& v : j) check_blind(v, f);
  } else if (j.is_string()) {
    const std::string s = j.get<std::string>();
    for (auto g : metrics::kImageGroups) CHECK(s.find(metrics::to_string(g)) == std::string::npos);
    for (const char* bad : {"easy", "hard", "gen", "other", ".png", "/"}) {
      if (s.rfind("/api/images/", 0) == 0) continue;
      CHECK_MESSAGE(s.find(bad) == std::string::npos, "value leaks '" << bad << "': " << s);
    }
    CHECK(s.find(f.dir.str()) == std::string::npos);
  }
}

}  // namespace

TEST_CASE("sessions hold four groups of n items") {
  Fixture f(6);
  testing::TempDir db("store");
  Store store(db.str("a.db"));
  const std::string s = store.create_session({"alice", 5, 3}, f.pools);
  CHECK(store.has_session(s));
  CHECK_FALSE(store.has_session("0000"));
  const auto items = store.items(s);
  REQUIRE(items.size() == 20);
  std::set<std::string> tokens;
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(items[i].position == i + 1);
    CHECK(items[i].total == 20);
    CHECK_FALSE(items[i].label.has_value());
    CHECK(tokens.insert(items[i].image_token).second);
  }

  // Generated items are the translations of the selected easy items.
  std::map<ImageGroup, std::set<std::size_t>> chosen;
  for (const auto& it : items) {
    const auto path = store.image_path(it.image_token);
    REQUIRE(path.has_value());
    const auto [g, idx] = f.by_bytes.at(tsv::read_file(*path));
    chosen[g].insert(idx);
  }
  for (auto g : metrics::kImageGroups) CHECK(chosen[g].size() == 5);
  CHECK(chosen[ImageGroup::kGeneratedHard] == chosen[ImageGroup::kRealEasy]);
  CHECK_FALSE(store.image_path("feedface").has_value());
}

TEST_CASE("session creation is seed deterministic") {
  Fixture f(8);
  testing::TempDir db("store_det");
  Store store(db.str("a.db"));
  const auto a = store.items(store.create_session({"ann", 2, 11}, f.pools));
  const auto b = store.items(store.create_session({"ann", 2, 11}, f.pools));
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].item_id == b[i].item_id);
  const auto c = store.items(store.create_session({"other", 2, 11}, f.pools));
  CHECK(ids_of(c) == ids_of(a));
  const auto d = store.items(store.create_session({"ann", 2, 12}, f.pools));
  CHECK(ids_of(d) != ids_of(a));
}

TEST_CASE("short groups are named") {
  Fixture f(3, 4);
  testing::TempDir db("store_short");
  Store store(db.str("a.db"));
  try {
    store.create_session({"a", 4, 0}, f.pools);
    FAIL("expected a short group error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("REAL_EASY") != std::string::npos);
  }
  f.pools.hard.pop_back();
  try {
    store.create_session({"a", 3, 0}, f.pools);
    FAIL("expected a short group error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("REAL_HARD") != std::string::npos);
  }
  CHECK_THROWS_AS(store.create_session({"", 1, 0}, f.pools), ValidationError);
}

TEST_CASE("labels are idempotent, audited and durable") {
  Fixture f(2);
  testing::TempDir db("store_labels");
  std::string session, first, second;
  {
    Store store(db.str("a.db"));
    session = store.create_session({"a", 2, 0}, f.pools);
    const auto items = store.items(session);
    first = items[0].item_id;
    second = items[1].item_id;
    CHECK(store.record_label(session, first, "HP", "t1") == LabelOutcome::kStored);
    CHECK(store.record_label(session, first, "HP", "t2") == LabelOutcome::kUnchanged);
    CHECK(store.progress(session).labeled == 1);
    CHECK(store.record_label(session, first, "SSA", "t3") == LabelOutcome::kReplaced);
    CHECK(store.progress(session).labeled == 1);
    CHECK(store.next_item(session)->item_id == second);
    CHECK_THROWS_AS(store.record_label(session, "nope", "HP", "t"), NotFoundError);
    CHECK_THROWS_AS(store.record_label("abcd", first, "HP", "t"), NotFoundError);
    CHECK_THROWS_AS(store.record_label(session, first, "TA", "t"), ValidationError);
    CHECK_THROWS_AS(store.progress("abcd"), NotFoundError);
  }
  Store reopened(db.str("a.db"));
  const auto items = reopened.items(session);
  CHECK(items[0].label == std::optional<std::string>("SSA"));
  const auto audit = reopened.audit(session);
  REQUIRE(audit.size() == 2);
  CHECK(audit[0].old_label.empty());
  CHECK(audit[0].new_label == "HP");
  CHECK(audit[1].old_label == "HP");
  CHECK(audit[1].new_label == "SSA");
  CHECK(audit[1].timestamp == "t3");
  for (const auto& it : items) reopened.record_label(session, it.item_id, "HP", "t");
  CHECK_FALSE(reopened.next_item(session).has_value());
}

TEST_CASE("blinded labels need three sessions over one item set") {
  Fixture f(3);
  testing::TempDir db("store_blind");
  Store store(db.str("a.db"));
  const auto a = store.create_session({"a", 2, 0}, f.pools);
  const auto b = store.create_session({"b", 2, 0}, f.pools);
  const auto c = store.create_session({"c", 2, 0}, f.pools);
  std::string d;
  for (std::uint64_t seed = 1; d.empty(); ++seed) {
    const auto s = store.create_session({"d", 2, seed}, f.pools);
    if (ids_of(store.items(s)) != ids_of(store.items(a))) d = s;
  }
  CHECK_THROWS_AS(store.blinded_labels({a, b}), ValidationError);
  CHECK_THROWS_AS(store.blinded_labels({a, b, d}), ValidationError);
  const auto labels = store.blinded_labels({a, b, c});
  CHECK(labels.size() == 8);
  CHECK_THROWS_AS(metrics::blinded_test_report(labels), ValidationError);
}

TEST_CASE("http api keeps annotators blind and reports for the admin") {
  Fixture f(5);
  testing::TempDir db("server");
  Store store(db.str("a.db"));
  ServerConfig cfg;
  cfg.port = 0;
  cfg.admin_token = "s3cret";
  AnnotationServer server(store, f.pools, cfg);
  const int port = server.bind();
  std::thread th([&] { server.serve(); });
  httplib::Client cli("127.0.0.1", port);
  const httplib::Headers admin{{"X-Admin-Token", "s3cret"}};

  auto get_json = [&](const std::string& path) {
    auto r = cli.Get(path);
    REQUIRE(r);
    REQUIRE(r->status == 200);
    const json j = json::parse(r->body);
    check_blind(j, f);
    return j;
  };

  SUBCASE("admin token is enforced") {
    const std::string body = R"({"annotator_id":"x","n_per_group":5})";
    auto r = cli.Post("/api/sessions", body, "application/json");
    REQUIRE(r);
    CHECK(r->status == 401);
    r = cli.Post("/api/sessions", httplib::Headers{{"X-Admin-Token", "wrong"}}, body, "application/json");
    CHECK(r->status == 401);
    r = cli.Post("/api/sessions", httplib::Headers{{"Authorization", "Bearer s3cret"}}, body, "application/json");
    CHECK(r->status == 201);
    CHECK(cli.Get("/api/report")->status == 401);
    r = cli.Post("/api/sessions", admin, R"({"annotator_id":"x","n_per_group":50})", "application/json");
    CHECK(r->status == 400);
    r = cli.Post("/api/sessions", admin, "{oops", "application/json");
    CHECK(r->status == 400);
    CHECK(cli.Get("/api/sessions/abcdef/next")->status == 404);
    CHECK(cli.Get("/api/images/abcdef")->status == 404);
    CHECK(get_json("/api/classes")["classes"] == json::array({"HP", "SSA"}));
  }

  SUBCASE("scripted three-annotator study") {
    std::vector<std::string> sessions;
    for (const char* who : {"a0", "a1", "a2"}) {
      auto r = cli.Post("/api/sessions", admin, json{{"annotator_id", who}, {"n_per_group", 5}, {"seed", 4}}.dump(),
                        "application/json");
      REQUIRE(r);
      REQUIRE(r->status == 201);
      const json j = json::parse(r->body);
      CHECK(j["total"] == 20);
      sessions.push_back(j["session_id"]);
    }

    // Annotator k's answer for an image of group g at pool index i.
    auto answer = [](int k, ImageGroup g, std::size_t i) -> std::string {
      switch (g) {
        case ImageGroup::kRealEasy: return "HP";
        case ImageGroup::kRealHard: return k == 2 && i < 2 ? "SSA" : "HP";
        case ImageGroup::kGeneratedHard:
          if (i == 0) return k == 0 ? "HP" : "SSA";
          return k == 0 && (i == 1 || i == 2) ? "SSA" : "HP";
        case ImageGroup::kOtherClass: return k == 0 && i == 4 ? "HP" : "SSA";
      }
      return "";
    };

    for (int k = 0; k < 3; ++k) {
      const std::string base = "/api/sessions/" + sessions[k];
      int steps = 0;
      while (true) {
        const json next = get_json(base + "/next");
        if (next["done"]) break;
        const json item = next["item"];
        CHECK(item["position"] == steps + 1);
        auto img = cli.Get(item["image_url"].get<std::string>());
        REQUIRE(img);
        REQUIRE(img->status == 200);
        CHECK(img->get_header_value("Content-Type") == "image/png");
        CHECK_FALSE(img->has_header("Content-Disposition"));
        const auto [g, idx] = f.by_bytes.at(img->body);
        const std::string label = answer(k, g, idx);
        auto posted = cli.Post(base + "/labels", json{{"item_id", item["item_id"]}, {"label", label}}.dump(),
                               "application/json");
        REQUIRE(posted);
        REQUIRE(posted->status == 200);
        const json ack = json::parse(posted->body);
        check_blind(ack, f);
        CHECK(ack["status"] == "stored");
        CHECK(ack["progress"]["labeled"] == steps + 1);
        if (steps == 0) {
          auto again = cli.Post(base + "/labels", json{{"item_id", item["item_id"]}, {"label", label}}.dump(),
                                "application/json");
          CHECK(json::parse(again->body)["status"] == "unchanged");
          auto bad = cli.Post(base + "/labels", json{{"item_id", item["item_id"]}, {"label", "TA"}}.dump(),
                              "application/json");
          CHECK(bad->status == 400);
          auto missing = cli.Post(base + "/labels", json{{"item_id", "ffff"}, {"label", "HP"}}.dump(),
                                  "application/json");
          CHECK(missing->status == 404);
        }
        ++steps;
      }
      CHECK(steps == 20);
      const json items = get_json(base + "/items");
      CHECK(items["items"].size() == 20);
      const json progress = get_json(base + "/progress");
      CHECK(progress["labeled"] == 20);
    }

    auto rep = cli.Get("/api/report?sessions=" + sessions[0] + "," + sessions[1] + "," + sessions[2], admin);
    REQUIRE(rep);
    REQUIRE(rep->status == 200);
    const json report = json::parse(rep->body);
    // Hand computation from the answer script, in percent of 5 items:
    //   REAL_EASY       votes for HP 3,3,3,3,3 -> 2/3 0,  3/3 100, kept 100
    //   REAL_HARD       3 votes except i<2 (2) -> 2/3 40, 3/3 60,  kept 100
    //   GENERATED_HARD  1,2,2,3,3              -> 2/3 40, 3/3 40,  kept 80
    //   OTHER_CLASS     SSA votes 3,3,3,3,2    -> 2/3 20, 3/3 80,  kept 100
    const std::map<std::string, std::array<double, 3>> expected{{"REAL_EASY", {0, 100, 100}},
                                                                {"REAL_HARD", {40, 60, 100}},
                                                                {"GENERATED_HARD", {40, 40, 80}},
                                                                {"OTHER_CLASS", {20, 80, 100}}};
    REQUIRE(report["rows"].size() == 4);
    for (const auto& row : report["rows"]) {
      const auto& e = expected.at(row["group"].get<std::string>());
      CHECK(row["n"] == 5);
      CHECK(row["pct_two_of_three"].get<double>() == e[0]);
      CHECK(row["pct_three_of_three"].get<double>() == e[1]);
      CHECK(row["pct_maintained"].get<double>() == e[2]);
    }
    CHECK(report["table"].get<std::string>().find("GENERATED_HARD") != std::string::npos);
  }

  server.stop();
  th.join();
}

TEST_CASE("admin endpoints are disabled without a token") {
  Fixture f(2);
  testing::TempDir db("server_noadmin");
  Store store(db.str("a.db"));
  ServerConfig cfg;
  cfg.port = 0;
  AnnotationServer server(store, f.pools, cfg);
  const int port = server.bind();
  std::thread th([&] { server.serve(); });
  httplib::Client cli("127.0.0.1", port);
  auto r = cli.Post("/api/sessions", R"({"annotator_id":"x"})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 403);
  CHECK(cli.Get("/api/report")->status == 403);
  server.stop();
  th.join();
}

TEST_CASE("public item payload") {
  PublicItem it{"abc", "tok", 3, 20, std::nullopt};
  const json j = public_item_json(it);
  CHECK(j["image_url"] == "/api/images/tok");
  CHECK(j["label"].is_null());
  std::set<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.insert(k);
  CHECK(keys == std::set<std::string>{"item_id", "image_url", "position", "total", "label"});
}
