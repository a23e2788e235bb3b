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

#include "difftrans/annotation/server.hpp"

#include <httplib.h>

#include <chrono>
#include <ctime>
#include <filesystem>

#include "difftrans/errors.hpp"
#include "difftrans/tsv.hpp"

namespace difftrans::annotation {

namespace {

using nlohmann::json;

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

bool equal_tokens(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return false;
  unsigned char diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff |= static_cast<unsigned char>(a[i] ^ b[i]);
  return diff == 0;
}

std::string presented_token(const httplib::Request& req) {
  if (req.has_header("X-Admin-Token")) return req.get_header_value("X-Admin-Token");
  const std::string auth = req.get_header_value("Authorization");
  const std::string prefix = "Bearer ";
  if (auth.rfind(prefix, 0) == 0) return auth.substr(prefix.size());
  return {};
}

// Runs a handler and maps library errors to HTTP status codes.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const NotFoundError& e) {
    reply(res, 404, {{"error", e.what()}});
  } catch (const ValidationError& e) {
    reply(res, 400, {{"error", e.what()}});
  } catch (const json::exception& e) {
    reply(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", e.what()}});
  }
}

json progress_json(const Progress& p) { return {{"labeled", p.labeled}, {"total", p.total}}; }

}  // namespace

json public_item_json(const PublicItem& item) {
  json j = {{"item_id", item.item_id},
            {"image_url", "/api/images/" + item.image_token},
            {"position", item.position},
            {"total", item.total}};
  j["label"] = item.label ? json(*item.label) : json();
  return j;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

AnnotationServer::AnnotationServer(Store& store, CandidatePools pools, ServerConfig config)
    : store_(store), pools_(std::move(pools)), config_(std::move(config)), http_(std::make_unique<httplib::Server>()) {
  routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind() {
  int port = config_.port;
  if (port == 0) {
    port = http_->bind_to_any_port(config_.host);
    if (port < 0) throw IoError("cannot bind " + config_.host);
  } else if (!http_->bind_to_port(config_.host, port)) {
    throw IoError("cannot bind " + config_.host + ":" + std::to_string(port));
  }
  return port;
}

void AnnotationServer::serve() { http_->listen_after_bind(); }

void AnnotationServer::stop() {
  if (http_) http_->stop();
}

void AnnotationServer::routes() {
  auto& s = *http_;
  auto admin = [this](const httplib::Request& req, httplib::Response& res) {
    if (config_.admin_token.empty()) {
      reply(res, 403, {{"error", "admin endpoints are disabled"}});
      return false;
    }
    if (!equal_tokens(presented_token(req), config_.admin_token)) {
      reply(res, 401, {{"error", "admin token required"}});
      return false;
    }
    return true;
  };

  s.Get("/api/classes", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"classes", store_.classes()}});
  });

  s.Post("/api/sessions", [this, admin](const httplib::Request& req, httplib::Response& res) {
    if (!admin(req, res)) return;
    guarded(res, [&] {
      const json body = json::parse(req.body);
      SessionSpec spec;
      spec.annotator_id = body.at("annotator_id").get<std::string>();
      spec.n_per_group = body.value("n_per_group", spec.n_per_group);
      spec.seed = body.value("seed", spec.seed);
      const std::string id = store_.create_session(spec, pools_);
      reply(res, 201, {{"session_id", id}, {"total", store_.progress(id).total}});
    });
  });

  s.Get(R"(/api/sessions/([0-9a-f]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto item = store_.next_item(req.matches[1]);
      if (item) {
        reply(res, 200, {{"done", false}, {"item", public_item_json(*item)}});
      } else {
        reply(res, 200, {{"done", true}, {"item", nullptr}});
      }
    });
  });

  s.Get(R"(/api/sessions/([0-9a-f]+)/items)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      json items = json::array();
      for (const auto& it : store_.items(req.matches[1])) items.push_back(public_item_json(it));
      reply(res, 200, {{"items", items}});
    });
  });

  s.Get(R"(/api/sessions/([0-9a-f]+)/progress)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, progress_json(store_.progress(req.matches[1]))); });
  });

  s.Post(R"(/api/sessions/([0-9a-f]+)/labels)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      const std::string session = req.matches[1];
      const LabelOutcome o = store_.record_label(session, body.at("item_id").get<std::string>(),
                                                 body.at("label").get<std::string>(), utc_timestamp());
      reply(res, 200, {{"status", to_string(o)}, {"progress", progress_json(store_.progress(session))}});
    });
  });

  s.Get(R"(/api/images/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto path = store_.image_path(req.matches[1]);
      if (!path) throw NotFoundError("unknown image token");
      res.set_content(tsv::read_file(*path), "image/png");
      res.set_header("Cache-Control", "no-store");
    });
  });

  s.Get("/api/report", [this, admin](const httplib::Request& req, httplib::Response& res) {
    if (!admin(req, res)) return;
    guarded(res, [&] {
      std::vector<std::string> ids;
      if (req.has_param("sessions")) {
        ids = tsv::split(req.get_param_value("sessions"), ',');
      } else {
        ids = store_.sessions();
      }
      const auto rows = metrics::blinded_test_report(store_.blinded_labels(ids));
      json out = json::array();
      for (const auto& r : rows)
        out.push_back({{"group", metrics::to_string(r.group)},
                       {"n", r.n},
                       {"pct_two_of_three", r.pct_two_of_three},
                       {"pct_three_of_three", r.pct_three_of_three},
                       {"pct_maintained", r.pct_maintained}});
      reply(res, 200, {{"sessions", ids}, {"rows", out}, {"table", metrics::format_blinded_report(rows)}});
    });
  });

  if (!config_.static_dir.empty()) {
    if (!std::filesystem::is_directory(config_.static_dir))
      throw IoError("static directory " + config_.static_dir + " does not exist");
    s.set_mount_point("/", config_.static_dir);
  }
}

}  // namespace difftrans::annotation
