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

// HTTP front end of the annotation store.

#include <memory>
#include <string>

#include "difftrans/annotation/store.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace difftrans::annotation {

inline constexpr const char* kAdminTokenEnv = "DIFFTRANS_ADMIN_TOKEN";

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds any free port
  // Required for session creation and the report; empty disables both.
  std::string admin_token;
  std::string static_dir;  // optional annotator UI bundle
};

// Annotator-facing JSON for one item. Exposed for the blinding tests.
nlohmann::json public_item_json(const PublicItem& item);

std::string utc_timestamp();

class AnnotationServer {
 public:
  AnnotationServer(Store& store, CandidatePools pools, ServerConfig config);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Returns the bound port. Throws IoError when binding fails.
  int bind();
  // Blocks until stop().
  void serve();
  void stop();

 private:
  void routes();

  Store& store_;
  CandidatePools pools_;
  ServerConfig config_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace difftrans::annotation
