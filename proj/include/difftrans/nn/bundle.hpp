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

// Versioned, self-describing binary bundle for trained networks:
//   magic "DTXBNDL\0", u32 version, u64 header length, JSON header,
//   u64 tensor count, then per tensor u64 length + little-endian float32.
// The JSON header carries "kind" and whatever configuration is needed to
// rebuild the network before loading the tensors.

#include <string>
#include <vector>

#include "json.hpp"

namespace difftrans::nn {

inline constexpr unsigned kBundleVersion = 1;

struct Bundle {
  nlohmann::json header;
  std::vector<std::vector<float>> tensors;
};

void write_bundle(const std::string& path, const Bundle& bundle);
// Throws ParseError if the file is not a bundle, has another version, or
// its kind differs from `expected_kind` (when non-empty).
Bundle read_bundle(const std::string& path, const std::string& expected_kind = {});

// SHA-256 over the tensor payload only.
std::string tensors_hash(const std::vector<std::vector<float>>& tensors);

}  // namespace difftrans::nn
