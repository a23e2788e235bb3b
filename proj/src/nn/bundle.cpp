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

#include "difftrans/nn/bundle.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "difftrans/errors.hpp"
#include "difftrans/hashing.hpp"
#include "difftrans/tsv.hpp"

namespace difftrans::nn {

namespace {

constexpr char kMagic[8] = {'D', 'T', 'X', 'B', 'N', 'D', 'L', '\0'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos, const std::string& path) {
  if (pos + sizeof(T) > in.size()) throw ParseError(path, 0, "truncated bundle");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void write_bundle(const std::string& path, const Bundle& bundle) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kBundleVersion);
  const std::string header = bundle.header.dump();
  put<std::uint64_t>(out, header.size());
  out += header;
  put<std::uint64_t>(out, bundle.tensors.size());
  for (const auto& t : bundle.tensors) {
    put<std::uint64_t>(out, t.size());
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
  }
  tsv::write_file_atomic(path, out);
}

Bundle read_bundle(const std::string& path, const std::string& expected_kind) {
  const std::string in = tsv::read_file(path);
  if (in.size() < sizeof kMagic || std::memcmp(in.data(), kMagic, sizeof kMagic) != 0)
    throw ParseError(path, 0, "not a model bundle");
  std::size_t pos = sizeof kMagic;
  const auto version = get<std::uint32_t>(in, pos, path);
  if (version != kBundleVersion)
    throw ParseError(path, 0, "unsupported bundle version " + std::to_string(version));
  const auto header_len = get<std::uint64_t>(in, pos, path);
  if (pos + header_len > in.size()) throw ParseError(path, 0, "truncated bundle header");
  Bundle b;
  try {
    b.header = nlohmann::json::parse(in.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 0, std::string("bad bundle header: ") + e.what());
  }
  pos += header_len;
  if (!expected_kind.empty() && b.header.value("kind", "") != expected_kind)
    throw ParseError(path, 0, "bundle kind '" + b.header.value("kind", "") + "', expected '" + expected_kind + "'");
  const auto count = get<std::uint64_t>(in, pos, path);
  b.tensors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint64_t>(in, pos, path);
    if (pos + len * sizeof(float) > in.size()) throw ParseError(path, 0, "truncated bundle tensor");
    std::vector<float> t(len);
    std::memcpy(t.data(), in.data() + pos, len * sizeof(float));
    pos += len * sizeof(float);
    b.tensors.push_back(std::move(t));
  }
  return b;
}

std::string tensors_hash(const std::vector<std::vector<float>>& tensors) {
  Hasher h;
  for (const auto& t : tensors) h.update(std::span<const float>(t));
  return h.hex();
}

}  // namespace difftrans::nn
