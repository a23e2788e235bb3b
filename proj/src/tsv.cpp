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

#include "difftrans/tsv.hpp"

#include <filesystem>
#include <sstream>

#include "difftrans/errors.hpp"

namespace difftrans::tsv {

std::vector<std::string> split(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& fields, char delim) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(delim);
    out += fields[i];
  }
  return out;
}

std::string fmt(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  // Avoid "-0.000000".
  std::string s(buf);
  if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);
  return s;
}

int Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

const std::string* Table::meta_value(std::string_view key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return &v;
  return nullptr;
}

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Table t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header && line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(path, lineno, "malformed preamble line");
      t.meta.emplace_back(line.substr(1, eq - 1), line.substr(eq + 1));
      continue;
    }
    if (!have_header) {
      t.header = split(line);
      have_header = true;
      continue;
    }
    Row row{lineno, split(line)};
    if (row.fields.size() != t.header.size())
      throw ParseError(path, lineno,
                       "expected " + std::to_string(t.header.size()) + " fields, got " +
                           std::to_string(row.fields.size()));
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError(path, lineno, "missing header row");
  return t;
}

void write_table(const std::string& path, const Table& table) {
  std::ostringstream os;
  for (const auto& [k, v] : table.meta) os << '#' << k << '=' << v << '\n';
  os << join(table.header) << '\n';
  for (const auto& row : table.rows) os << join(row.fields) << '\n';
  write_file_atomic(path, os.str());
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace difftrans::tsv
