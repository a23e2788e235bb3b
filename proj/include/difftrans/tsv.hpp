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

// Minimal tab-separated text helpers shared by the manifest, score,
// partition and report files.

#include <cstdio>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace difftrans::tsv {

std::vector<std::string> split(std::string_view line, char delim = '\t');
std::string join(const std::vector<std::string>& fields, char delim = '\t');

// Fixed-precision formatting so reports are byte-stable.
std::string fmt(double v, int precision = 6);

// One parsed data line together with its 1-based line number.
struct Row {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// Reads a file with `#key=value` preamble lines, one header row and data
// rows. Blank lines are skipped.
struct Table {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> header;
  std::vector<Row> rows;

  // Column index by name, or -1.
  int column(std::string_view name) const;
  const std::string* meta_value(std::string_view key) const;
};

Table read_table(const std::string& path);

// Writes a table atomically (temporary file + rename).
void write_table(const std::string& path, const Table& table);

// Writes `contents` to `path` via a temporary file and rename.
void write_file_atomic(const std::string& path, std::string_view contents);
std::string read_file(const std::string& path);

}  // namespace difftrans::tsv
