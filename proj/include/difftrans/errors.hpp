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

#include <stdexcept>
#include <string>

namespace difftrans {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `line` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Target (hard) domain smaller than the configured minimum.
class MinTargetViolation : public Error {
 public:
  MinTargetViolation(std::size_t got, std::size_t required)
      : Error("hard set has " + std::to_string(got) + " images, at least " +
              std::to_string(required) + " required"),
        got_(got), required_(required) {}
  std::size_t got() const { return got_; }
  std::size_t required() const { return required_; }

 private:
  std::size_t got_;
  std::size_t required_;
};

// An augmentation image traced back to a TEST-split source.
class ContaminationError : public Error {
 public:
  using Error::Error;
};

// Loss became NaN/inf during training.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

}  // namespace difftrans
