// Copyright 2026 The HeapSeal Authors. All Rights Reserved.
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace heapseal {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input. `line()` is 1-based; 0 when the error is not tied to
// a particular line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A trace that is syntactically valid but semantically impossible to replay
// (return underflow, allocation of a live id, ...). Attacks are never
// reported through this type.
class TraceError : public Error {
 public:
  TraceError(std::size_t event_index, const std::string& what)
      : Error("event " + std::to_string(event_index) + ": " + what),
        event_index_(event_index) {}

  std::size_t event_index() const noexcept { return event_index_; }

 private:
  std::size_t event_index_;
};

class FrozenTableError : public Error {
 public:
  FrozenTableError() : Error("patch table is frozen (read-only)") {}
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class OutOfMemoryError : public Error {
 public:
  using Error::Error;
};

}  // namespace heapseal
