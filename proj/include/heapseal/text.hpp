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

// Shared helpers for the line-oriented file formats.

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "heapseal/error.hpp"

namespace heapseal::text {

struct Line {
  std::size_t number;  // 1-based
  std::vector<std::string_view> tokens;
};

// Splits `content` into non-empty records. `#` starts a comment that runs to
// the end of the line; blank lines are skipped.
inline std::vector<Line> tokenize(std::string_view content) {
  std::vector<Line> lines;
  std::size_t number = 0;
  while (!content.empty()) {
    ++number;
    std::size_t eol = content.find('\n');
    std::string_view raw = content.substr(0, eol);
    content = eol == std::string_view::npos ? std::string_view{}
                                            : content.substr(eol + 1);
    if (auto hash = raw.find('#'); hash != std::string_view::npos)
      raw = raw.substr(0, hash);

    Line line{number, {}};
    std::size_t pos = 0;
    while (pos < raw.size()) {
      while (pos < raw.size() &&
             (raw[pos] == ' ' || raw[pos] == '\t' || raw[pos] == '\r'))
        ++pos;
      std::size_t start = pos;
      while (pos < raw.size() && raw[pos] != ' ' && raw[pos] != '\t' &&
             raw[pos] != '\r')
        ++pos;
      if (pos > start) line.tokens.push_back(raw.substr(start, pos - start));
    }
    if (!line.tokens.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

inline bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
              (c >= '0' && c <= '9') || c == '_' || c == '.';
    if (!ok) return false;
  }
  return true;
}

inline std::string_view identifier(const Line& line, std::size_t index,
                                   const char* what) {
  std::string_view s = line.tokens[index];
  if (!is_identifier(s))
    throw ParseError(line.number,
                     std::string("invalid ") + what + " '" + std::string(s) + "'");
  return s;
}

template <typename Int>
Int integer(const Line& line, std::size_t index, const char* what) {
  std::string_view s = line.tokens[index];
  // from_chars rejects a leading '+', which is what we want.
  Int value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ParseError(line.number, std::string("malformed ") + what + " '" +
                                      std::string(s) + "'");
  return value;
}

inline std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace heapseal::text
