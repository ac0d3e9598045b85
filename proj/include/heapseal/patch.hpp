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

// Code-less heap patches <FUN, CCID, T>: buffers allocated by FUN while the
// calling context encodes to CCID get the hardening named by the three-bit
// vulnerability mask T.
//
// Patch file, one patch per line, LF endings, `#` comments:
//
//   <fun> <ccid as 16 lowercase hex digits> <T decimal> [key=value ...]

#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "heapseal/encoder.hpp"
#include "heapseal/error.hpp"
#include "heapseal/text.hpp"
#include "heapseal/trace.hpp"

namespace heapseal {

class VulnMask {
 public:
  static constexpr std::uint8_t kOverflow = 1;
  static constexpr std::uint8_t kUseAfterFree = 2;
  static constexpr std::uint8_t kUninitRead = 4;
  static constexpr std::uint8_t kAll = 7;

  constexpr VulnMask() = default;
  constexpr explicit VulnMask(std::uint8_t bits) : bits_(bits) {
    if (bits > kAll) throw RangeError("vulnerability mask out of range");
  }

  constexpr std::uint8_t bits() const { return bits_; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool overflow() const { return bits_ & kOverflow; }
  constexpr bool use_after_free() const { return bits_ & kUseAfterFree; }
  constexpr bool uninit_read() const { return bits_ & kUninitRead; }

  constexpr VulnMask operator|(VulnMask o) const { return VulnMask(bits_ | o.bits_); }
  constexpr VulnMask& operator|=(VulnMask o) { return *this = *this | o; }
  constexpr bool operator==(const VulnMask&) const = default;

 private:
  std::uint8_t bits_ = 0;
};

using PatchParams = std::map<std::string, std::string>;

struct Patch {
  AllocFun fun = AllocFun::kMalloc;
  Ccid ccid = 0;
  VulnMask t;
  PatchParams params;  // reserved; no keys are defined yet

  bool operator==(const Patch&) const = default;
};

inline bool patch_order(const Patch& a, const Patch& b) {
  auto fa = to_string(a.fun), fb = to_string(b.fun);
  if (fa != fb) return fa < fb;
  return a.ccid < b.ccid;
}

inline std::string serialize_patches(std::vector<Patch> patches) {
  std::sort(patches.begin(), patches.end(), patch_order);
  std::string out;
  for (const auto& p : patches) {
    out += std::string(to_string(p.fun)) + " " + text::hex16(p.ccid) + " " +
           std::to_string(p.t.bits());
    for (const auto& [k, v] : p.params) out += " " + k + "=" + v;
    out += "\n";
  }
  return out;
}

inline std::vector<Patch> parse_patches(std::string_view content) {
  std::vector<Patch> patches;
  std::map<std::pair<AllocFun, Ccid>, std::size_t> seen;
  for (const auto& line : text::tokenize(content)) {
    if (line.tokens.size() < 3)
      throw ParseError(line.number, "expected '<fun> <ccid> <type> [key=value ...]'");

    auto fun = parse_alloc_fun(line.tokens[0]);
    if (!fun)
      throw ParseError(line.number, "unknown allocation function '" +
                                        std::string(line.tokens[0]) + "'");

    std::string_view hex = line.tokens[1];
    Ccid ccid = 0;
    auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), ccid, 16);
    if (hex.size() > 16 || ec != std::errc{} || ptr != hex.data() + hex.size())
      throw ParseError(line.number, "bad CCID '" + std::string(hex) + "'");

    auto bits = text::integer<unsigned>(line, 2, "vulnerability type");
    if (bits < 1 || bits > VulnMask::kAll)
      throw ParseError(line.number, "vulnerability type " + std::to_string(bits) +
                                        " outside [1, 7]");

    Patch p{*fun, ccid, VulnMask(static_cast<std::uint8_t>(bits)), {}};
    for (std::size_t i = 3; i < line.tokens.size(); ++i) {
      std::string_view kv = line.tokens[i];
      auto eq = kv.find('=');
      if (eq == std::string_view::npos || eq == 0)
        throw ParseError(line.number, "bad parameter '" + std::string(kv) + "'");
      p.params[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
    }

    if (auto [it, inserted] = seen.emplace(std::pair{p.fun, p.ccid}, line.number);
        !inserted)
      throw ParseError(line.number, "duplicate patch key (first on line " +
                                        std::to_string(it->second) + ")");
    patches.push_back(std::move(p));
  }
  return patches;
}

// Hash table keyed by <allocation function, CCID>. Once frozen the table is
// read-only; every later insert throws.
class PatchTable {
 public:
  struct Entry {
    VulnMask t;
    PatchParams params;
  };

  void insert(const Patch& p) {
    if (frozen_) throw FrozenTableError();
    if (!entries_.emplace(Key{p.fun, p.ccid}, Entry{p.t, p.params}).second)
      throw Error("duplicate patch key " + std::string(to_string(p.fun)) + " " +
                  text::hex16(p.ccid));
  }

  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }
  std::size_t size() const noexcept { return entries_.size(); }

  const Entry* lookup(AllocFun fun, Ccid ccid) const {
    auto it = entries_.find(Key{fun, ccid});
    return it == entries_.end() ? nullptr : &it->second;
  }

 private:
  struct Key {
    AllocFun fun;
    Ccid ccid;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return static_cast<std::size_t>(
          detail::mix64(k.ccid ^ (static_cast<std::uint64_t>(k.fun) << 56)));
    }
  };

  std::unordered_map<Key, Entry, KeyHash> entries_;
  bool frozen_ = false;
};

inline PatchTable build_table(const std::vector<Patch>& patches) {
  PatchTable table;
  for (const auto& p : patches) table.insert(p);
  table.freeze();
  return table;
}

}  // namespace heapseal
