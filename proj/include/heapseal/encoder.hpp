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

// Probabilistic calling-context encoding.
//
// A single word V holds the current calling-context ID. Every function saves
// V on entry; an instrumented call site sets V = 3 * saved + c, where c is a
// per-site pseudo-random constant. Returning restores the caller's value, so
// V always describes the active call stack. Arithmetic wraps mod 2^64.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "heapseal/callgraph.hpp"
#include "heapseal/error.hpp"

namespace heapseal {

using Ccid = std::uint64_t;

namespace detail {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Keyed pseudo-random constant for a call site. Depends only on the seed and
// the site's textual identity, so it is stable across runs and platforms.
inline std::uint64_t site_constant(const CallSite& site, std::uint64_t seed) {
  std::uint64_t h = detail::mix64(seed ^ 0x48656170536561ULL);
  auto absorb = [&h](std::string_view bytes) {
    for (unsigned char b : bytes) h = detail::mix64(h ^ b);
    h = detail::mix64(h ^ 0x1f);  // field separator
  };
  absorb(site.caller);
  absorb(site.callee);
  absorb(std::to_string(site.site_id));
  return h;
}

class EncoderState {
 public:
  Ccid current() const noexcept { return v_; }
  std::size_t depth() const noexcept { return saved_.size(); }

  void call(bool instrumented, std::uint64_t c) {
    saved_.push_back(v_);
    if (instrumented) v_ = 3 * v_ + c;
  }

  void ret() {
    if (saved_.empty()) throw Error("return with an empty call stack");
    v_ = saved_.back();
    saved_.pop_back();
  }

 private:
  Ccid v_ = 0;
  std::vector<Ccid> saved_;
};

// Drives an EncoderState from call-site events under a fixed instrumentation
// set and seed. Sites absent from the set (including sites unknown to the
// graph) leave V untouched.
class ContextTracker {
 public:
  ContextTracker(const InstrumentationSet& instr, std::uint64_t seed)
      : instr_(&instr), seed_(seed) {}

  void call(const CallSite& site) {
    bool instrumented = instr_->contains(site);
    state_.call(instrumented, instrumented ? constant(site) : 0);
  }

  void ret() { state_.ret(); }

  Ccid current() const noexcept { return state_.current(); }
  std::size_t depth() const noexcept { return state_.depth(); }

 private:
  std::uint64_t constant(const CallSite& site) {
    auto it = constants_.find(site);
    if (it == constants_.end())
      it = constants_.emplace(site, site_constant(site, seed_)).first;
    return it->second;
  }

  const InstrumentationSet* instr_;
  std::uint64_t seed_;
  EncoderState state_;
  std::map<CallSite, std::uint64_t> constants_;
};

struct CallingContext {
  std::string root;
  std::vector<CallSite> path;
  Ccid ccid = 0;

  auto operator<=>(const CallingContext&) const = default;
};

// Brute-force enumeration of every call path of at most `max_depth` edges
// from a root to `target`, with the CCID obtained by replaying it. Cycles are
// followed up to the depth bound. Output is sorted by (root, path).
inline std::vector<CallingContext> enumerate_contexts(const CallGraph& g,
                                                      const InstrumentationSet& instr,
                                                      const std::string& target,
                                                      int max_depth,
                                                      std::uint64_t seed) {
  if (!g.has_node(target)) throw Error("enumerate_contexts: unknown node '" + target + "'");
  if (max_depth < 1) throw Error("enumerate_contexts: max_depth must be >= 1");

  std::multimap<std::string, const CallSite*> outgoing;
  for (const auto& e : g.edges) outgoing.emplace(e.caller, &e);

  std::vector<CallingContext> out;
  std::vector<CallSite> path;

  auto dfs = [&](auto& self, const std::string& root, const std::string& node,
                 Ccid v) -> void {
    if (node == target) out.push_back({root, path, v});
    if (static_cast<int>(path.size()) == max_depth) return;
    auto [lo, hi] = outgoing.equal_range(node);
    for (auto it = lo; it != hi; ++it) {
      const CallSite& site = *it->second;
      Ccid next = instr.contains(site) ? 3 * v + site_constant(site, seed) : v;
      path.push_back(site);
      self(self, root, site.callee, next);
      path.pop_back();
    }
  };
  for (const auto& root : g.roots) dfs(dfs, root, root, 0);

  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace heapseal
