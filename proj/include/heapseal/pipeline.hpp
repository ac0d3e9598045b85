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

// Glue shared by the command-line tool and the integration tests: the
// instrumentation listing, offline analysis, online replay and the
// end-to-end check that every offline finding is neutralized online.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heapseal/callgraph.hpp"
#include "heapseal/defender.hpp"
#include "heapseal/offline.hpp"
#include "heapseal/patch.hpp"
#include "heapseal/trace.hpp"

namespace heapseal {

struct Config {
  std::uint64_t seed = kDefaultSeed;
  Strategy strategy = Strategy::kIncremental;
  std::uint64_t quota_bytes = kDefaultQuotaBytes;
  std::uint64_t redzone_bytes = kDefaultRedzoneBytes;
  bool strict_uaf = false;

  AnalysisConfig analysis() const { return {quota_bytes, redzone_bytes, seed}; }

  HeapConfig heap() const {
    HeapConfig h;
    h.quota_bytes = quota_bytes;
    h.strict_uaf = strict_uaf;
    return h;
  }
};

inline std::string site_line(const CallSite& s) {
  return s.caller + " " + s.callee + " " + std::to_string(s.site_id);
}

inline std::string encode_listing(const CallGraph& g, Strategy strategy) {
  auto instr = instrumentation_set(g, strategy);
  std::string out;
  for (const auto& s : instr.sites) out += "site " + site_line(s) + "\n";
  out += "summary strategy=" + std::string(to_string(strategy)) +
         " sites=" + std::to_string(instr.sites.size()) +
         " edges=" + std::to_string(g.edges.size()) + "\n";
  return out;
}

// All four strategies side by side, one row per call site of the graph.
inline std::string encode_listing_all(const CallGraph& g) {
  std::vector<InstrumentationSet> sets;
  for (Strategy s : kAllStrategies) sets.push_back(instrumentation_set(g, s));
  std::set<CallSite> edges(g.edges.begin(), g.edges.end());
  std::string out;
  for (const auto& e : edges) {
    out += "site " + site_line(e);
    for (const auto& set : sets)
      out += " " + std::string(to_string(set.strategy)) + "=" + (set.contains(e) ? "1" : "0");
    out += "\n";
  }
  out += "summary";
  for (const auto& set : sets)
    out += " " + std::string(to_string(set.strategy)) + "=" + std::to_string(set.sites.size());
  out += "\n";
  return out;
}

inline std::string format_warnings(const std::vector<Warning>& warnings) {
  std::string out;
  for (const auto& w : warnings) out += format_warning(w) + "\n";
  return out;
}

struct E2eCheck {
  Warning warning;
  std::string online;  // what the replay did at the warning's event
  enum class Verdict { kPass, kCaveat, kFail } verdict = Verdict::kFail;
};

inline std::string_view to_string(E2eCheck::Verdict v) {
  switch (v) {
    case E2eCheck::Verdict::kPass: return "pass";
    case E2eCheck::Verdict::kCaveat: return "caveat";
    case E2eCheck::Verdict::kFail: return "fail";
  }
  return "?";
}

struct E2eResult {
  AnalysisResult offline;
  std::string patch_text;
  DefenseReport online;
  std::vector<E2eCheck> checks;
  // Blocks the replay produced at events the offline run found clean.
  std::vector<DefenseReport::Entry> unexpected_blocks;
  bool ccid_coherent = false;

  bool pass() const {
    if (!ccid_coherent || !unexpected_blocks.empty()) return false;
    for (const auto& c : checks)
      if (c.verdict == E2eCheck::Verdict::kFail) return false;
    return true;
  }
};

namespace detail {

inline E2eCheck judge(const Warning& w, const DefenseReport& online, bool strict_uaf) {
  E2eCheck c{w, "none", E2eCheck::Verdict::kFail};
  auto observed = online.at_event(w.event_index);

  switch (w.kind) {
    case WarningKind::kOverflow: {
      for (const auto* o : observed) {
        if (o->blocked && o->block_kind == BlockKind::kGuardPage && o->owner == w.origin_buf) {
          c.online = "blocked:guard-page";
          c.verdict = E2eCheck::Verdict::kPass;
          return c;
        }
      }
      // Guard pages are page granular and sit after the buffer only. An
      // overflow that stops inside the padding, or an underflow, is outside
      // what the online structures can stop.
      for (const auto* o : observed) {
        if (o->buf != w.origin_buf || o->blocked) continue;
        std::int64_t end = o->offset + static_cast<std::int64_t>(o->len);
        if (o->offset < 0 && end <= 0) {
          c.online = "not-blocked:underflow";
          c.verdict = E2eCheck::Verdict::kCaveat;
        } else if (o->guard_offset && end <= *o->guard_offset) {
          c.online = "not-blocked:padding-window";
          c.verdict = E2eCheck::Verdict::kCaveat;
        } else {
          c.online = "not-blocked";
        }
      }
      return c;
    }
    case WarningKind::kUseAfterFree: {
      for (const auto* o : observed) {
        if (strict_uaf && o->blocked && o->block_kind == BlockKind::kUafQuarantine) {
          c.online = "blocked:uaf-quarantine";
          c.verdict = E2eCheck::Verdict::kPass;
          return c;
        }
        if (!strict_uaf && o->buf == w.origin_buf && o->touched_quarantine) {
          c.online = "quarantined:not-reused";
          c.verdict = E2eCheck::Verdict::kPass;
          return c;
        }
      }
      return c;
    }
    case WarningKind::kUninitRead: {
      bool any = false;
      std::uint64_t leaked = 0;
      bool blocked = false;
      for (const auto* o : observed) {
        any = true;
        blocked = blocked || o->blocked;
        leaked += o->indeterminate_bytes;
      }
      if (!any) return c;
      if (leaked != 0) {
        c.online = "leaked:" + std::to_string(leaked);
      } else {
        c.online = blocked ? "blocked" : "zeroed";
        c.verdict = E2eCheck::Verdict::kPass;
      }
      return c;
    }
  }
  return c;
}

}  // namespace detail

// Offline analysis, patch file round trip, then an online replay of the same
// trace with the generated patches.
inline E2eResult run_e2e(const CallGraph& g, const Trace& trace, const Config& cfg) {
  E2eResult r;
  auto instr = instrumentation_set(g, cfg.strategy);
  r.offline = analyze(g, instr, trace, cfg.analysis());
  r.patch_text = serialize_patches(r.offline.patches);
  PatchTable table = build_table(parse_patches(r.patch_text));
  r.online = replay(instr, table, trace, cfg.seed, cfg.heap());

  r.ccid_coherent = r.offline.allocations == r.online.allocations;

  std::set<std::size_t> warned;
  for (const auto& w : r.offline.warnings) {
    warned.insert(w.event_index);
    r.checks.push_back(detail::judge(w, r.online, cfg.strict_uaf));
  }
  for (const auto& e : r.online.entries)
    if (e.record == "blocked" && !warned.count(e.event_index)) r.unexpected_blocks.push_back(e);
  return r;
}

inline std::string format_e2e(const E2eResult& r) {
  std::string out = "[offline]\n" + format_warnings(r.offline.warnings);
  out += "[patches]\n" + r.patch_text;
  out += "[online]\n" + format_report(r.online);
  out += "[matrix]\n";
  std::size_t pass = 0, caveat = 0, fail = 0;
  for (const auto& c : r.checks) {
    out += "check event=" + std::to_string(c.warning.event_index) +
           " kind=" + std::string(to_string(c.warning.kind)) + " buf=" + c.warning.origin_buf +
           " online=" + c.online + " result=" + std::string(to_string(c.verdict)) + "\n";
    switch (c.verdict) {
      case E2eCheck::Verdict::kPass: ++pass; break;
      case E2eCheck::Verdict::kCaveat: ++caveat; break;
      case E2eCheck::Verdict::kFail: ++fail; break;
    }
  }
  for (const auto& e : r.unexpected_blocks)
    out += "unexpected-block kind=" + e.kind + " buf=" + e.buf +
           " event=" + std::to_string(e.event_index) + " result=fail\n";
  out += "coherence allocations=" + std::to_string(r.offline.allocations.size()) +
         " result=" + (r.ccid_coherent ? "pass" : "fail") + "\n";
  out += "e2e checks=" + std::to_string(r.checks.size()) + " pass=" + std::to_string(pass) +
         " caveat=" + std::to_string(caveat) + " fail=" +
         std::to_string(fail + r.unexpected_blocks.size()) +
         " result=" + (r.pass() ? "pass" : "fail") + "\n";
  return out;
}

}  // namespace heapseal
