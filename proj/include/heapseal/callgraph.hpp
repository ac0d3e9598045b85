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

// Call graphs and the call-site selection strategies that decide which
// call sites carry calling-context encoding code.
//
//   FCS          every call site.
//   TCS          call sites whose callee can reach a target function.
//   SLIM         TCS sites located in branching nodes (two or more
//                target-reaching out-edges).
//   INCREMENTAL  TCS sites located in true branching nodes (two or more
//                out-edges reaching the *same* target), found per target by
//                a backward breadth-first search.

#pragma once

#include <compare>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "heapseal/error.hpp"
#include "heapseal/text.hpp"

namespace heapseal {

struct CallSite {
  std::string caller;
  std::string callee;
  std::uint32_t site_id = 0;

  auto operator<=>(const CallSite&) const = default;
  bool operator==(const CallSite&) const = default;
};

inline std::string to_string(const CallSite& s) {
  return s.caller + "->" + s.callee + "#" + std::to_string(s.site_id);
}

struct CallGraph {
  std::set<std::string> nodes;
  std::vector<CallSite> edges;
  std::set<std::string> roots;
  std::set<std::string> targets;

  bool has_node(std::string_view name) const {
    return nodes.find(std::string(name)) != nodes.end();
  }

  // Adds an edge, enforcing endpoint and triple-uniqueness invariants.
  void add_edge(CallSite site) {
    if (!has_node(site.caller)) throw Error("undeclared node '" + site.caller + "'");
    if (!has_node(site.callee)) throw Error("undeclared node '" + site.callee + "'");
    for (const auto& e : edges)
      if (e == site) throw Error("duplicate call site " + to_string(site));
    edges.push_back(std::move(site));
  }
};

enum class Strategy { kFcs, kTcs, kSlim, kIncremental };

inline constexpr Strategy kAllStrategies[] = {Strategy::kFcs, Strategy::kTcs,
                                              Strategy::kSlim,
                                              Strategy::kIncremental};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kFcs: return "fcs";
    case Strategy::kTcs: return "tcs";
    case Strategy::kSlim: return "slim";
    case Strategy::kIncremental: return "incremental";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view name) {
  for (Strategy s : kAllStrategies)
    if (to_string(s) == name) return s;
  return std::nullopt;
}

struct InstrumentationSet {
  Strategy strategy = Strategy::kFcs;
  std::set<CallSite> sites;

  bool contains(const CallSite& s) const { return sites.count(s) != 0; }
};

// Graph file: `node <name>`, `edge <caller> <callee> <site_id>`,
// `root <name>`, `target <name>`; `#` comments. Declarations may appear in
// any order; references are resolved after the whole file is read.
inline CallGraph parse_call_graph(std::string_view content) {
  CallGraph g;
  struct PendingEdge {
    std::size_t line;
    CallSite site;
  };
  std::vector<PendingEdge> edges;
  std::vector<std::pair<std::size_t, std::string>> roots, targets;

  for (const auto& line : text::tokenize(content)) {
    std::string_view kw = line.tokens[0];
    auto expect = [&](std::size_t n) {
      if (line.tokens.size() != n)
        throw ParseError(line.number, "'" + std::string(kw) + "' expects " +
                                          std::to_string(n - 1) + " argument(s)");
    };
    if (kw == "node") {
      expect(2);
      std::string name(text::identifier(line, 1, "node name"));
      if (!g.nodes.insert(name).second)
        throw ParseError(line.number, "duplicate node '" + name + "'");
    } else if (kw == "edge") {
      expect(4);
      edges.push_back({line.number,
                       {std::string(text::identifier(line, 1, "caller")),
                        std::string(text::identifier(line, 2, "callee")),
                        text::integer<std::uint32_t>(line, 3, "site id")}});
    } else if (kw == "root") {
      expect(2);
      roots.emplace_back(line.number, text::identifier(line, 1, "root"));
    } else if (kw == "target") {
      expect(2);
      targets.emplace_back(line.number, text::identifier(line, 1, "target"));
    } else {
      throw ParseError(line.number, "unknown record '" + std::string(kw) + "'");
    }
  }

  for (auto& [number, site] : edges) {
    try {
      g.add_edge(std::move(site));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(number, e.what());
    }
  }
  for (auto& [number, name] : roots) {
    if (!g.has_node(name)) throw ParseError(number, "undeclared node '" + name + "'");
    g.roots.insert(name);
  }
  for (auto& [number, name] : targets) {
    if (!g.has_node(name)) throw ParseError(number, "undeclared node '" + name + "'");
    g.targets.insert(name);
  }
  return g;
}

namespace detail {

inline void require_targets(const CallGraph& g, const char* op) {
  if (g.targets.empty())
    throw Error(std::string(op) + ": call graph has no target functions");
}

// Nodes from which some target is reachable (targets included).
inline std::set<std::string> nodes_reaching_targets(const CallGraph& g) {
  std::multimap<std::string, std::string> preds;
  for (const auto& e : g.edges) preds.emplace(e.callee, e.caller);

  std::set<std::string> seen(g.targets.begin(), g.targets.end());
  std::deque<std::string> work(g.targets.begin(), g.targets.end());
  while (!work.empty()) {
    std::string n = std::move(work.front());
    work.pop_front();
    auto [lo, hi] = preds.equal_range(n);
    for (auto it = lo; it != hi; ++it)
      if (seen.insert(it->second).second) work.push_back(it->second);
  }
  return seen;
}

}  // namespace detail

inline std::set<CallSite> reachable_edges(const CallGraph& g) {
  detail::require_targets(g, "reachable_edges");
  auto reaching = detail::nodes_reaching_targets(g);
  std::set<CallSite> out;
  for (const auto& e : g.edges)
    if (reaching.count(e.callee)) out.insert(e);
  return out;
}

inline std::set<std::string> branching_nodes(const CallGraph& g) {
  std::map<std::string, int> out_degree;
  for (const auto& e : reachable_edges(g)) ++out_degree[e.caller];
  std::set<std::string> out;
  for (const auto& [node, n] : out_degree)
    if (n >= 2) out.insert(node);
  return out;
}

// Per target: backward BFS collects every node that can reach it, then any
// visited node with more than one out-edge into the visited set is a true
// branching node for that target. The visited-set check keeps the search
// finite on back edges.
inline std::set<std::string> true_branching_nodes(const CallGraph& g) {
  detail::require_targets(g, "true_branching_nodes");

  std::multimap<std::string, const CallSite*> incoming, outgoing;
  for (const auto& e : g.edges) {
    incoming.emplace(e.callee, &e);
    outgoing.emplace(e.caller, &e);
  }

  std::set<std::string> result;
  for (const auto& target : g.targets) {
    std::set<std::string> visited;
    std::deque<std::string> queue{target};
    while (!queue.empty()) {
      std::string n = std::move(queue.front());
      queue.pop_front();
      // A node may be queued more than once before it is first popped; the
      // repeat pops would add nothing to `visited`.
      if (!visited.insert(n).second) continue;
      auto [lo, hi] = incoming.equal_range(n);
      for (auto it = lo; it != hi; ++it)
        if (!visited.count(it->second->caller)) queue.push_back(it->second->caller);
    }

    for (const auto& n : visited) {
      int count = 0;
      auto [lo, hi] = outgoing.equal_range(n);
      for (auto it = lo; it != hi; ++it)
        if (visited.count(it->second->callee)) ++count;
      if (count > 1) result.insert(n);
    }
  }
  return result;
}

inline InstrumentationSet instrumentation_set(const CallGraph& g, Strategy strategy) {
  InstrumentationSet out{strategy, {}};
  if (strategy == Strategy::kFcs) {
    out.sites.insert(g.edges.begin(), g.edges.end());
    return out;
  }

  auto tcs = reachable_edges(g);
  if (strategy == Strategy::kTcs) {
    out.sites = std::move(tcs);
    return out;
  }

  auto selected = strategy == Strategy::kSlim ? branching_nodes(g)
                                              : true_branching_nodes(g);
  for (const auto& e : tcs)
    if (selected.count(e.caller)) out.sites.insert(e);
  return out;
}

}  // namespace heapseal
