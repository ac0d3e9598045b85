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

// heapseal: instrumentation analysis, offline patch generation and online
// defended replay.
//
// Exit status: 0 success, 1 bad input or usage, 2 defend saw a blocked
// access (or e2e found a check that failed).

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "heapseal.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitFlagged = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw heapseal::Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw heapseal::Error("cannot write '" + path + "'");
  out << content;
}

heapseal::CallGraph load_graph(const std::string& path) {
  try {
    return heapseal::parse_call_graph(read_file(path));
  } catch (const heapseal::ParseError& e) {
    throw heapseal::Error(path + ": " + e.what());
  }
}

heapseal::Trace load_trace(const std::string& path) {
  try {
    return heapseal::parse_trace(read_file(path));
  } catch (const heapseal::ParseError& e) {
    throw heapseal::Error(path + ": " + e.what());
  }
}

struct Options {
  std::string graph, trace, patches, out;
  std::string strategy = "incremental";
  std::string seed;
  std::uint64_t quota_bytes = heapseal::kDefaultQuotaBytes;
  std::uint64_t redzone_bytes = heapseal::kDefaultRedzoneBytes;
  bool strict_uaf = false;
  bool all = false;
};

heapseal::Config make_config(const Options& o) {
  heapseal::Config cfg;
  auto strategy = heapseal::parse_strategy(o.strategy);
  if (!strategy) throw heapseal::Error("unknown strategy '" + o.strategy + "'");
  cfg.strategy = *strategy;

  std::string seed = o.seed;
  if (seed.empty())
    if (const char* env = std::getenv("HEAPSEAL_SEED")) seed = env;
  if (!seed.empty()) {
    std::size_t used = 0;
    try {
      cfg.seed = std::stoull(seed, &used, 0);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != seed.size()) throw heapseal::Error("malformed seed '" + seed + "'");
  }

  if (o.redzone_bytes < 1) throw heapseal::Error("--redzone-bytes must be >= 1");
  cfg.quota_bytes = o.quota_bytes;
  cfg.redzone_bytes = o.redzone_bytes;
  cfg.strict_uaf = o.strict_uaf;
  return cfg;
}

void add_analysis_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--strategy", o.strategy, "fcs | tcs | slim | incremental")
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "call-site constant seed (fallback: $HEAPSEAL_SEED)");
  cmd->add_option("--quota-bytes", o.quota_bytes, "quarantine quota in bytes")
      ->capture_default_str();
}

int cmd_encode(const Options& o) {
  auto g = load_graph(o.graph);
  if (o.all) {
    std::cout << heapseal::encode_listing_all(g);
  } else {
    std::cout << heapseal::encode_listing(g, make_config(o).strategy);
  }
  return kExitOk;
}

int cmd_analyze(const Options& o) {
  auto cfg = make_config(o);
  auto g = load_graph(o.graph);
  auto trace = load_trace(o.trace);
  auto instr = heapseal::instrumentation_set(g, cfg.strategy);
  auto result = heapseal::analyze(g, instr, trace, cfg.analysis());
  write_file(o.out, heapseal::serialize_patches(result.patches));
  std::cout << heapseal::format_warnings(result.warnings);
  std::cout << "summary warnings=" << result.warnings.size()
            << " patches=" << result.patches.size() << "\n";
  return kExitOk;
}

int cmd_defend(const Options& o) {
  auto cfg = make_config(o);
  auto g = load_graph(o.graph);
  auto trace = load_trace(o.trace);
  std::vector<heapseal::Patch> patches;
  try {
    patches = heapseal::parse_patches(read_file(o.patches));
  } catch (const heapseal::ParseError& e) {
    throw heapseal::Error(o.patches + ": " + e.what());
  }
  auto table = heapseal::build_table(patches);
  auto instr = heapseal::instrumentation_set(g, cfg.strategy);
  auto report = heapseal::replay(instr, table, trace, cfg.seed, cfg.heap());
  std::cout << heapseal::format_report(report);
  return report.any_blocked() ? kExitFlagged : kExitOk;
}

int cmd_e2e(const Options& o) {
  auto cfg = make_config(o);
  auto g = load_graph(o.graph);
  auto trace = load_trace(o.trace);
  auto result = heapseal::run_e2e(g, trace, cfg);
  if (!o.out.empty()) write_file(o.out, result.patch_text);
  std::cout << heapseal::format_e2e(result);
  return result.pass() ? kExitOk : kExitFlagged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heapseal: calling-context heap patching toolkit"};
  app.require_subcommand(1);
  Options o;

  auto* encode = app.add_subcommand("encode", "list instrumented call sites");
  encode->add_option("graph", o.graph, "call graph file")->required();
  encode->add_option("--strategy", o.strategy, "fcs | tcs | slim | incremental")
      ->capture_default_str();
  encode->add_flag("--all", o.all, "show all four strategies side by side");

  auto* analyze = app.add_subcommand("analyze", "generate patches from an attack trace");
  analyze->add_option("graph", o.graph, "call graph file")->required();
  analyze->add_option("trace", o.trace, "trace file")->required();
  analyze->add_option("-o,--out", o.out, "patch file to write")->required();
  add_analysis_flags(analyze, o);
  analyze->add_option("--redzone-bytes", o.redzone_bytes, "red zone size")
      ->capture_default_str();

  auto* defend = app.add_subcommand("defend", "replay a trace on the hardened heap");
  defend->add_option("graph", o.graph, "call graph file")->required();
  defend->add_option("trace", o.trace, "trace file")->required();
  defend->add_option("patches", o.patches, "patch file")->required();
  add_analysis_flags(defend, o);
  defend->add_flag("--strict-uaf", o.strict_uaf, "fault on access to quarantined blocks");

  auto* e2e = app.add_subcommand("e2e", "analyze, then defend the same trace");
  e2e->add_option("graph", o.graph, "call graph file")->required();
  e2e->add_option("trace", o.trace, "trace file")->required();
  e2e->add_option("-o,--out", o.out, "also write the generated patch file");
  add_analysis_flags(e2e, o);
  e2e->add_option("--redzone-bytes", o.redzone_bytes, "red zone size")
      ->capture_default_str();
  e2e->add_flag("--strict-uaf", o.strict_uaf, "fault on access to quarantined blocks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*encode) return cmd_encode(o);
    if (*analyze) return cmd_analyze(o);
    if (*defend) return cmd_defend(o);
    if (*e2e) return cmd_e2e(o);
  } catch (const std::exception& e) {
    std::cerr << "heapseal: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
