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

// Memory-event traces.
//
// A trace stands in for one execution of an instrumented program. Memory is
// addressed relative to buffers (label + signed offset) so that the same
// trace replays under the shadow heap and under the hardened heap, whose
// layouts differ. Out-of-bounds offsets express overflows; touching a freed
// label expresses use-after-free.
//
//   call <caller> <callee> <site_id>
//   ret
//   alloc <fun> <id> <size> [align]      align only for memalign/aligned_alloc
//   realloc <old> <new> <size>
//   free <id>
//   write <id> <offset> <len>
//   read <id> <offset> <len> <sink>      sink: copy | branch | addr | syscall
//   copy <src> <soff> <dst> <doff> <len>

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "heapseal/callgraph.hpp"
#include "heapseal/error.hpp"
#include "heapseal/text.hpp"

namespace heapseal {

enum class AllocFun { kMalloc, kCalloc, kMemalign, kAlignedAlloc, kRealloc };

inline constexpr AllocFun kAllAllocFuns[] = {AllocFun::kMalloc, AllocFun::kCalloc,
                                             AllocFun::kMemalign,
                                             AllocFun::kAlignedAlloc,
                                             AllocFun::kRealloc};

inline std::string_view to_string(AllocFun f) {
  switch (f) {
    case AllocFun::kMalloc: return "malloc";
    case AllocFun::kCalloc: return "calloc";
    case AllocFun::kMemalign: return "memalign";
    case AllocFun::kAlignedAlloc: return "aligned_alloc";
    case AllocFun::kRealloc: return "realloc";
  }
  return "?";
}

inline std::optional<AllocFun> parse_alloc_fun(std::string_view name) {
  for (AllocFun f : kAllAllocFuns)
    if (to_string(f) == name) return f;
  return std::nullopt;
}

inline bool is_aligned_fun(AllocFun f) {
  return f == AllocFun::kMemalign || f == AllocFun::kAlignedAlloc;
}

// How a read value is consumed. Only branch/addr/syscall uses are checked for
// validity; plain copies are not, which keeps padding copies quiet.
enum class Sink { kCopy, kBranch, kAddr, kSyscall };

inline std::string_view to_string(Sink s) {
  switch (s) {
    case Sink::kCopy: return "copy";
    case Sink::kBranch: return "branch";
    case Sink::kAddr: return "addr";
    case Sink::kSyscall: return "syscall";
  }
  return "?";
}

inline bool is_checked(Sink s) { return s != Sink::kCopy; }

namespace ev {

struct Call {
  CallSite site;
  bool operator==(const Call&) const = default;
};
struct Ret {
  bool operator==(const Ret&) const = default;
};
struct Alloc {
  AllocFun fun = AllocFun::kMalloc;
  std::string id;
  std::uint64_t size = 0;
  std::optional<std::uint64_t> align;
  bool operator==(const Alloc&) const = default;
};
struct Realloc {
  std::string old_id;
  std::string new_id;
  std::uint64_t size = 0;
  bool operator==(const Realloc&) const = default;
};
struct Free {
  std::string id;
  bool operator==(const Free&) const = default;
};
struct Write {
  std::string id;
  std::int64_t offset = 0;
  std::uint64_t len = 0;
  bool operator==(const Write&) const = default;
};
struct Read {
  std::string id;
  std::int64_t offset = 0;
  std::uint64_t len = 0;
  Sink sink = Sink::kCopy;
  bool operator==(const Read&) const = default;
};
struct Copy {
  std::string src;
  std::int64_t src_offset = 0;
  std::string dst;
  std::int64_t dst_offset = 0;
  std::uint64_t len = 0;
  bool operator==(const Copy&) const = default;
};

}  // namespace ev

using Event = std::variant<ev::Call, ev::Ret, ev::Alloc, ev::Realloc, ev::Free,
                           ev::Write, ev::Read, ev::Copy>;

struct Trace {
  std::vector<Event> events;
  bool operator==(const Trace&) const = default;
};

// Syntactic parse only. Double frees, stale labels and the like are left for
// the analyzers to observe.
inline Trace parse_trace(std::string_view content) {
  Trace trace;
  for (const auto& line : text::tokenize(content)) {
    std::string_view kw = line.tokens[0];
    auto argc = [&](std::size_t lo, std::size_t hi) {
      std::size_t n = line.tokens.size() - 1;
      if (n < lo || n > hi)
        throw ParseError(line.number, "'" + std::string(kw) + "' expects " +
                                          std::to_string(lo) + " argument(s), got " +
                                          std::to_string(n));
    };
    auto id = [&](std::size_t i) {
      return std::string(text::identifier(line, i, "buffer id"));
    };
    auto len = [&](std::size_t i) {
      auto v = text::integer<std::uint64_t>(line, i, "length");
      if (v == 0) throw ParseError(line.number, "length must be >= 1");
      return v;
    };
    auto offset = [&](std::size_t i) {
      return text::integer<std::int64_t>(line, i, "offset");
    };

    if (kw == "call") {
      argc(3, 3);
      trace.events.push_back(ev::Call{{std::string(text::identifier(line, 1, "caller")),
                                       std::string(text::identifier(line, 2, "callee")),
                                       text::integer<std::uint32_t>(line, 3, "site id")}});
    } else if (kw == "ret") {
      argc(0, 0);
      trace.events.push_back(ev::Ret{});
    } else if (kw == "alloc") {
      argc(3, 4);
      auto fun = parse_alloc_fun(line.tokens[1]);
      if (!fun || *fun == AllocFun::kRealloc)
        throw ParseError(line.number, "unknown allocation function '" +
                                          std::string(line.tokens[1]) + "'");
      ev::Alloc a{*fun, id(2), text::integer<std::uint64_t>(line, 3, "size"), std::nullopt};
      bool has_align = line.tokens.size() == 5;
      if (is_aligned_fun(*fun) && !has_align)
        throw ParseError(line.number, std::string(to_string(*fun)) +
                                          " requires an alignment argument");
      if (!is_aligned_fun(*fun) && has_align)
        throw ParseError(line.number, std::string(to_string(*fun)) +
                                          " takes no alignment argument");
      if (has_align) a.align = text::integer<std::uint64_t>(line, 4, "alignment");
      trace.events.push_back(std::move(a));
    } else if (kw == "realloc") {
      argc(3, 3);
      trace.events.push_back(
          ev::Realloc{id(1), id(2), text::integer<std::uint64_t>(line, 3, "size")});
    } else if (kw == "free") {
      argc(1, 1);
      trace.events.push_back(ev::Free{id(1)});
    } else if (kw == "write") {
      argc(3, 3);
      trace.events.push_back(ev::Write{id(1), offset(2), len(3)});
    } else if (kw == "read") {
      argc(4, 4);
      std::optional<Sink> sink;
      for (Sink s : {Sink::kCopy, Sink::kBranch, Sink::kAddr, Sink::kSyscall})
        if (to_string(s) == line.tokens[4]) sink = s;
      if (!sink)
        throw ParseError(line.number, "unknown sink '" + std::string(line.tokens[4]) + "'");
      trace.events.push_back(ev::Read{id(1), offset(2), len(3), *sink});
    } else if (kw == "copy") {
      argc(5, 5);
      trace.events.push_back(ev::Copy{id(1), offset(2), id(3), offset(4), len(5)});
    } else {
      throw ParseError(line.number, "unknown event '" + std::string(kw) + "'");
    }
  }
  return trace;
}

inline std::string to_string(const Event& event) {
  return std::visit(
      [](const auto& e) -> std::string {
        using T = std::decay_t<decltype(e)>;
        using std::to_string;
        if constexpr (std::is_same_v<T, ev::Call>) {
          return "call " + e.site.caller + " " + e.site.callee + " " +
                 to_string(e.site.site_id);
        } else if constexpr (std::is_same_v<T, ev::Ret>) {
          return "ret";
        } else if constexpr (std::is_same_v<T, ev::Alloc>) {
          std::string s = "alloc " + std::string(heapseal::to_string(e.fun)) + " " + e.id +
                          " " + to_string(e.size);
          if (e.align) s += " " + to_string(*e.align);
          return s;
        } else if constexpr (std::is_same_v<T, ev::Realloc>) {
          return "realloc " + e.old_id + " " + e.new_id + " " + to_string(e.size);
        } else if constexpr (std::is_same_v<T, ev::Free>) {
          return "free " + e.id;
        } else if constexpr (std::is_same_v<T, ev::Write>) {
          return "write " + e.id + " " + to_string(e.offset) + " " + to_string(e.len);
        } else if constexpr (std::is_same_v<T, ev::Read>) {
          return "read " + e.id + " " + to_string(e.offset) + " " + to_string(e.len) + " " +
                 std::string(heapseal::to_string(e.sink));
        } else {
          return "copy " + e.src + " " + to_string(e.src_offset) + " " + e.dst + " " +
                 to_string(e.dst_offset) + " " + to_string(e.len);
        }
      },
      event);
}

inline std::string serialize_trace(const Trace& trace) {
  std::string out;
  for (const auto& e : trace.events) out += to_string(e) + "\n";
  return out;
}

}  // namespace heapseal
