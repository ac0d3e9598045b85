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

// Offline patch generation.
//
// Replays an attack trace over a shadow heap that tracks, per byte, whether
// the byte is accessible (A-map), whether it holds a defined value (V-map)
// and, for undefined bytes, which allocation the undefinedness came from
// (origin map). Every buffer is flanked by inaccessible red zones; freed
// buffers sit in a FIFO quarantine bounded by a byte quota.
//
//   overflow          any touch of a red zone (or beyond it) of a live buffer
//   use-after-free    any touch of a quarantined buffer
//   uninitialized     an undefined byte consumed by a branch, an address
//                     computation or a system call; copies are not checked
//
// Execution continues after every warning. Checked bytes are marked defined
// afterwards so a single root cause does not produce a chain of warnings.
// Warnings are folded into one patch per <allocation function, CCID>.

#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "heapseal/callgraph.hpp"
#include "heapseal/encoder.hpp"
#include "heapseal/error.hpp"
#include "heapseal/patch.hpp"
#include "heapseal/text.hpp"
#include "heapseal/trace.hpp"

namespace heapseal {

inline constexpr std::uint64_t kDefaultQuotaBytes = 1ULL << 20;
// Production-scale quarantine quota; the desk-scale default above is used
// unless a caller asks for this one.
inline constexpr std::uint64_t kProductionQuotaBytes = 2ULL << 30;
inline constexpr std::uint64_t kDefaultRedzoneBytes = 16;
inline constexpr std::uint64_t kDefaultSeed = 42;

enum class WarningKind { kOverflow, kUseAfterFree, kUninitRead };

inline std::string_view to_string(WarningKind k) {
  switch (k) {
    case WarningKind::kOverflow: return "OVERFLOW";
    case WarningKind::kUseAfterFree: return "UAF";
    case WarningKind::kUninitRead: return "UNINIT";
  }
  return "?";
}

inline VulnMask mask_of(WarningKind k) {
  switch (k) {
    case WarningKind::kOverflow: return VulnMask(VulnMask::kOverflow);
    case WarningKind::kUseAfterFree: return VulnMask(VulnMask::kUseAfterFree);
    case WarningKind::kUninitRead: return VulnMask(VulnMask::kUninitRead);
  }
  return {};
}

struct Warning {
  WarningKind kind = WarningKind::kOverflow;
  std::string origin_buf;
  AllocFun origin_fun = AllocFun::kMalloc;
  Ccid origin_ccid = 0;
  std::size_t event_index = 0;
  // Set when an overflow reached past the red zone. A real red zone could
  // miss such an access; the simulator attributes it anyway.
  bool beyond_redzone = false;

  bool operator==(const Warning&) const = default;
};

inline std::string format_warning(const Warning& w) {
  std::string s = "warning kind=" + std::string(to_string(w.kind)) + " buf=" +
                  w.origin_buf + " fun=" + std::string(to_string(w.origin_fun)) +
                  " ccid=" + text::hex16(w.origin_ccid) +
                  " event=" + std::to_string(w.event_index);
  if (w.beyond_redzone) s += " note=beyond-redzone";
  return s;
}

struct AnalysisConfig {
  std::uint64_t quota_bytes = kDefaultQuotaBytes;
  std::uint64_t redzone_bytes = kDefaultRedzoneBytes;
  std::uint64_t seed = kDefaultSeed;
};

// The CCID an allocation (or realloc) was recorded under.
struct AllocationRecord {
  std::size_t event_index = 0;
  std::string buf;
  AllocFun fun = AllocFun::kMalloc;
  Ccid ccid = 0;

  bool operator==(const AllocationRecord&) const = default;
};

struct AnalysisResult {
  std::vector<Warning> warnings;
  std::vector<Patch> patches;
  std::vector<AllocationRecord> allocations;
  std::uint64_t quarantine_peak_bytes = 0;
};

// Groups warnings by their origin allocation and ORs the vulnerability bits.
inline std::vector<Patch> patches_from_warnings(const std::vector<Warning>& warnings) {
  std::map<std::pair<std::string, Ccid>, Patch> grouped;
  for (const auto& w : warnings) {
    auto key = std::pair{std::string(to_string(w.origin_fun)), w.origin_ccid};
    auto [it, inserted] = grouped.try_emplace(key, Patch{w.origin_fun, w.origin_ccid, {}, {}});
    it->second.t |= mask_of(w.kind);
  }
  std::vector<Patch> out;
  for (auto& [key, p] : grouped) out.push_back(std::move(p));
  return out;
}

inline bool valid_alignment(std::uint64_t align) {
  return align >= 8 && (align & (align - 1)) == 0;
}

enum class Accessibility : std::uint8_t { kAccessible, kRedZone, kFreed };

class ShadowHeap {
 public:
  enum class State { kLive, kQuarantined, kEvicted };

  static constexpr std::uint32_t kNoOrigin = std::numeric_limits<std::uint32_t>::max();

  struct Block {
    std::string id;
    AllocFun fun = AllocFun::kMalloc;
    Ccid ccid = 0;
    std::uint64_t size = 0;
    std::uint64_t redzone = 0;
    State state = State::kLive;
    // A-map over [leading red zone | user bytes | trailing red zone].
    std::vector<Accessibility> a_map;
    // V-map and origin map over the user bytes. origin[i] is a block index.
    std::vector<std::uint8_t> valid;
    std::vector<std::uint32_t> origin;
  };

  // Classification of one byte access relative to a block.
  enum class Touch { kUser, kRedZone, kBeyond, kFreed, kUntracked };

  ShadowHeap(std::uint64_t quota_bytes, std::uint64_t redzone_bytes)
      : quota_(quota_bytes), redzone_(redzone_bytes) {
    if (redzone_bytes < 1) throw RangeError("red zone must be at least one byte");
  }

  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  const std::deque<std::uint32_t>& quarantine() const noexcept { return quarantine_; }
  std::uint64_t quarantined_bytes() const noexcept { return quarantined_bytes_; }
  std::uint64_t quarantine_peak_bytes() const noexcept { return peak_; }
  std::uint64_t quota() const noexcept { return quota_; }
  const std::vector<std::uint32_t>& evictions() const noexcept { return evictions_; }

  // Block currently bound to `id`, if the label was ever introduced.
  std::optional<std::uint32_t> find(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

  bool is_live(const std::string& id) const {
    auto b = find(id);
    return b && blocks_[*b].state == State::kLive;
  }

  std::uint32_t allocate(const std::string& id, AllocFun fun, Ccid ccid,
                         std::uint64_t size, bool defined) {
    auto index = static_cast<std::uint32_t>(blocks_.size());
    Block b;
    b.id = id;
    b.fun = fun;
    b.ccid = ccid;
    b.size = size;
    b.redzone = redzone_;
    b.a_map.assign(size + 2 * redzone_, Accessibility::kRedZone);
    std::fill_n(b.a_map.begin() + static_cast<std::ptrdiff_t>(redzone_), size,
                Accessibility::kAccessible);
    b.valid.assign(size, defined ? 1 : 0);
    b.origin.assign(size, defined ? kNoOrigin : index);
    blocks_.push_back(std::move(b));
    by_id_[id] = index;
    return index;
  }

  void release(std::uint32_t index) {
    Block& b = blocks_[index];
    std::fill(b.a_map.begin(), b.a_map.end(), Accessibility::kFreed);
    b.state = State::kQuarantined;
    quarantine_.push_back(index);
    quarantined_bytes_ += b.size;
    while (quarantined_bytes_ > quota_) {
      std::uint32_t oldest = quarantine_.front();
      quarantine_.pop_front();
      Block& victim = blocks_[oldest];
      quarantined_bytes_ -= victim.size;
      victim.state = State::kEvicted;
      victim.a_map.clear();
      victim.valid.clear();
      victim.origin.clear();
      evictions_.push_back(oldest);
    }
    peak_ = std::max(peak_, quarantined_bytes_);
  }

  Touch touch(std::uint32_t index, std::int64_t offset) const {
    const Block& b = blocks_[index];
    if (b.state == State::kEvicted) return Touch::kUntracked;
    auto rz = static_cast<std::int64_t>(b.redzone);
    auto size = static_cast<std::int64_t>(b.size);
    if (offset < -rz || offset >= size + rz)
      return b.state == State::kQuarantined ? Touch::kFreed : Touch::kBeyond;
    switch (b.a_map[static_cast<std::size_t>(offset + rz)]) {
      case Accessibility::kAccessible: return Touch::kUser;
      case Accessibility::kRedZone: return Touch::kRedZone;
      case Accessibility::kFreed: return Touch::kFreed;
    }
    return Touch::kUntracked;
  }

  Block& block(std::uint32_t index) { return blocks_[index]; }
  const Block& block(std::uint32_t index) const { return blocks_[index]; }

 private:
  std::uint64_t quota_;
  std::uint64_t redzone_;
  std::vector<Block> blocks_;
  std::unordered_map<std::string, std::uint32_t> by_id_;
  std::deque<std::uint32_t> quarantine_;
  std::uint64_t quarantined_bytes_ = 0;
  std::uint64_t peak_ = 0;
  std::vector<std::uint32_t> evictions_;
};

class OfflineAnalyzer {
 public:
  OfflineAnalyzer(const CallGraph& g, const InstrumentationSet& instr,
                  const AnalysisConfig& cfg)
      : tracker_(instr, cfg.seed), heap_(cfg.quota_bytes, cfg.redzone_bytes) {
    std::set<CallSite> edges(g.edges.begin(), g.edges.end());
    for (const auto& s : instr.sites)
      if (!edges.count(s))
        throw Error("instrumentation set names a call site outside the graph: " +
                    to_string(s));
  }

  void step(const Event& event) {
    std::visit([this](const auto& e) { on(e); }, event);
    ++index_;
  }

  void run(const Trace& trace) {
    for (const auto& e : trace.events) step(e);
  }

  const ShadowHeap& heap() const noexcept { return heap_; }
  const std::vector<Warning>& warnings() const noexcept { return warnings_; }
  const std::vector<AllocationRecord>& allocations() const noexcept { return allocations_; }
  Ccid current_ccid() const noexcept { return tracker_.current(); }

  AnalysisResult result() const {
    return {warnings_, patches_from_warnings(warnings_), allocations_,
            heap_.quarantine_peak_bytes()};
  }

 private:
  using Touch = ShadowHeap::Touch;

  [[noreturn]] void fail(const std::string& what) const { throw TraceError(index_, what); }

  std::uint32_t resolve(const std::string& id) const {
    auto b = heap_.find(id);
    if (!b) fail("unknown buffer '" + id + "'");
    return *b;
  }

  void warn(WarningKind kind, std::uint32_t block, bool beyond = false) {
    const auto& b = heap_.block(block);
    Warning w{kind, b.id, b.fun, b.ccid, index_, beyond};
    for (const auto& prev : pending_)
      if (prev.kind == kind && prev.origin_buf == w.origin_buf &&
          prev.origin_ccid == w.origin_ccid && prev.origin_fun == w.origin_fun) {
        return;
      }
    pending_.push_back(std::move(w));
  }

  void flush() {
    for (auto& w : pending_) warnings_.push_back(std::move(w));
    pending_.clear();
  }

  // Reports accessibility violations over [offset, offset + len) and returns
  // whether the block is still tracked.
  bool check_range(std::uint32_t block, std::int64_t offset, std::uint64_t len) {
    bool overflow = false, beyond = false, freed = false;
    if (heap_.block(block).state == ShadowHeap::State::kEvicted) return false;
    for (std::uint64_t i = 0; i < len; ++i) {
      switch (heap_.touch(block, offset + static_cast<std::int64_t>(i))) {
        case Touch::kRedZone: overflow = true; break;
        case Touch::kBeyond: overflow = beyond = true; break;
        case Touch::kFreed: freed = true; break;
        default: break;
      }
    }
    if (overflow) warn(WarningKind::kOverflow, block, beyond);
    if (freed) warn(WarningKind::kUseAfterFree, block);
    return true;
  }

  void on(const ev::Call& e) { tracker_.call(e.site); }

  void on(const ev::Ret&) {
    if (tracker_.depth() == 0) fail("return with an empty call stack");
    tracker_.ret();
  }

  void on(const ev::Alloc& e) {
    if (heap_.is_live(e.id)) fail("allocation of live buffer '" + e.id + "'");
    if (e.size == 0) fail("zero-byte allocation");
    if (e.align && !valid_alignment(*e.align))
      fail("alignment " + std::to_string(*e.align) + " is not a power of two >= 8");
    heap_.allocate(e.id, e.fun, tracker_.current(), e.size, e.fun == AllocFun::kCalloc);
    allocations_.push_back({index_, e.id, e.fun, tracker_.current()});
  }

  void on(const ev::Realloc& e) {
    if (!heap_.is_live(e.old_id)) fail("realloc of non-live buffer '" + e.old_id + "'");
    if (heap_.is_live(e.new_id)) fail("realloc target '" + e.new_id + "' is live");
    if (e.size == 0) fail("zero-byte realloc");
    std::uint32_t old_block = *heap_.find(e.old_id);
    std::uint32_t fresh =
        heap_.allocate(e.new_id, AllocFun::kRealloc, tracker_.current(), e.size, false);
    // Bytes carried over keep their validity and origin; the grown tail is
    // undefined and originates here. A shrink simply leaves the cut-off bytes
    // outside the new buffer, i.e. in its red zone.
    auto& from = heap_.block(old_block);
    auto& to = heap_.block(fresh);
    std::uint64_t keep = std::min(from.size, to.size);
    std::copy_n(from.valid.begin(), keep, to.valid.begin());
    std::copy_n(from.origin.begin(), keep, to.origin.begin());
    heap_.release(old_block);
    allocations_.push_back({index_, e.new_id, AllocFun::kRealloc, tracker_.current()});
  }

  void on(const ev::Free& e) {
    std::uint32_t b = resolve(e.id);
    if (heap_.block(b).state != ShadowHeap::State::kLive) fail("double free of '" + e.id + "'");
    heap_.release(b);
  }

  void on(const ev::Write& e) {
    std::uint32_t b = resolve(e.id);
    if (check_range(b, e.offset, e.len)) {
      auto& blk = heap_.block(b);
      for (std::uint64_t i = 0; i < e.len; ++i) {
        std::int64_t off = e.offset + static_cast<std::int64_t>(i);
        if (heap_.touch(b, off) != Touch::kUser) continue;
        blk.valid[static_cast<std::size_t>(off)] = 1;
        blk.origin[static_cast<std::size_t>(off)] = ShadowHeap::kNoOrigin;
      }
    }
    flush();
  }

  void on(const ev::Read& e) {
    std::uint32_t b = resolve(e.id);
    if (check_range(b, e.offset, e.len) && is_checked(e.sink)) {
      auto& blk = heap_.block(b);
      std::vector<std::uint32_t> origins;
      for (std::uint64_t i = 0; i < e.len; ++i) {
        std::int64_t off = e.offset + static_cast<std::int64_t>(i);
        if (heap_.touch(b, off) != Touch::kUser) continue;
        auto at = static_cast<std::size_t>(off);
        if (blk.valid[at]) continue;
        if (std::find(origins.begin(), origins.end(), blk.origin[at]) == origins.end())
          origins.push_back(blk.origin[at]);
        blk.valid[at] = 1;
        blk.origin[at] = ShadowHeap::kNoOrigin;
      }
      for (std::uint32_t o : origins) warn(WarningKind::kUninitRead, o);
    }
    flush();
  }

  void on(const ev::Copy& e) {
    std::uint32_t src = resolve(e.src);
    std::uint32_t dst = resolve(e.dst);
    bool src_tracked = check_range(src, e.src_offset, e.len);
    bool dst_tracked = check_range(dst, e.dst_offset, e.len);
    if (dst_tracked) {
      // Snapshot first so overlapping ranges behave like memmove. Bytes read
      // from inaccessible memory count as defined.
      std::vector<std::pair<std::uint8_t, std::uint32_t>> shadow(
          e.len, {std::uint8_t{1}, ShadowHeap::kNoOrigin});
      if (src_tracked) {
        const auto& from = heap_.block(src);
        for (std::uint64_t i = 0; i < e.len; ++i) {
          std::int64_t off = e.src_offset + static_cast<std::int64_t>(i);
          if (heap_.touch(src, off) != Touch::kUser) continue;
          auto at = static_cast<std::size_t>(off);
          shadow[i] = {from.valid[at], from.origin[at]};
        }
      }
      auto& to = heap_.block(dst);
      for (std::uint64_t i = 0; i < e.len; ++i) {
        std::int64_t off = e.dst_offset + static_cast<std::int64_t>(i);
        if (heap_.touch(dst, off) != Touch::kUser) continue;
        auto at = static_cast<std::size_t>(off);
        to.valid[at] = shadow[i].first;
        to.origin[at] = shadow[i].second;
      }
    }
    flush();
  }

  ContextTracker tracker_;
  ShadowHeap heap_;
  std::size_t index_ = 0;
  std::vector<Warning> warnings_;
  std::vector<Warning> pending_;
  std::vector<AllocationRecord> allocations_;
};

inline AnalysisResult analyze(const CallGraph& g, const InstrumentationSet& instr,
                              const Trace& trace, const AnalysisConfig& cfg = {}) {
  OfflineAnalyzer analyzer(g, instr, cfg);
  analyzer.run(trace);
  return analyzer.result();
}

}  // namespace heapseal
