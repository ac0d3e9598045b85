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

// Online defense over a simulated hardened heap.
//
// The VirtualHeap interposes on a plain first-fit allocator the way a
// preloaded malloc wrapper would: every allocation looks up
// <function, CCID> in the frozen patch table and, on a hit, hardens the
// buffer according to its vulnerability mask.
//
//   overflow        guard page after the (page-padded) user buffer
//   use-after-free  on free, the block is parked in a FIFO quarantine
//   uninit read     user bytes are zero-filled before being returned
//
// Memory contents are simulated byte for byte. Fresh allocations hold the
// indeterminate pattern 0xa5 so that leaks of uninitialized data are
// observable; program writes store 0x57.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <variant>
#include <vector>

#include "heapseal/callgraph.hpp"
#include "heapseal/encoder.hpp"
#include "heapseal/error.hpp"
#include "heapseal/metadata.hpp"
#include "heapseal/offline.hpp"
#include "heapseal/patch.hpp"
#include "heapseal/text.hpp"
#include "heapseal/trace.hpp"

namespace heapseal {

inline constexpr std::uint8_t kIndeterminateByte = 0xa5;
inline constexpr std::uint8_t kWrittenByte = 0x57;
inline constexpr std::uint64_t kWordSize = 8;

constexpr std::uint64_t round_up(std::uint64_t v, std::uint64_t to) {
  return (v + to - 1) / to * to;
}

// Deterministic first-fit allocator standing in for the system malloc.
class FirstFitAllocator {
 public:
  FirstFitAllocator(std::uint64_t base, std::uint64_t size) {
    if (base % kPageSize != 0) throw RangeError("arena base must be page aligned");
    if (base + size > kAddressLimit) throw RangeError("arena exceeds the 48-bit address space");
    free_[base] = size;
  }

  std::uint64_t allocate(std::uint64_t size, std::uint64_t align) {
    size = round_up(std::max<std::uint64_t>(size, 1), kWordSize);
    align = std::max(align, kWordSize);
    for (auto it = free_.begin(); it != free_.end(); ++it) {
      std::uint64_t start = it->first, end = it->first + it->second;
      std::uint64_t at = round_up(start, align);
      if (at + size > end) continue;
      free_.erase(it);
      if (at > start) free_[start] = at - start;
      if (at + size < end) free_[at + size] = end - (at + size);
      live_[at] = size;
      return at;
    }
    throw OutOfMemoryError("simulated heap exhausted (" + std::to_string(size) + " bytes)");
  }

  void release(std::uint64_t addr) {
    auto it = live_.find(addr);
    if (it == live_.end()) throw std::logic_error("release of unknown block");
    std::uint64_t start = addr, end = addr + it->second;
    live_.erase(it);

    auto next = free_.lower_bound(start);
    if (next != free_.end() && next->first == end) {
      end += next->second;
      next = free_.erase(next);
    }
    if (next != free_.begin()) {
      auto prev = std::prev(next);
      if (prev->first + prev->second == start) {
        start = prev->first;
        free_.erase(prev);
      }
    }
    free_[start] = end - start;
  }

  const std::map<std::uint64_t, std::uint64_t>& live_blocks() const noexcept { return live_; }
  const std::map<std::uint64_t, std::uint64_t>& free_ranges() const noexcept { return free_; }

 private:
  std::map<std::uint64_t, std::uint64_t> free_;
  std::map<std::uint64_t, std::uint64_t> live_;
};

enum class BlockKind { kGuardPage, kUafQuarantine, kUnmapped };

inline std::string_view to_string(BlockKind k) {
  switch (k) {
    case BlockKind::kGuardPage: return "guard-page";
    case BlockKind::kUafQuarantine: return "uaf-quarantine";
    case BlockKind::kUnmapped: return "unmapped";
  }
  return "?";
}

struct HeapConfig {
  std::uint64_t arena_base = 0x100000000000ULL;
  std::uint64_t arena_size = 1ULL << 36;
  std::uint64_t quota_bytes = kDefaultQuotaBytes;
  // Quarantined blocks fault on access. With this off, quarantine only
  // defers reuse and touches are merely noted.
  bool strict_uaf = false;
};

class VirtualHeap {
 public:
  enum class State { kLive, kQuarantined, kReleased };

  struct Buffer {
    std::string id;
    AllocFun fun = AllocFun::kMalloc;
    Ccid ccid = 0;
    StructureKind kind = StructureKind::kS1;
    VulnMask t;
    std::uint64_t p = 0;           // user address
    std::uint64_t size = 0;
    std::uint64_t base = 0;        // block address handed out by the allocator
    std::uint64_t guard = 0;       // guard page address, 0 if none
    std::uint64_t meta = 0;        // copy of the word stored at p - 8
    bool zero_filled = false;      // zeroed because of an uninit patch
    State state = State::kLive;
  };

  struct AccessResult {
    bool blocked = false;
    BlockKind block_kind = BlockKind::kGuardPage;
    std::uint32_t owner = 0;       // buffer charged with the fault
    bool touched_quarantine = false;
    std::uint64_t indeterminate_bytes = 0;  // within the user range, reads only
    std::vector<std::uint8_t> data;         // bytes read
  };

  enum class FreeOutcome { kReleased, kQuarantined, kDoubleFree };

  explicit VirtualHeap(const HeapConfig& cfg = {})
      : cfg_(cfg), allocator_(cfg.arena_base, cfg.arena_size) {}

  const HeapConfig& config() const noexcept { return cfg_; }
  const FirstFitAllocator& allocator() const noexcept { return allocator_; }
  const std::vector<Buffer>& buffers() const noexcept { return buffers_; }
  const Buffer& buffer(std::uint32_t i) const { return buffers_[i]; }
  const std::deque<std::uint32_t>& quarantine() const noexcept { return quarantine_; }
  std::uint64_t quarantined_bytes() const noexcept { return quarantined_bytes_; }
  std::uint64_t quarantine_peak_bytes() const noexcept { return peak_; }
  // Every block address passed back to the underlying allocator, in order.
  const std::vector<std::uint64_t>& release_log() const noexcept { return release_log_; }
  const std::vector<std::uint32_t>& evictions() const noexcept { return evictions_; }

  std::optional<std::uint32_t> find(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

  bool is_live(const std::string& id) const {
    auto b = find(id);
    return b && buffers_[*b].state == State::kLive;
  }

  bool page_accessible(std::uint64_t addr) const {
    return guards_.find(addr & ~(kPageSize - 1)) == guards_.end();
  }

  std::uint64_t allocate(AllocFun fun, const std::string& id, std::uint64_t size,
                         std::optional<std::uint64_t> align, Ccid ccid,
                         const PatchTable& table) {
    if (size == 0) throw Error("zero-byte allocation");
    if (size >= kAddressLimit) throw RangeError("allocation size exceeds 48 bits");
    bool aligned = is_aligned_fun(fun);
    if (aligned && !(align && valid_alignment(*align)))
      throw Error("alignment must be a power of two >= 8");
    if (is_live(id)) throw Error("allocation of live buffer '" + id + "'");

    const PatchTable::Entry* hit = table.lookup(fun, ccid);
    VulnMask t = hit ? hit->t : VulnMask{};
    StructureKind kind = choose_structure(t, aligned);

    std::uint64_t header = aligned ? *align : kWordSize;
    unsigned exp = aligned ? static_cast<unsigned>(std::countr_zero(*align)) : 0;
    std::uint64_t request = header + size;
    if (has_guard(kind)) request += (kPageSize - 1) + kPageSize;

    Buffer b;
    b.id = id;
    b.fun = fun;
    b.ccid = ccid;
    b.kind = kind;
    b.t = t;
    b.size = size;
    b.base = allocator_.allocate(request, header);
    b.p = b.base + header;
    fill(b.base, request, kIndeterminateByte);
    if (t.uninit_read() || fun == AllocFun::kCalloc) fill(b.p, size, 0);
    b.zero_filled = t.uninit_read();
    if (has_guard(kind)) {
      b.guard = round_up(b.p + size, kPageSize);
      store_word(b.guard, size);
      guards_[b.guard] = static_cast<std::uint32_t>(buffers_.size());
    }
    b.meta = pack_metadata(kind, t, aligned, has_guard(kind) ? b.guard : size, exp);
    store_word(b.p - kWordSize, b.meta);

    ++allocations_;
    if (hit) ++enhanced_;
    by_id_[id] = static_cast<std::uint32_t>(buffers_.size());
    buffers_.push_back(std::move(b));
    return buffers_.back().p;
  }

  // Mirrors the interposed free(): restore the guard page, recover the block
  // address from the metadata word, then quarantine or release.
  FreeOutcome free(const std::string& id) {
    auto idx = find(id);
    if (!idx || buffers_[*idx].state != State::kLive) return FreeOutcome::kDoubleFree;
    Buffer& b = buffers_[*idx];
    MetadataFields f = unpack_metadata(b.meta, b.kind);

    if (f.t.overflow()) guards_.erase(f.guard_addr);

    std::uint64_t pi = f.aligned ? b.p - (1ULL << f.align_exp) : b.p - kWordSize;
    if (pi != b.base) throw std::logic_error("metadata does not locate the block base");

    if (f.t.use_after_free()) {
      b.state = State::kQuarantined;
      quarantine_.push_back(*idx);
      quarantined_[b.base] = {b.base + allocator_.live_blocks().at(b.base), *idx};
      quarantined_bytes_ += b.size;
      while (quarantined_bytes_ > cfg_.quota_bytes) evict_oldest();
      peak_ = std::max(peak_, quarantined_bytes_);
      return b.state == State::kQuarantined ? FreeOutcome::kQuarantined
                                            : FreeOutcome::kReleased;
    }
    b.state = State::kReleased;
    release(pi);
    return FreeOutcome::kReleased;
  }

  // Allocate-copy-free under the realloc-time CCID.
  std::uint64_t reallocate(const std::string& old_id, const std::string& new_id,
                           std::uint64_t size, Ccid ccid, const PatchTable& table) {
    if (!is_live(old_id)) throw Error("realloc of non-live buffer '" + old_id + "'");
    if (is_live(new_id)) throw Error("realloc target '" + new_id + "' is live");
    std::uint32_t old_idx = *find(old_id);
    std::uint64_t old_size = user_size(old_idx);
    std::uint64_t p = allocate(AllocFun::kRealloc, new_id, size, std::nullopt, ccid, table);
    std::uint64_t keep = std::min(old_size, size);
    auto bytes = load(buffers_[old_idx].p, keep);
    store(p, bytes);
    free(old_id);
    return p;
  }

  // User size as the free path would recover it: from the metadata word, or
  // from the first word of the guard page for guarded structures.
  std::uint64_t user_size(std::uint32_t idx) const {
    const Buffer& b = buffers_[idx];
    MetadataFields f = unpack_metadata(b.meta, b.kind);
    return has_guard(b.kind) ? load_word(f.guard_addr) : f.size;
  }

  AccessResult access(const std::string& id, std::int64_t offset, std::uint64_t len,
                      bool is_write) {
    std::uint32_t idx = resolve(id);
    const Buffer& b = buffers_[idx];
    AccessResult r;
    r.owner = idx;
    r.touched_quarantine = b.state == State::kQuarantined;
    std::uint64_t addr = b.p + static_cast<std::uint64_t>(offset);

    if (auto fault = probe(addr, len, idx)) {
      r.blocked = true;
      r.block_kind = fault->first;
      r.owner = fault->second;
      return r;
    }
    if (is_write) {
      fill(addr, len, kWrittenByte);
    } else {
      r.data = load(addr, len);
      r.indeterminate_bytes = count_indeterminate(b, addr, r.data);
    }
    return r;
  }

  // memmove between two buffers; faults abort the whole transfer.
  std::pair<AccessResult, AccessResult> copy(const std::string& src, std::int64_t src_off,
                                             const std::string& dst, std::int64_t dst_off,
                                             std::uint64_t len) {
    std::uint32_t s = resolve(src), d = resolve(dst);
    AccessResult rs, rd;
    rs.owner = s;
    rd.owner = d;
    rs.touched_quarantine = buffers_[s].state == State::kQuarantined;
    rd.touched_quarantine = buffers_[d].state == State::kQuarantined;
    std::uint64_t from = buffers_[s].p + static_cast<std::uint64_t>(src_off);
    std::uint64_t to = buffers_[d].p + static_cast<std::uint64_t>(dst_off);
    if (auto fault = probe(from, len, s)) {
      rs.blocked = true;
      std::tie(rs.block_kind, rs.owner) = *fault;
    }
    if (auto fault = probe(to, len, d)) {
      rd.blocked = true;
      std::tie(rd.block_kind, rd.owner) = *fault;
    }
    if (!rs.blocked && !rd.blocked) store(to, load(from, len));
    return {rs, rd};
  }

  std::uint64_t load_word(std::uint64_t addr) const {
    auto bytes = load(addr, kWordSize);
    std::uint64_t w = 0;
    for (int i = 7; i >= 0; --i) w = (w << 8) | bytes[static_cast<std::size_t>(i)];
    return w;
  }

  std::vector<std::uint8_t> load(std::uint64_t addr, std::uint64_t len) const {
    std::vector<std::uint8_t> out(len, kIndeterminateByte);
    for (std::uint64_t i = 0; i < len;) {
      std::uint64_t page = (addr + i) & ~(kPageSize - 1);
      std::uint64_t in_page = (addr + i) - page;
      std::uint64_t n = std::min(len - i, kPageSize - in_page);
      if (auto it = pages_.find(page); it != pages_.end())
        std::copy_n(it->second->begin() + static_cast<std::ptrdiff_t>(in_page), n,
                    out.begin() + static_cast<std::ptrdiff_t>(i));
      i += n;
    }
    return out;
  }

  std::uint64_t allocations() const noexcept { return allocations_; }
  std::uint64_t enhanced() const noexcept { return enhanced_; }

 private:
  using Page = std::array<std::uint8_t, kPageSize>;

  std::uint32_t resolve(const std::string& id) const {
    auto idx = find(id);
    if (!idx) throw Error("unknown buffer '" + id + "'");
    return *idx;
  }

  // First inaccessible location in [addr, addr + len), with its owner.
  std::optional<std::pair<BlockKind, std::uint32_t>> probe(std::uint64_t addr,
                                                           std::uint64_t len,
                                                           std::uint32_t accessed) const {
    std::uint64_t end = addr + len;
    std::uint64_t arena_end = cfg_.arena_base + cfg_.arena_size;
    if (addr < cfg_.arena_base || end > arena_end || end < addr)
      return std::pair{BlockKind::kUnmapped, accessed};

    std::optional<std::pair<std::uint64_t, std::pair<BlockKind, std::uint32_t>>> first;
    auto consider = [&](std::uint64_t at, BlockKind k, std::uint32_t owner) {
      if (!first || at < first->first) first = {at, {k, owner}};
    };
    auto g = guards_.lower_bound(addr & ~(kPageSize - 1));
    if (g != guards_.end() && g->first < end)
      consider(std::max(g->first, addr), BlockKind::kGuardPage, g->second);
    if (cfg_.strict_uaf) {
      auto q = quarantined_.upper_bound(addr);
      if (q != quarantined_.begin()) {
        auto prev = std::prev(q);
        if (prev->second.first > addr)
          consider(addr, BlockKind::kUafQuarantine, prev->second.second);
      }
      if (q != quarantined_.end() && q->first < end)
        consider(q->first, BlockKind::kUafQuarantine, q->second.second);
    }
    if (!first) return std::nullopt;
    return first->second;
  }

  std::uint64_t count_indeterminate(const Buffer& b, std::uint64_t addr,
                                    const std::vector<std::uint8_t>& data) const {
    if (b.state != State::kLive) return 0;
    std::uint64_t n = 0;
    for (std::uint64_t i = 0; i < data.size(); ++i) {
      std::uint64_t a = addr + i;
      if (a >= b.p && a < b.p + b.size && data[i] == kIndeterminateByte) ++n;
    }
    return n;
  }

  void evict_oldest() {
    std::uint32_t idx = quarantine_.front();
    quarantine_.pop_front();
    Buffer& b = buffers_[idx];
    quarantined_bytes_ -= b.size;
    b.state = State::kReleased;
    quarantined_.erase(b.base);
    evictions_.push_back(idx);
    release(b.base);
  }

  void release(std::uint64_t base) {
    release_log_.push_back(base);
    allocator_.release(base);
  }

  Page& page_for(std::uint64_t page) {
    auto& slot = pages_[page];
    if (!slot) {
      slot = std::make_unique<Page>();
      slot->fill(kIndeterminateByte);
    }
    return *slot;
  }

  void fill(std::uint64_t addr, std::uint64_t len, std::uint8_t value) {
    for (std::uint64_t i = 0; i < len;) {
      std::uint64_t page = (addr + i) & ~(kPageSize - 1);
      std::uint64_t in_page = (addr + i) - page;
      std::uint64_t n = std::min(len - i, kPageSize - in_page);
      std::fill_n(page_for(page).begin() + static_cast<std::ptrdiff_t>(in_page), n, value);
      i += n;
    }
  }

  void store(std::uint64_t addr, const std::vector<std::uint8_t>& bytes) {
    for (std::uint64_t i = 0; i < bytes.size();) {
      std::uint64_t page = (addr + i) & ~(kPageSize - 1);
      std::uint64_t in_page = (addr + i) - page;
      std::uint64_t n = std::min<std::uint64_t>(bytes.size() - i, kPageSize - in_page);
      std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(i), n,
                  page_for(page).begin() + static_cast<std::ptrdiff_t>(in_page));
      i += n;
    }
  }

  void store_word(std::uint64_t addr, std::uint64_t w) {
    std::vector<std::uint8_t> bytes(kWordSize);
    for (std::size_t i = 0; i < kWordSize; ++i) bytes[i] = static_cast<std::uint8_t>(w >> (8 * i));
    store(addr, bytes);
  }

  HeapConfig cfg_;
  FirstFitAllocator allocator_;
  std::vector<Buffer> buffers_;
  std::unordered_map<std::string, std::uint32_t> by_id_;
  std::map<std::uint64_t, std::uint32_t> guards_;
  std::unordered_map<std::uint64_t, std::unique_ptr<Page>> pages_;
  std::deque<std::uint32_t> quarantine_;
  // Quarantined block ranges: base -> (end, owner).
  std::map<std::uint64_t, std::pair<std::uint64_t, std::uint32_t>> quarantined_;
  std::uint64_t quarantined_bytes_ = 0;
  std::uint64_t peak_ = 0;
  std::vector<std::uint64_t> release_log_;
  std::vector<std::uint32_t> evictions_;
  std::uint64_t allocations_ = 0;
  std::uint64_t enhanced_ = 0;
};


// What happened to one memory event during the online replay.
struct Observation {
  std::size_t event_index = 0;
  std::string buf;                // buffer named by the trace
  bool blocked = false;
  BlockKind block_kind = BlockKind::kGuardPage;
  std::string owner;              // buffer charged with the fault
  bool touched_quarantine = false;
  std::uint64_t indeterminate_bytes = 0;
  bool zero_filled = false;       // buffer read had been zero-filled by a patch
  std::optional<std::int64_t> guard_offset;  // guard page, relative to p
  std::int64_t offset = 0;
  std::uint64_t len = 0;
};

struct DefenseReport {
  struct Entry {
    std::string record;           // "blocked" or "note"
    std::string kind;
    std::string buf;
    std::size_t event_index = 0;
    std::optional<std::uint64_t> bytes;
  };

  std::vector<Entry> entries;     // event order
  std::vector<Observation> observations;
  std::vector<AllocationRecord> allocations;
  std::uint64_t allocation_count = 0;
  std::uint64_t enhanced_count = 0;
  std::uint64_t blocked_count = 0;
  std::uint64_t quarantine_peak_bytes = 0;

  bool any_blocked() const noexcept { return blocked_count != 0; }

  std::vector<const Observation*> at_event(std::size_t index) const {
    std::vector<const Observation*> out;
    for (const auto& o : observations)
      if (o.event_index == index) out.push_back(&o);
    return out;
  }
};

inline std::string format_report(const DefenseReport& r) {
  std::string out;
  for (const auto& e : r.entries) {
    out += e.record + " kind=" + e.kind + " buf=" + e.buf +
           " event=" + std::to_string(e.event_index);
    if (e.bytes) out += " bytes=" + std::to_string(*e.bytes);
    out += "\n";
  }
  out += "stats allocations=" + std::to_string(r.allocation_count) +
         " enhanced=" + std::to_string(r.enhanced_count) +
         " blocked=" + std::to_string(r.blocked_count) +
         " quarantine_peak_bytes=" + std::to_string(r.quarantine_peak_bytes) + "\n";
  return out;
}

// Replays a trace against the hardened heap. Blocked accesses are recorded
// and execution continues, so one replay characterizes the whole trace.
class OnlineDefender {
 public:
  OnlineDefender(const InstrumentationSet& instr, const PatchTable& table,
                 std::uint64_t seed, const HeapConfig& cfg = {})
      : tracker_(instr, seed), table_(&table), heap_(cfg) {}

  void step(const Event& event) {
    try {
      std::visit([this](const auto& e) { on(e); }, event);
    } catch (const TraceError&) {
      throw;
    } catch (const OutOfMemoryError&) {
      throw;
    } catch (const Error& e) {
      throw TraceError(index_, e.what());
    }
    ++index_;
  }

  void run(const Trace& trace) {
    for (const auto& e : trace.events) step(e);
  }

  const VirtualHeap& heap() const noexcept { return heap_; }

  DefenseReport report() const {
    DefenseReport r = report_;
    r.allocation_count = heap_.allocations();
    r.enhanced_count = heap_.enhanced();
    r.quarantine_peak_bytes = heap_.quarantine_peak_bytes();
    return r;
  }

 private:
  void on(const ev::Call& e) { tracker_.call(e.site); }

  void on(const ev::Ret&) {
    if (tracker_.depth() == 0) throw TraceError(index_, "return with an empty call stack");
    tracker_.ret();
  }

  void on(const ev::Alloc& e) {
    heap_.allocate(e.fun, e.id, e.size, e.align, tracker_.current(), *table_);
    report_.allocations.push_back({index_, e.id, e.fun, tracker_.current()});
  }

  void on(const ev::Realloc& e) {
    heap_.reallocate(e.old_id, e.new_id, e.size, tracker_.current(), *table_);
    report_.allocations.push_back({index_, e.new_id, AllocFun::kRealloc, tracker_.current()});
  }

  void on(const ev::Free& e) {
    if (heap_.free(e.id) == VirtualHeap::FreeOutcome::kDoubleFree)
      report_.entries.push_back({"note", "double-free", e.id, index_, std::nullopt});
  }

  void on(const ev::Write& e) {
    record(e.id, e.offset, e.len, heap_.access(e.id, e.offset, e.len, true));
  }

  void on(const ev::Read& e) {
    record(e.id, e.offset, e.len, heap_.access(e.id, e.offset, e.len, false));
  }

  void on(const ev::Copy& e) {
    auto [src, dst] = heap_.copy(e.src, e.src_offset, e.dst, e.dst_offset, e.len);
    record(e.src, e.src_offset, e.len, src);
    record(e.dst, e.dst_offset, e.len, dst);
  }

  void record(const std::string& id, std::int64_t offset, std::uint64_t len,
              const VirtualHeap::AccessResult& r) {
    const auto& b = heap_.buffer(*heap_.find(id));
    Observation o;
    o.event_index = index_;
    o.buf = id;
    o.blocked = r.blocked;
    o.block_kind = r.block_kind;
    o.owner = heap_.buffer(r.owner).id;
    o.touched_quarantine = r.touched_quarantine;
    o.indeterminate_bytes = r.indeterminate_bytes;
    o.zero_filled = b.zero_filled;
    if (b.guard) o.guard_offset = static_cast<std::int64_t>(b.guard - b.p);
    o.offset = offset;
    o.len = len;

    if (r.blocked) {
      ++report_.blocked_count;
      report_.entries.push_back(
          {"blocked", std::string(to_string(r.block_kind)), o.owner, index_, std::nullopt});
    } else if (r.touched_quarantine) {
      report_.entries.push_back({"note", "uaf-quarantine", id, index_, std::nullopt});
    }
    if (!r.blocked && !r.data.empty()) {
      if (r.indeterminate_bytes)
        report_.entries.push_back(
            {"note", "indeterminate-read", id, index_, r.indeterminate_bytes});
      else if (b.zero_filled && b.state == VirtualHeap::State::kLive)
        report_.entries.push_back({"note", "zero-filled-read", id, index_, std::nullopt});
    }
    report_.observations.push_back(std::move(o));
  }

  ContextTracker tracker_;
  const PatchTable* table_;
  VirtualHeap heap_;
  std::size_t index_ = 0;
  DefenseReport report_;
};

inline DefenseReport replay(const InstrumentationSet& instr, const PatchTable& table,
                            const Trace& trace, std::uint64_t seed,
                            const HeapConfig& cfg = {}) {
  OnlineDefender defender(instr, table, seed, cfg);
  defender.run(trace);
  return defender.report();
}
}  // namespace heapseal
