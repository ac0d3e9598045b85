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

#include <gtest/gtest.h>

#include <map>
#include <random>

#include "support/test_support.hpp"

namespace heapseal {
namespace {

constexpr std::uint64_t kBase = HeapConfig{}.arena_base;
constexpr Ccid kCtx = 0x1234;

PatchTable table_with(AllocFun fun, std::uint8_t t, Ccid ccid = kCtx) {
  return build_table({{fun, ccid, VulnMask(t), {}}});
}

const PatchTable kEmpty = build_table({});

bool all_equal(const std::vector<std::uint8_t>& bytes, std::uint8_t v) {
  return std::all_of(bytes.begin(), bytes.end(), [v](std::uint8_t b) { return b == v; });
}

TEST(VirtualHeapTest, UnpatchedMallocIsS1) {
  VirtualHeap h;
  auto p = h.allocate(AllocFun::kMalloc, "a", 64, std::nullopt, kCtx, kEmpty);
  EXPECT_EQ(p, kBase + 8);
  const auto& b = h.buffer(0);
  EXPECT_EQ(b.kind, StructureKind::kS1);
  EXPECT_EQ(b.guard, 0u);
  EXPECT_EQ(h.load_word(p - 8), pack_metadata(StructureKind::kS1, VulnMask{}, false, 64, 0));
  EXPECT_EQ(h.user_size(0), 64u);
  EXPECT_EQ(h.enhanced(), 0u);
}

TEST(VirtualHeapTest, OverflowPatchAddsGuardPage) {
  VirtualHeap h;
  auto table = table_with(AllocFun::kMalloc, VulnMask::kOverflow);
  auto p = h.allocate(AllocFun::kMalloc, "a", 100, std::nullopt, kCtx, table);
  const auto& b = h.buffer(0);
  EXPECT_EQ(b.kind, StructureKind::kS2);
  EXPECT_EQ(b.guard, kBase + kPageSize);
  EXPECT_FALSE(h.page_accessible(b.guard));
  EXPECT_TRUE(h.page_accessible(b.guard - 1));
  EXPECT_EQ(h.load_word(b.guard), 100u);  // user size lives in the guard page
  EXPECT_EQ(h.user_size(0), 100u);
  EXPECT_EQ(unpack_metadata(h.load_word(p - 8), StructureKind::kS2).guard_addr, b.guard);

  auto gap = static_cast<std::int64_t>(b.guard - p);
  EXPECT_FALSE(h.access("a", 100, 1, true).blocked);        // padding window
  EXPECT_FALSE(h.access("a", gap - 1, 1, true).blocked);
  auto r = h.access("a", gap, 1, true);
  EXPECT_TRUE(r.blocked);
  EXPECT_EQ(r.block_kind, BlockKind::kGuardPage);
  EXPECT_EQ(h.buffer(r.owner).id, "a");
  EXPECT_TRUE(h.access("a", 0, 5000, true).blocked);
  EXPECT_EQ(h.enhanced(), 1u);
}

TEST(VirtualHeapTest, PageFilledBufferOverflowBlockedImmediately) {
  VirtualHeap h;
  auto table = table_with(AllocFun::kMalloc, VulnMask::kOverflow);
  std::uint64_t size = kPageSize - 8;
  h.allocate(AllocFun::kMalloc, "a", size, std::nullopt, kCtx, table);
  EXPECT_EQ(h.buffer(0).guard, h.buffer(0).p + size);
  EXPECT_TRUE(h.access("a", static_cast<std::int64_t>(size), 1, true).blocked);
  EXPECT_FALSE(h.access("a", 0, size, true).blocked);
}

TEST(VirtualHeapTest, AlignedUninitPatchZeroFills) {
  VirtualHeap h;
  auto table = table_with(AllocFun::kMemalign, VulnMask::kUninitRead);
  auto p = h.allocate(AllocFun::kMemalign, "a", 64, 64, kCtx, table);
  EXPECT_EQ(p % 64, 0u);
  EXPECT_EQ(h.buffer(0).kind, StructureKind::kS3);
  EXPECT_EQ(h.buffer(0).base, p - 64);
  auto r = h.access("a", 0, 64, false);
  EXPECT_TRUE(all_equal(r.data, 0));
  EXPECT_EQ(r.indeterminate_bytes, 0u);
  auto f = unpack_metadata(h.load_word(p - 8), StructureKind::kS3);
  EXPECT_EQ(f.align_exp, 6u);
  EXPECT_EQ(f.size, 64u);
}

TEST(VirtualHeapTest, UnpatchedReadsAreIndeterminate) {
  VirtualHeap h;
  h.allocate(AllocFun::kMalloc, "a", 32, std::nullopt, kCtx, kEmpty);
  h.access("a", 0, 8, true);
  auto r = h.access("a", 0, 32, false);
  EXPECT_EQ(r.indeterminate_bytes, 24u);
  EXPECT_TRUE(all_equal({r.data.begin(), r.data.begin() + 8}, kWrittenByte));
}

TEST(VirtualHeapTest, CallocIsAlwaysZero) {
  VirtualHeap h;
  h.allocate(AllocFun::kCalloc, "a", 32, std::nullopt, kCtx, kEmpty);
  EXPECT_TRUE(all_equal(h.access("a", 0, 32, false).data, 0));
  EXPECT_FALSE(h.buffer(0).zero_filled);
}

TEST(VirtualHeapTest, FreeOfAlignedBlockReleasesBase) {
  VirtualHeap h;
  auto p = h.allocate(AllocFun::kMemalign, "a", 100, 64, kCtx, kEmpty);
  EXPECT_EQ(h.free("a"), VirtualHeap::FreeOutcome::kReleased);
  ASSERT_EQ(h.release_log().size(), 1u);
  EXPECT_EQ(h.release_log()[0], p - 64);
}

TEST(VirtualHeapTest, FreeRestoresGuardPage) {
  VirtualHeap h;
  auto table = table_with(AllocFun::kMalloc, VulnMask::kOverflow);
  h.allocate(AllocFun::kMalloc, "a", 100, std::nullopt, kCtx, table);
  auto guard = h.buffer(0).guard;
  h.free("a");
  EXPECT_TRUE(h.page_accessible(guard));
  EXPECT_EQ(h.release_log().back(), kBase);
  EXPECT_TRUE(h.allocator().live_blocks().empty());
}

TEST(VirtualHeapTest, QuarantinedBlockNotReused) {
  VirtualHeap h;
  auto table = table_with(AllocFun::kMalloc, VulnMask::kUseAfterFree);
  auto p = h.allocate(AllocFun::kMalloc, "a", 64, std::nullopt, kCtx, table);
  EXPECT_EQ(h.free("a"), VirtualHeap::FreeOutcome::kQuarantined);
  auto q = h.allocate(AllocFun::kMalloc, "b", 64, std::nullopt, kCtx + 1, table);
  EXPECT_NE(p, q);
  EXPECT_TRUE(h.release_log().empty());

  // Without the patch the block comes straight back.
  VirtualHeap plain;
  auto p2 = plain.allocate(AllocFun::kMalloc, "a", 64, std::nullopt, kCtx, kEmpty);
  plain.free("a");
  EXPECT_EQ(plain.allocate(AllocFun::kMalloc, "b", 64, std::nullopt, kCtx, kEmpty), p2);
}

TEST(VirtualHeapTest, DoubleFreeIsReported) {
  VirtualHeap h;
  h.allocate(AllocFun::kMalloc, "a", 8, std::nullopt, kCtx, kEmpty);
  h.free("a");
  EXPECT_EQ(h.free("a"), VirtualHeap::FreeOutcome::kDoubleFree);
  EXPECT_EQ(h.free("never"), VirtualHeap::FreeOutcome::kDoubleFree);
}

TEST(VirtualHeapTest, StrictModeBlocksQuarantinedAccess) {
  HeapConfig cfg;
  cfg.strict_uaf = true;
  VirtualHeap h(cfg);
  auto table = table_with(AllocFun::kMalloc, VulnMask::kUseAfterFree);
  h.allocate(AllocFun::kMalloc, "a", 64, std::nullopt, kCtx, table);
  h.free("a");
  auto r = h.access("a", 0, 8, false);
  EXPECT_TRUE(r.blocked);
  EXPECT_EQ(r.block_kind, BlockKind::kUafQuarantine);

  VirtualHeap compat;
  compat.allocate(AllocFun::kMalloc, "a", 64, std::nullopt, kCtx, table);
  compat.free("a");
  auto c = compat.access("a", 0, 8, false);
  EXPECT_FALSE(c.blocked);
  EXPECT_TRUE(c.touched_quarantine);
}

TEST(VirtualHeapTest, ReallocGrowPreservesPrefix) {
  VirtualHeap h;
  h.allocate(AllocFun::kMalloc, "a", 16, std::nullopt, kCtx, kEmpty);
  h.access("a", 0, 16, true);
  h.reallocate("a", "b", 32, kCtx, kEmpty);
  auto r = h.access("b", 0, 32, false);
  EXPECT_TRUE(all_equal({r.data.begin(), r.data.begin() + 16}, kWrittenByte));
  EXPECT_EQ(r.indeterminate_bytes, 16u);
  EXPECT_FALSE(h.is_live("a"));
}

TEST(VirtualHeapTest, ReallocGrowOfUninitPatchedIsZeroTail) {
  VirtualHeap h;
  auto table = table_with(AllocFun::kRealloc, VulnMask::kUninitRead);
  h.allocate(AllocFun::kMalloc, "a", 16, std::nullopt, kCtx, kEmpty);
  h.access("a", 0, 16, true);
  h.reallocate("a", "b", 32, kCtx, table);
  auto r = h.access("b", 0, 32, false);
  EXPECT_TRUE(all_equal({r.data.begin(), r.data.begin() + 16}, kWrittenByte));
  EXPECT_TRUE(all_equal({r.data.begin() + 16, r.data.end()}, 0));
}

TEST(VirtualHeapTest, ReallocShrinkMovesGuard) {
  VirtualHeap h;
  auto table = table_with(AllocFun::kRealloc, VulnMask::kOverflow);
  h.allocate(AllocFun::kMalloc, "a", 32, std::nullopt, kCtx, kEmpty);
  auto p = h.reallocate("a", "b", 16, kCtx, table);
  const auto& b = h.buffer(*h.find("b"));
  EXPECT_EQ(b.kind, StructureKind::kS2);
  EXPECT_EQ(b.guard, round_up(p + 16, kPageSize));
  EXPECT_EQ(h.user_size(*h.find("b")), 16u);
  EXPECT_FALSE(h.access("b", 16, 1, true).blocked);
  EXPECT_TRUE(h.access("b", static_cast<std::int64_t>(b.guard - p), 1, true).blocked);
}

TEST(VirtualHeapTest, OutsideArenaIsUnmapped) {
  VirtualHeap h;
  h.allocate(AllocFun::kMalloc, "a", 8, std::nullopt, kCtx, kEmpty);
  auto r = h.access("a", -64, 8, false);
  EXPECT_TRUE(r.blocked);
  EXPECT_EQ(r.block_kind, BlockKind::kUnmapped);
}

TEST(VirtualHeapTest, RejectsBadRequests) {
  VirtualHeap h;
  EXPECT_THROW(h.allocate(AllocFun::kMalloc, "a", 0, std::nullopt, kCtx, kEmpty), Error);
  EXPECT_THROW(h.allocate(AllocFun::kMemalign, "a", 8, 12, kCtx, kEmpty), Error);
  h.allocate(AllocFun::kMalloc, "a", 8, std::nullopt, kCtx, kEmpty);
  EXPECT_THROW(h.allocate(AllocFun::kMalloc, "a", 8, std::nullopt, kCtx, kEmpty), Error);
  EXPECT_THROW(h.access("zz", 0, 1, false), Error);
  EXPECT_THROW(h.reallocate("zz", "b", 8, kCtx, kEmpty), Error);
}

// Replay on the fixtures.

struct Fixture {
  CallGraph g = testing::app_graph();
  InstrumentationSet instr = instrumentation_set(g, Strategy::kIncremental);

  PatchTable patches_for(const std::string& trace) const {
    auto r = analyze(g, instr, testing::load_trace(trace));
    return build_table(parse_patches(serialize_patches(r.patches)));
  }
};

TEST(Replay, OverflowBlockedWithPatch) {
  Fixture f;
  auto table = f.patches_for("overflow.trace");
  auto report = replay(f.instr, table, testing::load_trace("overflow.trace"), kDefaultSeed);
  ASSERT_EQ(report.blocked_count, 1u);
  EXPECT_EQ(report.entries[0].record, "blocked");
  EXPECT_EQ(report.entries[0].kind, "guard-page");
  EXPECT_EQ(report.entries[0].buf, "reply");
  EXPECT_EQ(report.enhanced_count, 1u);  // logline shares the site, not the context
}

TEST(Replay, EmptyTableNeverBlocks) {
  Fixture f;
  for (const char* t : {"overflow.trace", "uaf.trace", "uninit.trace", "heartbleed.trace"}) {
    auto report = replay(f.instr, kEmpty, testing::load_trace(t), kDefaultSeed);
    EXPECT_EQ(report.blocked_count, 0u) << t;
    EXPECT_EQ(report.enhanced_count, 0u) << t;
  }
}

TEST(Replay, BenignTraceUnderAttackPatches) {
  Fixture f;
  for (const char* t : {"overflow.trace", "uaf.trace", "uninit.trace", "heartbleed.trace"}) {
    auto table = f.patches_for(t);
    auto report = replay(f.instr, table, testing::load_trace("benign.trace"), kDefaultSeed);
    EXPECT_EQ(report.blocked_count, 0u) << t;
  }
}

TEST(Replay, UninitPatchedBufferReadsZeros) {
  Fixture f;
  auto table = f.patches_for("uninit.trace");
  auto report = replay(f.instr, table, testing::load_trace("uninit.trace"), kDefaultSeed);
  EXPECT_EQ(report.blocked_count, 0u);
  for (const auto& e : report.entries) EXPECT_NE(e.kind, "indeterminate-read");
  // The body is copied out, so its zero fill shows up on the copy source.
  bool body_zeroed = false;
  for (const auto& o : report.observations)
    body_zeroed = body_zeroed || (o.buf == "body" && o.zero_filled);
  EXPECT_TRUE(body_zeroed);

  auto unpatched = replay(f.instr, kEmpty, testing::load_trace("uninit.trace"), kDefaultSeed);
  bool leak = false;
  for (const auto& e : unpatched.entries)
    if (e.kind == "indeterminate-read") leak = *e.bytes == 28;
  EXPECT_TRUE(leak);
}

TEST(Replay, ReportFormat) {
  Fixture f;
  auto table = f.patches_for("overflow.trace");
  auto text = format_report(replay(f.instr, table, testing::load_trace("overflow.trace"), 42));
  EXPECT_EQ(text,
            "blocked kind=guard-page buf=reply event=5\n"
            "stats allocations=2 enhanced=1 blocked=1 quarantine_peak_bytes=0\n");
}

TEST(Replay, HardErrorsCarryEventIndex) {
  Fixture f;
  try {
    replay(f.instr, kEmpty, parse_trace("alloc malloc a 8\nret\n"), 42);
    FAIL();
  } catch (const TraceError& e) {
    EXPECT_EQ(e.event_index(), 1u);
  }
  EXPECT_THROW(replay(f.instr, kEmpty, parse_trace("read q 0 1 copy\n"), 42), TraceError);
}

// Properties.

// Random heap workload with a random patch table over a handful of CCIDs.
class Workload {
 public:
  explicit Workload(std::uint64_t seed, bool patched, HeapConfig cfg = {})
      : rng_(seed), heap_(cfg) {
    std::vector<Patch> ps;
    if (patched)
      for (Ccid c = 0; c < 4; ++c)
        for (AllocFun fun : kAllAllocFuns)
          if (rng_() % 2)
            ps.push_back({fun, c, VulnMask(static_cast<std::uint8_t>(1 + rng_() % 7)), {}});
    table_ = build_table(ps);
  }

  void step() {
    std::uint64_t roll = rng_() % 6;
    if (live_.empty() || roll == 0) {
      AllocFun fun = kAllAllocFuns[rng_() % 4];
      std::optional<std::uint64_t> align;
      if (is_aligned_fun(fun)) align = 8ULL << (rng_() % 7);
      std::uint64_t size = 1 + rng_() % 9000;
      auto id = fresh();
      auto p = heap_.allocate(fun, id, size, align, rng_() % 6, table_);
      on_alloc(id, p, align.value_or(8));
      return;
    }
    auto id = live_[rng_() % live_.size()];
    switch (roll) {
      case 1:
        heap_.free(id);
        live_.erase(std::find(live_.begin(), live_.end(), id));
        break;
      case 2: {
        auto nid = fresh();
        auto p = heap_.reallocate(id, nid, 1 + rng_() % 9000, rng_() % 6, table_);
        live_.erase(std::find(live_.begin(), live_.end(), id));
        on_alloc(nid, p, 8);
        break;
      }
      default: {
        const auto& b = heap_.buffer(*heap_.find(id));
        auto off = static_cast<std::int64_t>(rng_() % b.size);
        auto len = 1 + rng_() % (b.size - static_cast<std::uint64_t>(off));
        auto r = heap_.access(id, off, len, roll == 3);
        blocked_ = blocked_ || r.blocked;
      }
    }
  }

  VirtualHeap& heap() { return heap_; }
  const std::vector<std::string>& live() const { return live_; }
  bool any_blocked() const { return blocked_; }
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::string fresh() { return "b" + std::to_string(next_++); }

  void on_alloc(const std::string& id, std::uint64_t p, std::uint64_t align) {
    live_.push_back(id);
    if (p % align != 0) violations_.push_back(id + " misaligned");
    for (const auto& b : heap_.buffers()) {
      if (b.state != VirtualHeap::State::kQuarantined) continue;
      auto end = b.base + heap_.allocator().live_blocks().at(b.base);
      if (p >= b.base && p < end) violations_.push_back(id + " inside quarantined " + b.id);
    }
  }

  std::mt19937_64 rng_;
  VirtualHeap heap_;
  PatchTable table_;
  std::vector<std::string> live_;
  std::vector<std::string> violations_;
  int next_ = 0;
  bool blocked_ = false;
};

TEST(DefenderProperties, LayoutSafetyAndMetadataRoundTrip) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Workload w(seed, true);
    for (int i = 0; i < 150; ++i) {
      w.step();
      ASSERT_TRUE(w.violations().empty()) << w.violations().front();
      EXPECT_FALSE(w.any_blocked());  // in-bounds accesses of live buffers only

      auto& h = w.heap();
      const auto& blocks = h.allocator().live_blocks();
      std::uint64_t prev_end = 0;
      for (const auto& [base, size] : blocks) {
        ASSERT_GE(base, prev_end);
        prev_end = base + size;
      }
      for (const auto& id : w.live()) {
        auto idx = *h.find(id);
        const auto& b = h.buffer(idx);
        std::uint64_t block_end = b.base + blocks.at(b.base);
        ASSERT_GE(b.p - kWordSize, b.base);
        ASSERT_LE(b.p + b.size, block_end);
        ASSERT_EQ(h.load_word(b.p - kWordSize), b.meta);
        ASSERT_EQ(structure_of(b.meta), b.kind);
        auto f = unpack_metadata(b.meta, b.kind);
        ASSERT_EQ(f.t, b.t);
        ASSERT_EQ(h.user_size(idx), b.size);
        if (has_guard(b.kind)) {
          ASSERT_EQ(f.guard_addr, b.guard);
          ASSERT_LE(b.guard + kPageSize, block_end);
          ASSERT_FALSE(h.page_accessible(b.guard));
        } else {
          ASSERT_EQ(f.size, b.size);
        }
        if (f.aligned) {
          ASSERT_EQ(b.base, b.p - (1ULL << f.align_exp));
        }
      }
    }
  }
}

TEST(DefenderProperties, UnpatchedMatchesPlainModel) {
  std::mt19937_64 rng(43);
  for (int round = 0; round < 100; ++round) {
    VirtualHeap h;
    std::map<std::string, std::vector<std::uint8_t>> model;
    std::vector<std::string> live;
    int next = 0;
    for (int i = 0; i < 120; ++i) {
      std::uint64_t roll = rng() % 6;
      if (live.empty() || roll == 0) {
        auto id = "b" + std::to_string(next++);
        std::uint64_t size = 1 + rng() % 300;
        AllocFun fun = rng() % 3 == 0 ? AllocFun::kCalloc : AllocFun::kMalloc;
        h.allocate(fun, id, size, std::nullopt, rng() % 4, kEmpty);
        model[id].assign(size, fun == AllocFun::kCalloc ? 0 : kIndeterminateByte);
        live.push_back(id);
        continue;
      }
      auto id = live[rng() % live.size()];
      auto& m = model[id];
      auto off = rng() % m.size();
      auto len = 1 + rng() % (m.size() - off);
      switch (roll) {
        case 1:
          h.free(id);
          live.erase(std::find(live.begin(), live.end(), id));
          break;
        case 2: {
          auto nid = "b" + std::to_string(next++);
          std::uint64_t size = 1 + rng() % 300;
          h.reallocate(id, nid, size, rng() % 4, kEmpty);
          std::vector<std::uint8_t> grown(size, kIndeterminateByte);
          std::copy_n(m.begin(), std::min<std::size_t>(size, m.size()), grown.begin());
          model[nid] = grown;
          live.erase(std::find(live.begin(), live.end(), id));
          live.push_back(nid);
          break;
        }
        case 3: {
          auto r = h.access(id, static_cast<std::int64_t>(off), len, true);
          ASSERT_FALSE(r.blocked);
          std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(off), len, kWrittenByte);
          break;
        }
        default: {
          auto r = h.access(id, static_cast<std::int64_t>(off), len, false);
          ASSERT_FALSE(r.blocked);
          ASSERT_TRUE(std::equal(r.data.begin(), r.data.end(),
                                 m.begin() + static_cast<std::ptrdiff_t>(off)));
        }
      }
    }
    EXPECT_EQ(h.enhanced(), 0u);
    for (const auto& b : h.buffers()) EXPECT_EQ(b.kind, StructureKind::kS1);
  }
}

TEST(DefenderProperties, EnhancementCompleteness) {
  for (std::uint8_t bits = 0; bits < 8; ++bits) {
    for (bool aligned : {false, true}) {
      SCOPED_TRACE(::testing::Message() << "t=" << int(bits) << " aligned=" << aligned);
      AllocFun fun = aligned ? AllocFun::kAlignedAlloc : AllocFun::kMalloc;
      auto table = bits ? table_with(fun, bits) : build_table({});
      VulnMask t(bits);
      VirtualHeap h;
      auto align = aligned ? std::optional<std::uint64_t>(32) : std::nullopt;
      auto p = h.allocate(fun, "a", 200, align, kCtx, table);
      const auto& b = h.buffer(0);
      EXPECT_EQ(b.kind, choose_structure(t, aligned));
      EXPECT_EQ(b.guard != 0, t.overflow());
      EXPECT_EQ(b.zero_filled, t.uninit_read());
      EXPECT_EQ(h.enhanced(), bits ? 1u : 0u);
      if (aligned) {
        EXPECT_EQ(p % 32, 0u);
      }
      auto r = h.access("a", 0, 200, false);
      EXPECT_EQ(r.indeterminate_bytes, t.uninit_read() ? 0u : 200u);
      if (t.overflow()) {
        EXPECT_TRUE(h.access("a", static_cast<std::int64_t>(b.guard - p), 1, true).blocked);
      }
      auto outcome = h.free("a");
      EXPECT_EQ(outcome, t.use_after_free() ? VirtualHeap::FreeOutcome::kQuarantined
                                            : VirtualHeap::FreeOutcome::kReleased);
    }
  }
}

TEST(DefenderProperties, QuarantineNonReuseUntilEviction) {
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    HeapConfig cfg;
    cfg.quota_bytes = 20000;
    Workload w(seed, true, cfg);
    for (int i = 0; i < 200; ++i) {
      w.step();
      ASSERT_TRUE(w.violations().empty()) << w.violations().front();
      ASSERT_LE(w.heap().quarantined_bytes(), cfg.quota_bytes);
    }
  }
}

// Random legal traces over app.graph: call paths follow graph edges (or
// occasionally an unknown site), allocations happen at the target nodes.
Trace random_app_trace(std::mt19937_64& rng, const CallGraph& g) {
  std::multimap<std::string, CallSite> out;
  for (const auto& e : g.edges) out.emplace(e.caller, e);
  Trace t;
  std::vector<std::string> stack{"main"};
  std::vector<std::pair<std::string, std::uint64_t>> bufs;
  std::set<std::string> live;
  int next = 0;
  for (int i = 0; i < 120; ++i) {
    const std::string& node = stack.back();
    if (g.targets.count(node)) {
      auto fun = *parse_alloc_fun(node);
      std::string id = "b" + std::to_string(next++);
      std::uint64_t size = 1 + rng() % 200;
      if (fun == AllocFun::kRealloc) {
        if (!live.empty()) {
          auto old = *std::next(live.begin(), static_cast<long>(rng() % live.size()));
          t.events.push_back(ev::Realloc{old, id, size});
          live.erase(old);
          live.insert(id);
          bufs.push_back({id, size});
        }
      } else {
        std::optional<std::uint64_t> align;
        if (is_aligned_fun(fun)) align = 16;
        t.events.push_back(ev::Alloc{fun, id, size, align});
        live.insert(id);
        bufs.push_back({id, size});
      }
      t.events.push_back(ev::Ret{});
      stack.pop_back();
      continue;
    }
    std::uint64_t roll = rng() % 8;
    auto [lo, hi] = out.equal_range(node);
    if (roll < 3 && lo != hi) {
      auto it = std::next(lo, static_cast<long>(rng() % std::distance(lo, hi)));
      t.events.push_back(ev::Call{it->second});
      stack.push_back(it->second.callee);
    } else if (roll == 3) {
      t.events.push_back(ev::Call{{node, "helper", 0}});
      stack.push_back("helper");
    } else if (roll == 4 && stack.size() > 1) {
      t.events.push_back(ev::Ret{});
      stack.pop_back();
    } else if (!bufs.empty()) {
      auto& [id, size] = bufs[rng() % bufs.size()];
      auto off = static_cast<std::int64_t>(rng() % (size + 32)) - 16;
      std::uint64_t len = 1 + rng() % 64;
      if (roll == 5 && live.count(id)) {
        t.events.push_back(ev::Free{id});
        live.erase(id);
      } else if (roll == 6) {
        t.events.push_back(ev::Write{id, off, len});
      } else {
        t.events.push_back(ev::Read{id, off, len, static_cast<Sink>(rng() % 4)});
      }
    }
  }
  return t;
}

TEST(DefenderProperties, CcidCoherence) {
  auto g = testing::app_graph();
  std::mt19937_64 rng(47);
  for (int round = 0; round < 200; ++round) {
    auto trace = random_app_trace(rng, g);
    for (Strategy s : kAllStrategies) {
      auto instr = instrumentation_set(g, s);
      auto offline = analyze(g, instr, trace);
      auto table = build_table(offline.patches);
      auto online = replay(instr, table, trace, kDefaultSeed);
      ASSERT_EQ(offline.allocations, online.allocations) << serialize_trace(trace);
    }
  }
}

}  // namespace
}  // namespace heapseal
