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

// Buffer structures of the hardened heap and the single metadata word that
// precedes every user buffer.
//
//   S1  [meta][user]                              plain
//   S2  [meta][user][pad to page][guard page]     plain, overflow-protected
//   S3  [pad][meta][user]                         aligned
//   S4  [pad][meta][user][pad to page][guard]     aligned, overflow-protected
//
// Metadata word layout:
//
//   bits  0..3   buffer type: bit0 overflow, bit1 use-after-free,
//                bit2 uninitialized read, bit3 aligned
//   bits  4..51  user size (S1, S3)
//   bits  4..39  guard page address >> 12 (S2, S4)
//   bits 58..63  alignment exponent n, alignment = 2^n (S3, S4)

#pragma once

#include <cstdint>
#include <string_view>

#include "heapseal/error.hpp"
#include "heapseal/patch.hpp"

namespace heapseal {

inline constexpr std::uint64_t kPageShift = 12;
inline constexpr std::uint64_t kPageSize = 1ULL << kPageShift;
inline constexpr std::uint64_t kAddressBits = 48;
inline constexpr std::uint64_t kAddressLimit = 1ULL << kAddressBits;

enum class StructureKind { kS1 = 1, kS2 = 2, kS3 = 3, kS4 = 4 };

inline std::string_view to_string(StructureKind k) {
  switch (k) {
    case StructureKind::kS1: return "S1";
    case StructureKind::kS2: return "S2";
    case StructureKind::kS3: return "S3";
    case StructureKind::kS4: return "S4";
  }
  return "?";
}

inline constexpr bool has_guard(StructureKind k) {
  return k == StructureKind::kS2 || k == StructureKind::kS4;
}

inline constexpr bool is_aligned(StructureKind k) {
  return k == StructureKind::kS3 || k == StructureKind::kS4;
}

// Only the overflow bit changes the layout; use-after-free and uninitialized
// read are handled at free time and at allocation time respectively.
inline StructureKind choose_structure(VulnMask t, bool aligned) {
  if (t.overflow()) return aligned ? StructureKind::kS4 : StructureKind::kS2;
  return aligned ? StructureKind::kS3 : StructureKind::kS1;
}

struct MetadataFields {
  VulnMask t;
  bool aligned = false;
  std::uint64_t size = 0;        // S1/S3
  std::uint64_t guard_addr = 0;  // S2/S4
  unsigned align_exp = 0;        // S3/S4

  bool operator==(const MetadataFields&) const = default;
};

namespace meta_bits {
inline constexpr std::uint64_t kTypeMask = 0xf;
inline constexpr std::uint64_t kAlignedBit = 1ULL << 3;
inline constexpr unsigned kPayloadShift = 4;
inline constexpr std::uint64_t kSizeMask = (1ULL << 48) - 1;
inline constexpr std::uint64_t kGuardMask = (1ULL << 36) - 1;
inline constexpr unsigned kExpShift = 58;
inline constexpr std::uint64_t kExpMask = 0x3f;
}  // namespace meta_bits

// `size_or_guard` is the user size for S1/S3 and the guard page address for
// S2/S4. `align_exp` must be 0 for non-aligned structures.
inline std::uint64_t pack_metadata(StructureKind kind, VulnMask t, bool aligned,
                                   std::uint64_t size_or_guard, unsigned align_exp) {
  using namespace meta_bits;
  if (is_aligned(kind) != aligned || choose_structure(t, aligned) != kind)
    throw RangeError("structure " + std::string(to_string(kind)) +
                     " does not match type bits " + std::to_string(t.bits()) +
                     (aligned ? " (aligned)" : ""));
  if (align_exp > 63) throw RangeError("alignment exponent exceeds 63");
  if (!aligned && align_exp != 0) throw RangeError("alignment exponent on a plain buffer");

  std::uint64_t w = t.bits() | (aligned ? kAlignedBit : 0);
  if (has_guard(kind)) {
    if (size_or_guard % kPageSize != 0) throw RangeError("guard page address is not page aligned");
    if (size_or_guard >= kAddressLimit) throw RangeError("guard page address exceeds 48 bits");
    w |= (size_or_guard >> kPageShift) << kPayloadShift;
  } else {
    if (size_or_guard > kSizeMask) throw RangeError("buffer size exceeds 48 bits");
    w |= size_or_guard << kPayloadShift;
  }
  if (aligned) w |= static_cast<std::uint64_t>(align_exp) << kExpShift;
  return w;
}

inline MetadataFields unpack_metadata(std::uint64_t w, StructureKind kind) {
  using namespace meta_bits;
  MetadataFields f;
  f.t = VulnMask(static_cast<std::uint8_t>(w & 0x7));
  f.aligned = (w & kAlignedBit) != 0;
  if (has_guard(kind))
    f.guard_addr = ((w >> kPayloadShift) & kGuardMask) << kPageShift;
  else
    f.size = (w >> kPayloadShift) & kSizeMask;
  if (f.aligned) f.align_exp = static_cast<unsigned>((w >> kExpShift) & kExpMask);
  return f;
}

// Structure kind implied by the type field alone.
inline StructureKind structure_of(std::uint64_t w) {
  return choose_structure(VulnMask(static_cast<std::uint8_t>(w & 0x7)),
                          (w & meta_bits::kAlignedBit) != 0);
}

}  // namespace heapseal
