#pragma once

// SV39 page-table entry and page-size helpers.

#include <cstdint>
#include <string>

#include "vmrt/common.hpp"

namespace vmrt {

enum class PageSize : std::uint8_t { k4K = 0, k2M = 1, k1G = 2 };

// Leaf level: 0 for 4 KiB, 1 for 2 MiB, 2 for 1 GiB.
constexpr unsigned page_level(PageSize s) { return static_cast<unsigned>(s); }
constexpr PageSize page_size_at_level(unsigned level) { return static_cast<PageSize>(level); }
constexpr std::uint64_t page_bytes(PageSize s) { return kPageBytes << (9 * page_level(s)); }
// Number of low VPN bits ignored by a mapping of size s.
constexpr unsigned vpn_ignore_bits(PageSize s) { return 9 * page_level(s); }

inline const char* to_string(PageSize s) {
  switch (s) {
    case PageSize::k4K: return "4K";
    case PageSize::k2M: return "2M";
    case PageSize::k1G: return "1G";
  }
  return "?";
}

namespace pte_flag {
inline constexpr std::uint8_t V = 1U << 0;
inline constexpr std::uint8_t R = 1U << 1;
inline constexpr std::uint8_t W = 1U << 2;
inline constexpr std::uint8_t X = 1U << 3;
inline constexpr std::uint8_t U = 1U << 4;
inline constexpr std::uint8_t G = 1U << 5;
inline constexpr std::uint8_t A = 1U << 6;
inline constexpr std::uint8_t D = 1U << 7;
inline constexpr std::uint8_t RWX = R | W | X;
}  // namespace pte_flag

struct PageTableEntry {
  std::uint64_t ppn = 0;  // 44 bits
  std::uint8_t flags = 0;

  bool valid() const { return flags & pte_flag::V; }
  bool leaf() const { return flags & pte_flag::RWX; }
  bool global() const { return flags & pte_flag::G; }

  // Bit layout as in memory: flags in [7:0], RSW in [9:8], PPN in [53:10].
  std::uint64_t encode() const { return (ppn & ((std::uint64_t{1} << 44) - 1)) << 10 | flags; }
  static PageTableEntry decode(std::uint64_t word) {
    return {(word >> 10) & ((std::uint64_t{1} << 44) - 1), static_cast<std::uint8_t>(word & 0xff)};
  }

  friend bool operator==(const PageTableEntry&, const PageTableEntry&) = default;
};

inline std::string flags_string(std::uint8_t f) {
  std::string s = "--------";
  const char* names = "DAGUXWRV";
  for (unsigned i = 0; i < 8; ++i)
    if (f & (1U << i)) s[7 - i] = names[7 - i];
  return s;
}

// SV39: bits 63..39 must all equal bit 38.
constexpr bool is_canonical_sv39(VirtAddr va) {
  const std::uint64_t upper = va >> 38;
  return upper == 0 || upper == (std::uint64_t{1} << 26) - 1;
}

// SV39x4 guest-physical addresses are 41 bits wide.
constexpr bool is_valid_gpa_sv39x4(PhysAddr gpa) { return (gpa >> 41) == 0; }

constexpr std::uint64_t vpn_of(VirtAddr va) { return (va >> kPageShift) & ((std::uint64_t{1} << 27) - 1); }

constexpr std::uint64_t align_down(std::uint64_t v, std::uint64_t a) { return v & ~(a - 1); }
constexpr bool is_aligned(std::uint64_t v, std::uint64_t a) { return (v & (a - 1)) == 0; }

}  // namespace vmrt
