#pragma once

// SV39 and SV39x4 (two-stage) radix page-table walks over a sparse
// page-table store. Every PTE fetch is reported to a caller-supplied
// callback, which returns the latency of that fetch.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "vmrt/common.hpp"
#include "vmrt/pte.hpp"
#include "vmrt/tlb.hpp"

namespace vmrt {

inline constexpr unsigned kLevels = 3;
inline constexpr unsigned kPtesPerTable = 512;

// Page tables of one translation stage. Table pages are addressed in the
// stage's input-physical space (guest-physical for a guest stage).
class AddressSpace {
 public:
  AddressSpace() = default;
  AddressSpace(std::uint64_t root_ppn, bool wide_root) : root_ppn_(root_ppn), wide_root_(wide_root) {}

  std::uint64_t root_ppn() const { return root_ppn_; }
  // SV39x4 G-stage: 2048-entry root table spanning four pages.
  bool wide_root() const { return wide_root_; }

  std::uint64_t read(PhysAddr pte_addr) const {
    auto it = store_.find(pte_addr >> kPageShift);
    if (it == store_.end()) return 0;
    return it->second[(pte_addr >> 3) & (kPtesPerTable - 1)];
  }
  void write(PhysAddr pte_addr, std::uint64_t word) {
    store_[pte_addr >> kPageShift][(pte_addr >> 3) & (kPtesPerTable - 1)] = word;
  }
  void add_table(std::uint64_t ppn) { store_.try_emplace(ppn); }
  bool has_table(std::uint64_t ppn) const { return store_.contains(ppn); }
  std::size_t table_count() const { return store_.size(); }

  // Index of `addr` at `level` (2 = root).
  std::uint64_t index(std::uint64_t addr, unsigned level) const {
    const std::uint64_t mask = (level == 2 && wide_root_) ? 0x7ff : 0x1ff;
    return (addr >> (kPageShift + 9 * level)) & mask;
  }

 private:
  std::uint64_t root_ppn_ = 0;
  bool wide_root_ = false;
  std::unordered_map<std::uint64_t, std::array<std::uint64_t, kPtesPerTable>> store_;
};

struct MapRegion {
  std::uint64_t vaddr = 0;
  std::uint64_t paddr = 0;
  std::uint64_t size = 0;
  std::uint8_t flags = pte_flag::R | pte_flag::W | pte_flag::X;
  PageSize max_page = PageSize::k1G;
};

// Builds minimal radix tables. Table pages come from a bump allocator
// starting at `table_base_ppn`.
class PageTableBuilder {
 public:
  PageTableBuilder(std::uint64_t table_base_ppn, bool wide_root)
      : next_ppn_(table_base_ppn), first_ppn_(table_base_ppn) {
    const unsigned root_pages = wide_root ? 4 : 1;
    if (wide_root && !is_aligned(table_base_ppn, 4))
      throw ConfigError("SV39x4 root table must be 16 KiB aligned");
    space_ = AddressSpace(table_base_ppn, wide_root);
    for (unsigned i = 0; i < root_pages; ++i) space_.add_table(next_ppn_++);
  }

  void map_page(std::uint64_t va, std::uint64_t pa, PageSize size, std::uint8_t flags) {
    const std::uint64_t bytes = page_bytes(size);
    if (!is_aligned(va, bytes) || !is_aligned(pa, bytes))
      throw ConfigError("mapping not aligned to its page size");
    if ((flags & pte_flag::RWX) == 0) throw ConfigError("leaf mapping needs at least one of R/W/X");
    std::uint64_t table = space_.root_ppn();
    for (unsigned level = 2; level > page_level(size); --level) {
      const PhysAddr addr = (table << kPageShift) + space_.index(va, level) * 8;
      auto pte = PageTableEntry::decode(space_.read(addr));
      if (pte.valid() && pte.leaf()) throw ConfigError("mapping overlaps an existing superpage");
      if (!pte.valid()) {
        pte = PageTableEntry{next_ppn_++, pte_flag::V};
        space_.add_table(pte.ppn);
        space_.write(addr, pte.encode());
      }
      table = pte.ppn;
    }
    const PhysAddr addr = (table << kPageShift) + space_.index(va, page_level(size)) * 8;
    if (PageTableEntry::decode(space_.read(addr)).valid()) throw ConfigError("address already mapped");
    const PageTableEntry leaf{pa >> kPageShift,
                              static_cast<std::uint8_t>(flags | pte_flag::V | pte_flag::A | pte_flag::D)};
    space_.write(addr, leaf.encode());
  }

  // Greedy cover with the largest page size aligned in both spaces.
  void map(const MapRegion& r) {
    if (!is_aligned(r.vaddr, kPageBytes) || !is_aligned(r.paddr, kPageBytes) ||
        !is_aligned(r.size, kPageBytes))
      throw ConfigError("region must be base-page aligned");
    std::uint64_t off = 0;
    while (off < r.size) {
      PageSize chosen = PageSize::k4K;
      for (int lvl = static_cast<int>(page_level(r.max_page)); lvl > 0; --lvl) {
        const auto s = page_size_at_level(static_cast<unsigned>(lvl));
        const std::uint64_t b = page_bytes(s);
        if (is_aligned(r.vaddr + off, b) && is_aligned(r.paddr + off, b) && r.size - off >= b) {
          chosen = s;
          break;
        }
      }
      map_page(r.vaddr + off, r.paddr + off, chosen, r.flags);
      off += page_bytes(chosen);
    }
  }

  void map_all(const std::vector<MapRegion>& regions) {
    for (const auto& r : regions) map(r);
  }

  // Table pages allocated so far: [first, first + count).
  std::uint64_t first_table_ppn() const { return first_ppn_; }
  std::uint64_t table_pages() const { return next_ppn_ - first_ppn_; }

  const AddressSpace& space() const { return space_; }
  AddressSpace take() { return std::move(space_); }

 private:
  AddressSpace space_;
  std::uint64_t next_ppn_;
  std::uint64_t first_ppn_;
};

enum class WalkFault : std::uint8_t { none, page_fault, guest_page_fault };

inline const char* to_string(WalkFault f) {
  switch (f) {
    case WalkFault::none: return "none";
    case WalkFault::page_fault: return "page-fault";
    case WalkFault::guest_page_fault: return "guest-page-fault";
  }
  return "?";
}

struct WalkResult {
  WalkFault fault = WalkFault::none;
  TlbEntry translation;  // asid/vmid left for the caller to tag
  PhysAddr paddr = 0;
  std::vector<PhysAddr> accesses;
  Cycles cycles = 0;

  bool ok() const { return fault == WalkFault::none; }
};

namespace detail {

struct StageLeaf {
  bool ok = false;
  PageTableEntry pte;
  unsigned level = 0;
  PhysAddr out = 0;
};

// One stage; `g_stage` selects 41-bit guest-physical input instead of SV39.
template <class Fetch>
StageLeaf walk_stage(const AddressSpace& space, std::uint64_t addr, bool g_stage, Fetch& fetch,
                     WalkResult& acc) {
  StageLeaf out;
  if (g_stage ? !is_valid_gpa_sv39x4(addr) : !is_canonical_sv39(addr)) return out;
  std::uint64_t table = space.root_ppn();
  for (int level = 2; level >= 0; --level) {
    const auto lvl = static_cast<unsigned>(level);
    const PhysAddr pte_addr = (table << kPageShift) + space.index(addr, lvl) * 8;
    acc.accesses.push_back(pte_addr);
    acc.cycles += fetch(pte_addr);
    const auto pte = PageTableEntry::decode(space.read(pte_addr));
    if (!pte.valid() || ((pte.flags & pte_flag::W) && !(pte.flags & pte_flag::R))) return out;
    if (pte.leaf()) {
      const std::uint64_t low = (std::uint64_t{1} << (9 * lvl)) - 1;
      if (pte.ppn & low) return out;  // misaligned superpage
      out.ok = true;
      out.pte = pte;
      out.level = lvl;
      out.out = (pte.ppn << kPageShift) | (addr & (page_bytes(page_size_at_level(lvl)) - 1));
      return out;
    }
    table = pte.ppn;
  }
  return out;
}

}  // namespace detail

template <class Fetch>
WalkResult walk_single(const AddressSpace& space, VirtAddr va, Fetch&& fetch) {
  WalkResult r;
  auto leaf = detail::walk_stage(space, va, false, fetch, r);
  if (!leaf.ok) {
    r.fault = WalkFault::page_fault;
    return r;
  }
  const auto size = page_size_at_level(leaf.level);
  r.paddr = leaf.out;
  r.translation.vpn = align_down(vpn_of(va), std::uint64_t{1} << vpn_ignore_bits(size));
  r.translation.page_size = size;
  r.translation.pte = leaf.pte;
  r.translation.valid = true;
  r.translation.global_flag = leaf.pte.global();
  return r;
}

// Host-stage (G-stage) walk of a 41-bit guest-physical address.
template <class Fetch>
WalkResult walk_g_stage(const AddressSpace& host, PhysAddr gpa, Fetch&& fetch) {
  WalkResult r;
  auto leaf = detail::walk_stage(host, gpa, true, fetch, r);
  if (!leaf.ok) {
    r.fault = WalkFault::guest_page_fault;
    return r;
  }
  const auto size = page_size_at_level(leaf.level);
  r.paddr = leaf.out;
  r.translation.vpn = align_down(gpa >> kPageShift, std::uint64_t{1} << vpn_ignore_bits(size));
  r.translation.page_size = size;
  r.translation.pte = leaf.pte;
  r.translation.valid = true;
  return r;
}

// Every guest-physical access (each guest PTE and the final address) is
// first translated by a full host-stage walk. No host translations are
// cached between the steps of one walk.
template <class Fetch>
WalkResult walk_two_stage(const AddressSpace& guest, const AddressSpace& host, VirtAddr gva, Fetch&& fetch) {
  WalkResult r;
  if (!is_canonical_sv39(gva)) {
    r.fault = WalkFault::page_fault;
    return r;
  }
  std::uint64_t table = guest.root_ppn();
  for (int level = 2; level >= 0; --level) {
    const auto lvl = static_cast<unsigned>(level);
    const PhysAddr pte_gpa = (table << kPageShift) + guest.index(gva, lvl) * 8;
    auto host_leaf = detail::walk_stage(host, pte_gpa, true, fetch, r);
    if (!host_leaf.ok) {
      r.fault = WalkFault::guest_page_fault;
      return r;
    }
    r.accesses.push_back(host_leaf.out);
    r.cycles += fetch(host_leaf.out);
    const auto pte = PageTableEntry::decode(guest.read(pte_gpa));
    if (!pte.valid() || ((pte.flags & pte_flag::W) && !(pte.flags & pte_flag::R))) {
      r.fault = WalkFault::page_fault;
      return r;
    }
    if (!pte.leaf()) {
      table = pte.ppn;
      continue;
    }
    const std::uint64_t low = (std::uint64_t{1} << (9 * lvl)) - 1;
    if (pte.ppn & low) {
      r.fault = WalkFault::page_fault;
      return r;
    }
    const PhysAddr gpa = (pte.ppn << kPageShift) | (gva & (page_bytes(page_size_at_level(lvl)) - 1));
    auto final_leaf = detail::walk_stage(host, gpa, true, fetch, r);
    if (!final_leaf.ok) {
      r.fault = WalkFault::guest_page_fault;
      return r;
    }
    const unsigned merged_level = std::min(lvl, final_leaf.level);
    const auto size = page_size_at_level(merged_level);
    const std::uint64_t size_pages = std::uint64_t{1} << vpn_ignore_bits(size);
    r.paddr = final_leaf.out;
    r.translation.vpn = align_down(vpn_of(gva), size_pages);
    r.translation.page_size = size;
    const std::uint8_t host_perm = final_leaf.pte.flags | static_cast<std::uint8_t>(~(pte_flag::RWX | pte_flag::U));
    r.translation.pte = PageTableEntry{align_down(final_leaf.out >> kPageShift, size_pages),
                                       static_cast<std::uint8_t>(pte.flags & host_perm)};
    r.translation.valid = true;
    r.translation.global_flag = pte.global();
    return r;
  }
  r.fault = WalkFault::page_fault;
  return r;
}

// Latency-free callback for offline translation.
struct NoCostFetch {
  Cycles operator()(PhysAddr) const { return 0; }
};

}  // namespace vmrt
