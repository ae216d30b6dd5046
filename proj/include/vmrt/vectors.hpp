#pragma once

// Golden vectors for the eight-entry PLRU example (cases A, B1, B2, C).
// The example labels TLB entries 1..8 from left to right; entry k is leaf
// k - 1. Every case starts from the reset tree, whose victim path targets
// entry 1, and replaces that entry before the next victim is checked.

#include <optional>
#include <string>
#include <vector>

#include "vmrt/replacement.hpp"

namespace vmrt {

struct VectorResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline unsigned entry_to_leaf(unsigned entry) { return entry - 1; }
inline std::string entry_name(std::optional<unsigned> leaf) {
  return leaf ? "entry " + std::to_string(*leaf + 1) : "none";
}

// True if no tree state lets `mask` select any of `forbidden` leaves.
inline bool never_selects(PlruTree tree, const PartitionMask& mask, std::uint64_t forbidden) {
  for (std::uint64_t s = 0; s < (std::uint64_t{1} << tree.node_count()); ++s) {
    tree.set_node_bits(s);
    auto v = tree.select_victim(mask);
    if (v && ((forbidden >> *v) & 1U)) return false;
  }
  return true;
}

}  // namespace detail

inline std::vector<VectorResult> run_plru_vectors() {
  using detail::entry_name;
  using detail::entry_to_leaf;
  std::vector<VectorResult> out;

  {  // A: default tree, replacing entry 1 leaves entry 5 as the next victim.
    PlruTree t(8, 1);
    const auto all = t.full_mask();
    const auto before = t.select_victim(all);
    const auto replaced = t.insert(all);
    const auto next = t.select_victim(all);
    const bool ok = before == entry_to_leaf(1) && replaced == entry_to_leaf(1) && next == entry_to_leaf(5);
    out.push_back({"A", ok, "replaced " + entry_name(replaced) + ", next victim " + entry_name(next) + " (expect entry 5)"});
  }
  {  // B1: four partitions of two entries; the bit for entries 5-6 is clear.
    PlruTree t(8, 4);
    const PartitionMask cur_part(4, 0b1011);
    const auto replaced = t.insert(cur_part);
    const auto next = t.select_victim(cur_part);
    const std::uint64_t protected_leaves = 0b0011'0000;
    const bool ok = replaced == entry_to_leaf(1) && next == entry_to_leaf(7) &&
                    detail::never_selects(PlruTree(8, 4), cur_part, protected_leaves);
    out.push_back({"B1", ok,
                   "replaced " + entry_name(replaced) + ", next victim " + entry_name(next) +
                       " (expect entry 7; entries 5-6 unreachable in all 128 states)"});
  }
  {  // B2: one partition per entry; entry 5's bit is clear.
    PlruTree t(8, 8);
    const PartitionMask cur_part(8, 0b1110'1111);
    const auto replaced = t.insert(cur_part);
    const auto next = t.select_victim(cur_part);
    const bool ok = replaced == entry_to_leaf(1) && next == entry_to_leaf(6) &&
                    detail::never_selects(PlruTree(8, 8), cur_part, std::uint64_t{1} << entry_to_leaf(5));
    out.push_back({"B2", ok,
                   "replaced " + entry_name(replaced) + ", next victim " + entry_name(next) +
                       " (expect entry 6; entry 5 unreachable in all 128 states)"});
  }
  {  // C: unpartitioned tree with entry 5 locked.
    PlruTree t(8, 1);
    t.set_lock(entry_to_leaf(5), true);
    const auto all = t.full_mask();
    const auto replaced = t.insert(all);
    const auto next = t.select_victim(all);
    PlruTree locked(8, 1);
    locked.set_lock(entry_to_leaf(5), true);
    const bool ok = replaced == entry_to_leaf(1) && next == entry_to_leaf(6) &&
                    detail::never_selects(locked, all, std::uint64_t{1} << entry_to_leaf(5));
    out.push_back({"C", ok, "replaced " + entry_name(replaced) + ", next victim " + entry_name(next) + " (expect entry 6)"});
  }
  return out;
}

}  // namespace vmrt
