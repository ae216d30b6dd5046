#pragma once

// Binary-tree pseudo-LRU with partition- and lock-constrained victim walks.
//
// Layout: internal nodes in level order (0 = root, children of n are 2n+1
// and 2n+2); leaves are numbered left to right. A node bit of 0 selects the
// left child, 1 the right child. Partition p owns the contiguous leaf range
// [p*L/P, (p+1)*L/P), which is always a whole subtree.

#include <cstdint>
#include <optional>
#include <string>

#include "vmrt/common.hpp"

namespace vmrt {

inline constexpr unsigned kMaxPlruLeaves = 64;

class PartitionMask {
 public:
  PartitionMask() = default;
  PartitionMask(unsigned width, std::uint64_t bits) : width_(width), bits_(bits) {
    if (width == 0 || width > 64) throw UsageError("partition mask width must be in [1, 64]");
    if (width < 64 && (bits >> width) != 0)
      throw UsageError("partition mask has bits beyond its width");
  }

  static PartitionMask all(unsigned width) {
    return {width, width == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << width) - 1};
  }
  static PartitionMask none(unsigned width) { return {width, 0}; }

  unsigned width() const { return width_; }
  std::uint64_t bits() const { return bits_; }
  bool test(unsigned partition) const { return partition < width_ && ((bits_ >> partition) & 1U); }
  bool empty() const { return bits_ == 0; }
  // Most significant partition first, like a binary literal.
  std::string bit_string() const {
    std::string s(width_, '0');
    for (unsigned p = 0; p < width_; ++p)
      if (test(p)) s[width_ - 1 - p] = '1';
    return s;
  }

  friend bool operator==(const PartitionMask&, const PartitionMask&) = default;

 private:
  unsigned width_ = 1;
  std::uint64_t bits_ = 0;
};

class PlruTree {
 public:
  explicit PlruTree(unsigned leaf_count, unsigned partition_count = 1)
      : leaf_count_(leaf_count), partition_count_(partition_count) {
    if (leaf_count < 2 || leaf_count > kMaxPlruLeaves || !is_pow2(leaf_count))
      throw UsageError("PLRU leaf count must be a power of two in [2, 64]");
    if (partition_count == 0 || partition_count > leaf_count || !is_pow2(partition_count))
      throw UsageError("PLRU partition count must be a power of two <= leaf count");
    depth_ = log2_exact(leaf_count);
  }

  unsigned leaf_count() const { return leaf_count_; }
  unsigned partition_count() const { return partition_count_; }
  unsigned node_count() const { return leaf_count_ - 1; }
  unsigned leaves_per_partition() const { return leaf_count_ / partition_count_; }
  unsigned partition_of(unsigned leaf) const { return leaf / leaves_per_partition(); }

  // Raw node bits, bit n = internal node n.
  std::uint64_t node_bits() const { return node_bits_; }
  void set_node_bits(std::uint64_t bits) {
    if (node_count() < 64 && (bits >> node_count()) != 0)
      throw UsageError("PLRU node bits exceed node count");
    node_bits_ = bits;
  }
  std::uint64_t locked_bits() const { return locked_; }

  bool node_bit(unsigned node) const { return (node_bits_ >> node) & 1U; }

  // Point every node on the root-to-leaf path away from `leaf`.
  void touch(unsigned leaf) {
    check_leaf(leaf);
    unsigned node = 0;
    for (unsigned level = 0; level < depth_; ++level) {
      const bool leaf_is_right = (leaf >> (depth_ - 1 - level)) & 1U;
      set_node_bit(node, !leaf_is_right);
      node = 2 * node + 1 + (leaf_is_right ? 1 : 0);
    }
  }

  void set_lock(unsigned leaf, bool locked) {
    check_leaf(leaf);
    if (locked)
      locked_ |= std::uint64_t{1} << leaf;
    else
      locked_ &= ~(std::uint64_t{1} << leaf);
  }
  bool is_locked(unsigned leaf) const {
    check_leaf(leaf);
    return (locked_ >> leaf) & 1U;
  }

  // Leaves whose partition is enabled and which are not locked.
  std::uint64_t reachable_leaves(const PartitionMask& enabled) const {
    check_mask(enabled);
    const unsigned per = leaves_per_partition();
    const std::uint64_t group = per == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << per) - 1;
    std::uint64_t reach = 0;
    for (unsigned p = 0; p < partition_count_; ++p)
      if (enabled.test(p)) reach |= group << (p * per);
    return reach & ~locked_;
  }

  // Follows the chosen branch at each node unless its subtree holds no
  // reachable leaf, in which case the sibling is taken. Does not modify state.
  std::optional<unsigned> select_victim(const PartitionMask& enabled) const {
    const std::uint64_t reach = reachable_leaves(enabled);
    if (reach == 0) return std::nullopt;
    unsigned node = 0;
    unsigned lo = 0;
    unsigned span = leaf_count_;
    for (unsigned level = 0; level < depth_; ++level) {
      span /= 2;
      const std::uint64_t span_mask = span == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << span) - 1;
      const bool left_ok = ((reach >> lo) & span_mask) != 0;
      const bool right_ok = ((reach >> (lo + span)) & span_mask) != 0;
      bool go_right = node_bit(node);
      if (go_right && !right_ok) go_right = false;
      if (!go_right && !left_ok) go_right = true;
      if (go_right) lo += span;
      node = 2 * node + 1 + (go_right ? 1 : 0);
    }
    return lo;
  }

  // select_victim followed by touch of the returned leaf.
  std::optional<unsigned> insert(const PartitionMask& enabled) {
    auto victim = select_victim(enabled);
    if (victim) touch(*victim);
    return victim;
  }

  PartitionMask full_mask() const { return PartitionMask::all(partition_count_); }

  std::string bit_string() const {
    std::string s;
    s.reserve(node_count());
    for (unsigned n = 0; n < node_count(); ++n) s.push_back(node_bit(n) ? '1' : '0');
    return s;
  }

  friend bool operator==(const PlruTree&, const PlruTree&) = default;

 private:
  void set_node_bit(unsigned node, bool v) {
    if (v)
      node_bits_ |= std::uint64_t{1} << node;
    else
      node_bits_ &= ~(std::uint64_t{1} << node);
  }
  void check_leaf(unsigned leaf) const {
    if (leaf >= leaf_count_) throw UsageError("PLRU leaf index out of range");
  }
  void check_mask(const PartitionMask& m) const {
    if (m.width() != partition_count_) throw UsageError("partition mask width does not match tree");
  }

  unsigned leaf_count_;
  unsigned partition_count_;
  unsigned depth_ = 1;
  std::uint64_t node_bits_ = 0;
  std::uint64_t locked_ = 0;
};

}  // namespace vmrt
