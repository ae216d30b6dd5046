// Fills an eight-entry PLRU tree under a few partition bitmaps and prints
// which leaves get replaced.

#include <cstdio>

#include "vmrt/replacement.hpp"

int main() {
  using vmrt::PartitionMask;
  vmrt::PlruTree tree(8, 4);
  const PartitionMask masks[] = {PartitionMask(4, 0b0011), PartitionMask(4, 0b1100), PartitionMask(4, 0b1011)};
  for (const auto& m : masks) {
    std::printf("mask %s:", m.bit_string().c_str());
    for (int i = 0; i < 6; ++i) {
      const auto leaf = tree.insert(m);
      std::printf(" %u", leaf.value_or(99));
    }
    std::printf("   tree=%s\n", tree.bit_string().c_str());
  }
  tree.set_lock(6, true);
  std::printf("leaf 6 locked, mask 1011 victims:");
  for (int i = 0; i < 6; ++i) std::printf(" %u", tree.insert(masks[2]).value_or(99));
  std::printf("\n");
}
