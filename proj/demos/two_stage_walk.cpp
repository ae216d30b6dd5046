// Builds a guest and a host page table, walks one address through both
// stages and prints every PTE fetch.

#include <cstdio>

#include "vmrt/walker.hpp"

int main() {
  using namespace vmrt;
  PageTableBuilder guest(0x80100, false);  // guest tables in guest-physical space
  guest.map({0x4000'0000, 0x8000'0000, 0x20'0000, pte_flag::R | pte_flag::W, PageSize::k4K});
  PageTableBuilder host(0x81000, true);
  host.map({0x8000'0000, 0x9000'0000, 0x30'0000, pte_flag::R | pte_flag::W | pte_flag::X, PageSize::k4K});
  const auto g = guest.take();
  const auto h = host.take();

  unsigned n = 0;
  auto fetch = [&n](PhysAddr pa) {
    std::printf("  fetch %2u  hpa=0x%llx\n", ++n, static_cast<unsigned long long>(pa));
    return Cycles{40};
  };
  const auto r = walk_two_stage(g, h, 0x4001'2345, fetch);
  std::printf("gva 0x40012345 -> hpa 0x%llx, %u fetches, %llu cycles, fault=%s\n",
              static_cast<unsigned long long>(r.paddr), static_cast<unsigned>(r.accesses.size()), static_cast<unsigned long long>(r.cycles),
              to_string(r.fault));
}
