#include <gtest/gtest.h>

#include <random>

#include "vmrt/harness.hpp"
#include "vmrt/presets.hpp"

using namespace vmrt;

namespace {

// One VM with 2 MiB of guest RAM at gva 0x4000_0000, 4K pages in both
// stages, host-physically contiguous and 2 MiB aligned.
VmContext small_vm(std::uint16_t vmid, std::uint64_t partition_bits, unsigned k = 0) {
  VmContext vm;
  vm.name = "vm" + std::to_string(vmid);
  vm.role = k == 0 ? VmRole::critical : VmRole::interference;
  vm.vmid = vmid;
  vm.asid = 1;
  vm.partition_mask = PartitionMask(16, partition_bits);
  vm.guest_map.push_back({0x4000'0000, 0x8000'0000, 0x20'0000, pte_flag::R | pte_flag::W | pte_flag::X, PageSize::k4K});
  vm.guest_table_ppn = 0x80200;
  vm.host_map.push_back({0x8000'0000, 0x9000'0000 + k * 0x100'0000, 0x24'0000, pte_flag::R | pte_flag::W | pte_flag::X,
                         PageSize::k4K});
  vm.host_table_ppn = 0x81000 + k * 0x100;
  return vm;
}

HypervisorConfig small_hyp(std::uint64_t partition_bits = 0x0100) {
  HypervisorConfig h;
  h.partition_mask = PartitionMask(16, partition_bits);
  h.table_ppn = 0x80000;
  h.map.push_back({0xC000'0000, 0x8040'0000, 0x2000, pte_flag::R | pte_flag::W | pte_flag::X, PageSize::k4K});
  for (int i = 0; i < 4; ++i) h.handler_footprint.push_back({0xC000'0000 + i * 0x800ULL, AccessKind::read, 0});
  return h;
}

ExperimentConfig preset(std::string_view text) { return parse_config(std::string(text)); }

const ScenarioSpec& scenario(const ExperimentConfig& cfg, const std::string& name) {
  for (const auto& s : cfg.scenarios)
    if (s.name == name) return s;
  throw std::runtime_error("no scenario " + name);
}

}  // namespace

TEST(Setup, TwoMegRegionUsesOneSlot) {
  auto vm = small_vm(1, 0xFF);
  vm.lock_regions.push_back({0x4000'0000, 0x20'0000, LockSide::both});
  const auto st = setup_scenario({vm}, small_hyp(), MemorySystem{});
  ASSERT_EQ(st.locks.size(), 1U);
  EXPECT_EQ(st.locks[0].page_size, PageSize::k2M);
  EXPECT_TRUE(st.sys.dtlb().lock_slots()[0].active());
  EXPECT_TRUE(st.sys.itlb().lock_slots()[0].active());
  EXPECT_FALSE(st.sys.dtlb().lock_slots()[1].active());
}

TEST(Setup, SixteenKiBUsesFourSlots) {
  auto vm = small_vm(1, 0xFF);
  vm.lock_regions.push_back({0x4000'4000, 0x4000, LockSide::data});
  const auto st = setup_scenario({vm}, small_hyp(), MemorySystem{});
  EXPECT_EQ(st.locks.size(), 4U);
  for (unsigned j = 0; j < 8; ++j) {
    EXPECT_EQ(st.sys.dtlb().lock_slots()[j].active(), j < 4);
    EXPECT_FALSE(st.sys.itlb().lock_slots()[j].active());
  }
}

TEST(Setup, NineOnePageRegionsExhaustEightSlots) {
  auto vm = small_vm(1, 0xFF);
  for (int i = 0; i < 9; ++i) vm.lock_regions.push_back({0x4000'0000 + i * 0x2000ULL, 0x1000, LockSide::both});
  EXPECT_THROW(setup_scenario({vm}, small_hyp(), MemorySystem{}), ConfigError);
  vm.lock_regions.pop_back();
  EXPECT_NO_THROW(setup_scenario({vm}, small_hyp(), MemorySystem{}));
}

TEST(Setup, RejectsMisalignedAndUnmappedRegions) {
  auto vm = small_vm(1, 0xFF);
  vm.lock_regions.push_back({0x4000'0800, 0x1000, LockSide::both});
  EXPECT_THROW(setup_scenario({vm}, small_hyp(), MemorySystem{}), ConfigError);
  vm.lock_regions = {{0x4100'0000, 0x1000, LockSide::both}};
  EXPECT_THROW(setup_scenario({vm}, small_hyp(), MemorySystem{}), ConfigError);
  auto bad = small_vm(1, 0xFF);
  bad.host_map[0].size = 0x20'0000;  // guest tables left unmapped
  EXPECT_THROW(setup_scenario({bad}, small_hyp(), MemorySystem{}), ConfigError);
}

TEST(Setup, SlotsAreFirstComeFirstServed) {
  auto a = small_vm(1, 0xFF, 0);
  auto b = small_vm(2, 0xFE00, 1);
  a.lock_regions.push_back({0x4000'0000, 0x3000, LockSide::data});
  b.lock_regions.push_back({0x4000'0000, 0x1000, LockSide::data});
  const auto st = setup_scenario({a, b}, small_hyp(), MemorySystem{});
  ASSERT_EQ(st.locks.size(), 4U);
  EXPECT_EQ(st.locks[3].vm, "vm2");
  EXPECT_EQ(st.locks[3].dslot, 3U);
  EXPECT_EQ(st.sys.dtlb().lock_slots()[3].csr_id.vmid, 2U);
}

TEST(Trap, EnterSwitchesToHypervisorMaskFirst) {
  auto st = setup_scenario({small_vm(1, 0xFF)}, small_hyp(), MemorySystem{});
  EXPECT_EQ(st.sys.dtlb().csr().cur_part.bits(), 0xFFU);
  const Cycles c = trap_enter(st);
  EXPECT_EQ(st.sys.dtlb().csr().cur_part.bits(), 0x100U);
  EXPECT_EQ(st.sys.dtlb().csr().last_part.bits(), 0xFFU);
  EXPECT_GT(c, 50U);
  // Footprint fills only landed in the hypervisor partition (leaf 8).
  for (unsigned i = 0; i < 16; ++i) EXPECT_EQ(st.sys.dtlb().entries()[i].valid, i == 8) << i;
}

TEST(Trap, EmptyFootprintCostsOnlyEntry) {
  auto hyp = small_hyp();
  hyp.handler_footprint.clear();
  auto st = setup_scenario({small_vm(1, 0xFF)}, hyp, MemorySystem{});
  EXPECT_EQ(trap_enter(st), 50U);
  EXPECT_EQ(trap_exit(st, 0), 50U);
}

TEST(Trap, BracketMatchesModelOverRandomSchedules) {
  auto st = setup_scenario({small_vm(1, 0x00FF, 0), small_vm(2, 0xFE00, 1)}, small_hyp(), MemorySystem{});
  const std::uint64_t masks[2] = {0x00FF, 0xFE00};
  std::mt19937_64 rng(5);
  std::size_t cur = 0;
  for (int i = 0; i < 500; ++i) {
    const std::uint64_t before = st.sys.dtlb().csr().cur_part.bits();
    ASSERT_EQ(before, masks[cur]);
    trap_enter(st);
    ASSERT_EQ(st.sys.itlb().csr().cur_part.bits(), 0x100U);
    ASSERT_EQ(st.sys.itlb().csr().last_part.bits(), before);
    const std::size_t next = rng() % 2;
    const Cycles cost = trap_exit(st, next);
    EXPECT_EQ(cost, next == cur ? 50U : 450U);
    for (const Tlb* t : {&st.sys.itlb(), &st.sys.dtlb()}) {
      ASSERT_EQ(t->csr().cur_part.bits(), masks[next]);
      ASSERT_EQ(t->csr().last_part.bits(), next == cur ? before : masks[next]);
    }
    cur = next;
  }
  EXPECT_THROW(trap_exit(st, 2), UsageError);
}

// Drives prime / deschedule / interfere / reschedule by hand and checks
// after every access that each valid leaf belongs to its owner.
TEST(Run, LeafOwnershipPartitionsByOwner) {
  auto a = small_vm(1, 0x00FF, 0);
  auto b = small_vm(2, 0xFE00, 1);
  auto st = setup_scenario({a, b}, small_hyp(0x0100), MemorySystem{});
  auto owner_ok = [&](const Tlb& t) {
    for (unsigned i = 0; i < 16; ++i) {
      const auto& e = t.entries()[i];
      if (!e.valid) continue;
      const std::uint16_t want = i < 8 ? 1 : i == 8 ? 0 : 2;
      if (e.vmid != want) return false;
    }
    return true;
  };
  std::mt19937_64 rng(3);
  for (int round = 0; round < 20; ++round) {
    for (std::size_t v = 0; v < 2; ++v) {
      trap_enter(st);
      ASSERT_TRUE(owner_ok(st.sys.dtlb()));
      trap_exit(st, v);
      for (int k = 0; k < 40; ++k) {
        const Access acc{0x4000'0000 + (rng() % 512) * kPageBytes, rng() % 2 ? AccessKind::read : AccessKind::ifetch, 0};
        execute_access(st, acc, st.vms[v].context());
        ASSERT_TRUE(owner_ok(st.sys.dtlb()));
        ASSERT_TRUE(owner_ok(st.sys.itlb()));
      }
    }
  }
}

TEST(Run, InterferenceRespectsQuantum) {
  const auto cfg = preset(preset_text::kSyntheticNoSpm);
  const auto b = build_scenario(cfg, scenario(cfg, "b_interference"));
  for (const auto& r : run(b.state, 50, 9)) {
    EXPECT_GE(r.interference_cycles, cfg.hypervisor.quantum_cycles);
    EXPECT_LT(r.interference_cycles, cfg.hypervisor.quantum_cycles + r.longest_interference_access);
    EXPECT_GT(r.interference_accesses, 0U);
  }
}

TEST(Run, WithoutInterferenceVmNothingInterferes) {
  const auto cfg = preset(preset_text::kSyntheticNoSpm);
  const auto a = build_scenario(cfg, scenario(cfg, "a_isolation"));
  EXPECT_EQ(a.state.vms.size(), 1U);
  for (const auto& r : run(a.state, 20, 4)) {
    EXPECT_EQ(r.interference_accesses, 0U);
    EXPECT_EQ(r.interference_cycles, 0U);
    // Only the hypervisor's own fills (one code, one data page) can evict.
    EXPECT_LE(r.tlb_misses, 2U);
  }
}

TEST(Run, UnmitigatedMissesAndFullLockNoMisses) {
  const auto cfg = preset(preset_text::kSyntheticNoSpm);
  std::uint64_t misses = 0;
  for (const auto& r : run(build_scenario(cfg, scenario(cfg, "b_interference")).state, 50, 2)) misses += r.tlb_misses;
  EXPECT_GT(misses, 0U);
  for (const auto& r : run(build_scenario(cfg, scenario(cfg, "d_locking")).state, 50, 2)) EXPECT_EQ(r.tlb_misses, 0U);
}

TEST(Run, SerialAndParallelAgree) {
  const auto cfg = preset(preset_text::kPowerWindowLike);
  const auto b = build_scenario(cfg, cfg.scenarios[1]);
  const auto serial = run(b.state, 64, 11, 1);
  EXPECT_EQ(serial, run(b.state, 64, 11, 4));
  EXPECT_EQ(serial, run(b.state, 64, 11, 7));
  EXPECT_NE(serial, run(b.state, 64, 12, 1));
}
