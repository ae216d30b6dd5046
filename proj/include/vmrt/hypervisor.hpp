#pragma once

// VMM layer: VM contexts with per-VM partition bitmaps and locked regions,
// trap-time CUR_PART save/restore, and the prime / deschedule / interfere /
// reschedule / measure iteration loop.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vmrt/common.hpp"
#include "vmrt/memsys.hpp"
#include "vmrt/walker.hpp"
#include "vmrt/workload.hpp"

namespace vmrt {

enum class VmRole : std::uint8_t { critical, interference };
enum class LockSide : std::uint8_t { instruction, data, both };

struct LockRegion {
  VirtAddr gvaddr = 0;
  std::uint64_t size = 0;
  LockSide side = LockSide::both;
};

// Guest-virtual range backed by an SPM window.
struct SpmRegion {
  VirtAddr gvaddr = 0;
  PhysAddr spm_paddr = 0;
  std::uint64_t size = 0;
};

struct VmContext {
  std::string name;
  VmRole role = VmRole::critical;
  std::uint16_t vmid = 1;
  std::uint16_t asid = 1;
  PartitionMask partition_mask;
  std::vector<LockRegion> lock_regions;
  std::vector<SpmRegion> spm_regions;
  Workload workload;

  // Page-table construction inputs; guest tables live in guest-physical
  // space starting at guest_table_ppn and must be covered by host_map.
  std::vector<MapRegion> guest_map;
  std::uint64_t guest_table_ppn = 0;
  std::vector<MapRegion> host_map;
  std::uint64_t host_table_ppn = 0;

  std::shared_ptr<const AddressSpace> guest;
  std::shared_ptr<const AddressSpace> host;

  TranslationContext context() const { return {asid, vmid, guest.get(), host.get()}; }
};

struct HypervisorConfig {
  PartitionMask partition_mask;
  Cycles quantum_cycles = 20000;
  std::vector<Access> handler_footprint;  // hypervisor-virtual accesses per trap
  std::vector<MapRegion> map;             // single-stage hypervisor mappings
  std::uint64_t table_ppn = 0;
  std::shared_ptr<const AddressSpace> space;

  TranslationContext context() const { return {0, 0, space.get(), nullptr}; }
};

struct LockAssignment {
  std::string vm;
  VirtAddr gvaddr = 0;
  PageSize page_size = PageSize::k4K;
  LockSide side = LockSide::both;
  unsigned islot = 0;
  unsigned dslot = 0;
};

struct ScenarioState {
  MemorySystem sys;
  std::vector<VmContext> vms;
  HypervisorConfig hyp;
  std::size_t current = 0;
  Cycles clock = 0;
  std::vector<LockAssignment> locks;
};

struct IterationRecord {
  Cycles cycles = 0;
  std::uint64_t tlb_misses = 0;
  std::uint64_t cache_misses = 0;
  Cycles interference_cycles = 0;
  std::uint64_t interference_accesses = 0;
  Cycles longest_interference_access = 0;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

namespace detail {

inline PhysAddr translate_offline(const VmContext& vm, VirtAddr va) {
  auto w = walk_two_stage(*vm.guest, *vm.host, va, NoCostFetch{});
  if (!w.ok()) throw ConfigError("lock region of VM '" + vm.name + "' is not mapped");
  return w.paddr;
}

// Largest SV39 page that starts at `va`, fits the remainder and is backed
// by naturally aligned, physically contiguous memory.
inline PageSize lock_chunk(const VmContext& vm, VirtAddr va, std::uint64_t remaining) {
  const PhysAddr pa = translate_offline(vm, va);
  for (int lvl = 2; lvl > 0; --lvl) {
    const auto s = page_size_at_level(static_cast<unsigned>(lvl));
    const std::uint64_t b = page_bytes(s);
    if (!is_aligned(va, b) || !is_aligned(pa, b) || remaining < b) continue;
    bool contiguous = true;
    for (std::uint64_t off = kPageBytes; off < b && contiguous; off += kPageBytes)
      contiguous = translate_offline(vm, va + off) == pa + off;
    if (contiguous) return s;
  }
  return PageSize::k4K;
}

}  // namespace detail

// Builds all page tables and programs lock slots first-come, first-served
// (one slot per required PTE). Throws ConfigError on slot exhaustion or
// misaligned regions.
inline ScenarioState setup_scenario(std::vector<VmContext> vms, HypervisorConfig hyp, MemorySystem sys) {
  ScenarioState st{std::move(sys), std::move(vms), std::move(hyp), 0, 0, {}};
  if (st.vms.empty()) throw ConfigError("scenario has no VMs");

  {
    PageTableBuilder b(st.hyp.table_ppn, false);
    b.map_all(st.hyp.map);
    st.hyp.space = std::make_shared<const AddressSpace>(b.take());
  }
  for (auto& vm : st.vms) {
    PageTableBuilder hb(vm.host_table_ppn, true);
    hb.map_all(vm.host_map);
    PageTableBuilder gb(vm.guest_table_ppn, false);
    gb.map_all(vm.guest_map);
    vm.host = std::make_shared<const AddressSpace>(hb.take());
    vm.guest = std::make_shared<const AddressSpace>(gb.take());
    for (std::uint64_t p = 0; p < gb.table_pages(); ++p) {
      if (!walk_g_stage(*vm.host, (gb.first_table_ppn() + p) << kPageShift, NoCostFetch{}).ok())
        throw ConfigError("guest page tables of VM '" + vm.name + "' are not mapped by its host stage");
    }
  }

  unsigned next_islot = 0;
  unsigned next_dslot = 0;
  const unsigned islots = st.sys.itlb().config().lock_slots;
  const unsigned dslots = st.sys.dtlb().config().lock_slots;
  for (const auto& vm : st.vms) {
    for (const auto& region : vm.lock_regions) {
      if (region.size == 0 || !is_aligned(region.gvaddr, kPageBytes) || !is_aligned(region.size, kPageBytes))
        throw ConfigError("lock region of VM '" + vm.name + "' is not base-page aligned");
      std::uint64_t off = 0;
      while (off < region.size) {
        const VirtAddr va = region.gvaddr + off;
        const PageSize size = detail::lock_chunk(vm, va, region.size - off);
        const PhysAddr pa = detail::translate_offline(vm, va);
        const bool wants_i = region.side != LockSide::data;
        const bool wants_d = region.side != LockSide::instruction;
        if ((wants_i && next_islot >= islots) || (wants_d && next_dslot >= dslots))
          throw ConfigError("lock slot exhaustion while locking VM '" + vm.name + "'");
        LockAssignment a{vm.name, va, size, region.side, 0, 0};
        const LockVpnCsr vpn{vpn_of(va), size, false, true};
        const LockPteCsr pte{PageTableEntry{pa >> kPageShift, static_cast<std::uint8_t>(
                                                                   pte_flag::V | pte_flag::RWX | pte_flag::A | pte_flag::D)},
                             true};
        const LockIdCsr id{vm.asid, vm.vmid, true};
        auto program = [&](Tlb& tlb, unsigned slot) {
          tlb.program_lock_vpn(slot, vpn);
          tlb.program_lock_pte(slot, pte);
          tlb.program_lock_id(slot, id);
        };
        if (wants_i) program(st.sys.itlb(), a.islot = next_islot++);
        if (wants_d) program(st.sys.dtlb(), a.dslot = next_dslot++);
        st.locks.push_back(a);
        off += page_bytes(size);
      }
    }
  }

  st.current = 0;
  st.sys.write_cur_part(st.vms[0].partition_mask);
  return st;
}

inline MemAccessOutcome execute_access(ScenarioState& st, const Access& a, const TranslationContext& ctx) {
  auto o = st.sys.virtual_access(a.va, a.kind, ctx, a.va);
  if (!o.ok()) throw ConfigError(std::string("workload access faulted (") + to_string(o.fault) + ")");
  st.clock += a.compute + o.total;
  return o;
}

// CUR_PART is switched to the hypervisor partition before anything else.
inline Cycles trap_enter(ScenarioState& st) {
  st.sys.write_cur_part(st.hyp.partition_mask);
  const Cycles start = st.clock;
  st.clock += st.sys.latency().trap_entry_cycles;
  const auto ctx = st.hyp.context();
  for (const auto& a : st.hyp.handler_footprint) execute_access(st, a, ctx);
  return st.clock - start;
}

// The last handler action restores LAST_PART into CUR_PART; on a VM switch
// LAST_PART is first overwritten with the next VM's bitmap.
inline Cycles trap_exit(ScenarioState& st, std::size_t next_vm) {
  if (next_vm >= st.vms.size()) throw UsageError("trap_exit: VM index out of range");
  Cycles cost = st.sys.latency().trap_exit_cycles;
  if (next_vm != st.current) {
    st.sys.write_last_part(st.vms[next_vm].partition_mask);
    cost += st.sys.latency().vm_switch_cycles;
  }
  st.sys.write_restore_last_part(1);
  st.current = next_vm;
  st.clock += cost;
  return cost;
}

inline std::optional<std::size_t> find_role(const ScenarioState& st, VmRole role) {
  for (std::size_t i = 0; i < st.vms.size(); ++i)
    if (st.vms[i].role == role) return i;
  return std::nullopt;
}

// One iteration from a private copy of `base`.
inline IterationRecord run_iteration(const ScenarioState& base, std::uint64_t seed, std::uint64_t iteration) {
  ScenarioState st = base;
  const std::uint64_t it_seed = derive_seed(seed, iteration);
  st.sys.reseed(it_seed);
  IterationRecord rec;

  const auto crit = find_role(st, VmRole::critical);
  if (!crit) throw ConfigError("scenario has no critical VM");
  const auto noise = find_role(st, VmRole::interference);
  const auto& cvm = st.vms[*crit];

  if (st.current != *crit) {
    trap_enter(st);
    trap_exit(st, *crit);
  }
  for (const auto& a : expand(cvm.workload.prime, derive_seed(it_seed, 1))) execute_access(st, a, cvm.context());

  trap_enter(st);
  trap_exit(st, noise.value_or(*crit));
  if (noise) {
    const auto& nvm = st.vms[*noise];
    const auto ctx = nvm.context();
    const Cycles start = st.clock;
    for (std::uint64_t round = 0; st.clock - start < st.hyp.quantum_cycles && !nvm.workload.loop.empty(); ++round) {
      const auto trace = expand(nvm.workload.loop, derive_seed(it_seed, 100 + round));
      if (trace.empty()) break;
      for (const auto& a : trace) {
        const Cycles before = st.clock;
        execute_access(st, a, ctx);
        rec.longest_interference_access = std::max(rec.longest_interference_access, st.clock - before);
        ++rec.interference_accesses;
        if (st.clock - start >= st.hyp.quantum_cycles) break;
      }
    }
    rec.interference_cycles = st.clock - start;
    trap_enter(st);
    trap_exit(st, *crit);
  }

  const auto ctx = cvm.context();
  const Cycles start = st.clock;
  for (const auto& a : expand(cvm.workload.measure, derive_seed(it_seed, 2))) {
    const auto o = execute_access(st, a, ctx);
    rec.tlb_misses += o.tlb_miss();
    rec.cache_misses += o.cache_misses;
  }
  rec.cycles = st.clock - start;
  return rec;
}

// Iterations are independent, so any worker count yields identical records.
inline std::vector<IterationRecord> run(const ScenarioState& base, std::uint64_t iterations, std::uint64_t seed,
                                        unsigned workers = 1) {
  std::vector<IterationRecord> out(iterations);
  workers = std::max(1U, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::uint64_t>(iterations, 1))));
  if (workers == 1) {
    for (std::uint64_t i = 0; i < iterations; ++i) out[i] = run_iteration(base, seed, i);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::uint64_t i = w; i < iterations; i += workers) out[i] = run_iteration(base, seed, i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace vmrt
