#pragma once

// Per-access latency pipeline: TLB lookup, page-table walk on a miss (PTE
// fetches priced by the data cache), TLB fill under CUR_PART, then the
// physical access through the I- or D-side cache/SPM.

#include <cstdint>
#include <random>
#include <vector>

#include "vmrt/cache.hpp"
#include "vmrt/common.hpp"
#include "vmrt/tlb.hpp"
#include "vmrt/walker.hpp"

namespace vmrt {

struct LatencyConfig {
  Cycles tlb_hit_cycles = 1;
  Cycles cache_hit_cycles = 1;
  Cycles spm_cycles = 1;
  Cycles memory_cycles = 40;
  Cycles trap_entry_cycles = 50;
  Cycles trap_exit_cycles = 50;
  Cycles vm_switch_cycles = 400;
  // Uniform +/- jitter added to every main-memory access; 0 disables it.
  Cycles jitter = 0;

  void validate() const {
    if (jitter != 0 && jitter >= memory_cycles) throw ConfigError("latency.jitter must be below latency.memory_cycles");
  }
};

struct MemSysConfig {
  LatencyConfig latency;
  TlbConfig itlb;
  TlbConfig dtlb;
  CacheGeometry icache{8, 128, 16};
  CacheGeometry dcache{8, 256, 16};
  PhysAddr ispm_base = 0x1000'0000;
  PhysAddr dspm_base = 0x1010'0000;
  std::vector<BackingMemory::Range> memory{{0x8000'0000, 0x4000'0000}};
};

// Stage configuration of the running context. `host == nullptr` selects a
// single-stage walk of `guest`.
struct TranslationContext {
  std::uint16_t asid = 0;
  std::uint16_t vmid = 0;
  const AddressSpace* guest = nullptr;
  const AddressSpace* host = nullptr;
};

struct MemAccessOutcome {
  struct Breakdown {
    Cycles translation = 0;
    Cycles walk = 0;
    Cycles cache = 0;
  } breakdown;
  Cycles total = 0;
  TlbOutcome tlb = TlbOutcome::miss;
  WalkFault fault = WalkFault::none;
  unsigned walk_fetches = 0;
  CacheEvent cache_event = CacheEvent::hit;
  unsigned cache_misses = 0;  // PTE fetches and the final access
  bool filled = false;        // TLB fill was cached (not dropped)
  PhysAddr paddr = 0;
  std::uint64_t data = 0;

  bool ok() const { return fault == WalkFault::none; }
  bool tlb_miss() const { return tlb == TlbOutcome::miss; }
};

class MemorySystem {
 public:
  explicit MemorySystem(MemSysConfig cfg = {}, std::uint64_t seed = 0)
      : cfg_(std::move(cfg)),
        itlb_(with_hit(cfg_.itlb, cfg_.latency.tlb_hit_cycles)),
        dtlb_(with_hit(cfg_.dtlb, cfg_.latency.tlb_hit_cycles)),
        icache_(cfg_.icache, timing(cfg_.latency), cfg_.ispm_base),
        dcache_(cfg_.dcache, timing(cfg_.latency), cfg_.dspm_base),
        memory_(cfg_.memory),
        rng_(seed) {
    cfg_.latency.validate();
  }

  const MemSysConfig& config() const { return cfg_; }
  const LatencyConfig& latency() const { return cfg_.latency; }
  Tlb& itlb() { return itlb_; }
  Tlb& dtlb() { return dtlb_; }
  const Tlb& itlb() const { return itlb_; }
  const Tlb& dtlb() const { return dtlb_; }
  Cache& icache() { return icache_; }
  Cache& dcache() { return dcache_; }
  const Cache& icache() const { return icache_; }
  const Cache& dcache() const { return dcache_; }
  BackingMemory& memory() { return memory_; }
  const BackingMemory& memory() const { return memory_; }

  void reseed(std::uint64_t seed) { rng_.seed(seed); }

  // Both TLBs share one partition bitmap in this model.
  void write_cur_part(const PartitionMask& m) {
    itlb_.write_cur_part(m);
    dtlb_.write_cur_part(m);
  }
  void write_last_part(const PartitionMask& m) {
    itlb_.write_last_part(m);
    dtlb_.write_last_part(m);
  }
  void write_restore_last_part(std::uint64_t v) {
    itlb_.write_restore_last_part(v);
    dtlb_.write_restore_last_part(v);
  }

  MemAccessOutcome virtual_access(VirtAddr va, AccessKind kind, const TranslationContext& ctx,
                                  std::uint64_t wdata = 0, unsigned size = 8) {
    MemAccessOutcome out;
    Tlb& tlb = kind == AccessKind::ifetch ? itlb_ : dtlb_;
    const auto lk = tlb.lookup(va, ctx.asid, ctx.vmid);
    out.tlb = lk.outcome;
    out.breakdown.translation = lk.cycles;
    if (lk.outcome == TlbOutcome::fault) {
      out.fault = WalkFault::page_fault;
      return finish(out);
    }

    if (lk.is_hit()) {
      out.paddr = lk.entry.translate(va);
    } else {
      auto fetch = [&](PhysAddr a) -> Cycles {
        const auto r = dcache_.access(memory_, a, AccessKind::read);
        if (r.event == CacheEvent::miss) ++out.cache_misses;
        return priced(r);
      };
      if (ctx.guest == nullptr) throw UsageError("translation context has no address space");
      WalkResult w = ctx.host ? walk_two_stage(*ctx.guest, *ctx.host, va, fetch) : walk_single(*ctx.guest, va, fetch);
      out.breakdown.walk = w.cycles;
      out.walk_fetches = static_cast<unsigned>(w.accesses.size());
      if (!w.ok()) {
        out.fault = w.fault;
        return finish(out);
      }
      TlbEntry e = w.translation;
      e.asid = ctx.asid;
      e.vmid = ctx.vmid;
      out.filled = tlb.fill(e).has_value();
      out.paddr = w.paddr;
    }

    Cache& cache = kind == AccessKind::ifetch ? icache_ : dcache_;
    const auto r = cache.access(memory_, out.paddr, kind, wdata, size);
    if (r.event == CacheEvent::miss) ++out.cache_misses;
    out.cache_event = r.event;
    out.data = r.data;
    out.breakdown.cache = priced(r);
    return finish(out);
  }

 private:
  static TlbConfig with_hit(TlbConfig c, Cycles hit) {
    c.hit_cycles = hit;
    return c;
  }
  static CacheTiming timing(const LatencyConfig& l) { return {l.cache_hit_cycles, l.memory_cycles, l.spm_cycles}; }

  Cycles priced(const CacheAccess& r) {
    if (!r.touched_memory() || cfg_.latency.jitter == 0) return r.latency;
    const auto j = static_cast<std::int64_t>(cfg_.latency.jitter);
    std::uniform_int_distribution<std::int64_t> dist(-j, j);
    return static_cast<Cycles>(static_cast<std::int64_t>(r.latency) + dist(rng_));
  }

  static MemAccessOutcome& finish(MemAccessOutcome& o) {
    o.total = o.breakdown.translation + o.breakdown.walk + o.breakdown.cache;
    return o;
  }

  MemSysConfig cfg_;
  Tlb itlb_;
  Tlb dtlb_;
  Cache icache_;
  Cache dcache_;
  BackingMemory memory_;
  std::mt19937_64 rng_;
};

}  // namespace vmrt
