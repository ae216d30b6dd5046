#pragma once

// Experiment harness: builds one ScenarioState per scenario from an
// ExperimentConfig, runs the iteration matrix, and writes per-scenario CSV
// files plus summary.json.
//
// Guest memory layout (per VM, k = VM index in the config):
//   gva 0x4000_0000 + off  -> gpa 0x8000_0000 + off      (RAM window, 4K pages)
//   gpa RAM + ram_bytes    -> guest page tables
//   gpa 0x8000_0000..      -> hpa 0x9000_0000 + k * 16 MiB (host stage)
//   gva 0x5000_0000 / 0x5020_0000 -> I-SPM / D-SPM (gpa == hpa)

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vmrt/config.hpp"
#include "vmrt/hypervisor.hpp"
#include "vmrt/stats.hpp"

namespace vmrt {

inline constexpr const char* kVersion = "1.0.0";

namespace layout {
inline constexpr VirtAddr kGuestRamGva = 0x4000'0000;
inline constexpr PhysAddr kGuestRamGpa = 0x8000'0000;
inline constexpr VirtAddr kGuestIspmGva = 0x5000'0000;
inline constexpr VirtAddr kGuestDspmGva = 0x5020'0000;
inline constexpr std::uint64_t kGuestTableReserve = 256 * 1024;
inline constexpr PhysAddr kVmSlotBase = 0x9000'0000;
inline constexpr std::uint64_t kVmSlotBytes = 0x0100'0000;
inline constexpr PhysAddr kHostTableBase = 0x8100'0000;
inline constexpr std::uint64_t kHostTableBytes = 0x0010'0000;
inline constexpr PhysAddr kHypTableBase = 0x8000'0000;
inline constexpr VirtAddr kHypCodeGva = 0xC000'0000;
inline constexpr PhysAddr kHypCodeHpa = 0x8040'0000;
inline constexpr VirtAddr kHypDataGva = 0xC010'0000;
inline constexpr PhysAddr kHypDataHpa = 0x8050'0000;
}  // namespace layout

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

// Where each page of a memory object ended up.
struct ObjectPlacement {
  std::string name;
  MemType type = MemType::data;
  std::vector<VirtAddr> pages;
  std::uint64_t spm_pages = 0;
};

struct SpmPlan {
  std::vector<ObjectPlacement> objects;
  std::uint64_t ispm_pages_used = 0;
  std::uint64_t dspm_pages_used = 0;
};

inline unsigned spm_way_count(const CacheSpec& c) {
  return static_cast<unsigned>(static_cast<double>(c.ways) * c.spm_fraction);
}

inline MemSysConfig memsys_config(const ExperimentConfig& cfg) {
  MemSysConfig m;
  m.latency = cfg.latency;
  m.itlb = cfg.tlb;
  m.dtlb = cfg.tlb;
  m.icache = CacheGeometry::from_total(cfg.cache.icache_bytes, cfg.cache.ways, cfg.cache.line_bytes);
  m.dcache = CacheGeometry::from_total(cfg.cache.dcache_bytes, cfg.cache.ways, cfg.cache.line_bytes);
  m.ispm_base = cfg.cache.ispm_base;
  m.dspm_base = cfg.cache.dspm_base;
  return m;
}

// SPM window (first byte, page capacity) carved from the top ways.
inline std::pair<PhysAddr, std::uint64_t> spm_window(const CacheGeometry& g, PhysAddr base, unsigned spm_ways) {
  const PhysAddr first = base + std::uint64_t{g.ways - spm_ways} * g.way_bytes();
  const std::uint64_t bytes = std::uint64_t{spm_ways} * g.way_bytes();
  if (!is_aligned(first, kPageBytes)) return {first, 0};
  return {first, bytes / kPageBytes};
}

// Places objects in RAM, relocating SPM-eligible ones when `use_spm`:
// whole objects largest first, then the leftover capacity page by page.
inline SpmPlan plan_memory(const VmSpec& vm, bool use_spm, std::uint64_t ispm_capacity, std::uint64_t dspm_capacity) {
  SpmPlan plan;
  std::uint64_t ram_pages = 0;
  for (const auto& m : vm.mems) ram_pages += m.pages;
  if (ram_pages * kPageBytes > vm.ram_bytes)
    throw ConfigError("memory objects of VM '" + vm.name + "' exceed ram_bytes");

  std::vector<std::uint64_t> in_spm(vm.mems.size(), 0);
  if (use_spm) {
    for (const MemType type : {MemType::code, MemType::data}) {
      std::uint64_t left = type == MemType::code ? ispm_capacity : dspm_capacity;
      std::vector<std::size_t> order;
      for (std::size_t i = 0; i < vm.mems.size(); ++i)
        if (vm.mems[i].spm && vm.mems[i].type == type) order.push_back(i);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return vm.mems[a].pages > vm.mems[b].pages; });
      for (auto i : order)
        if (vm.mems[i].pages <= left) {
          in_spm[i] = vm.mems[i].pages;
          left -= vm.mems[i].pages;
        }
      for (auto i : order) {
        const auto take = std::min(left, vm.mems[i].pages - in_spm[i]);
        in_spm[i] += take;
        left -= take;
      }
    }
  }

  VirtAddr ram_next = layout::kGuestRamGva;
  for (std::size_t i = 0; i < vm.mems.size(); ++i) {
    const auto& m = vm.mems[i];
    ObjectPlacement p{m.name, m.type, {}, in_spm[i]};
    for (std::uint64_t k = 0; k < m.pages; ++k) {
      if (k < in_spm[i]) {
        auto& used = m.type == MemType::code ? plan.ispm_pages_used : plan.dspm_pages_used;
        const VirtAddr base = m.type == MemType::code ? layout::kGuestIspmGva : layout::kGuestDspmGva;
        p.pages.push_back(base + used++ * kPageBytes);
      } else {
        p.pages.push_back(ram_next);
        ram_next += kPageBytes;
      }
    }
    plan.objects.push_back(std::move(p));
  }
  return plan;
}

inline Workload build_workload(const VmSpec& vm, const SpmPlan& plan) {
  Workload w;
  for (const auto& a : vm.accesses) {
    const auto it = std::find_if(plan.objects.begin(), plan.objects.end(),
                                 [&](const ObjectPlacement& o) { return o.name == a.mem; });
    AccessStream s;
    s.pages = it->pages;
    s.kind = a.kind;
    s.order = a.order;
    s.offset = a.offset;
    s.stride = a.stride;
    s.accesses_per_page = a.accesses_per_page;
    s.skew = a.skew;
    s.repeats = a.repeats;
    s.compute_cycles = a.compute_cycles;
    switch (a.phase) {
      case AccessSpec::PhaseKind::prime: w.prime.streams.push_back(std::move(s)); break;
      case AccessSpec::PhaseKind::measure: w.measure.streams.push_back(std::move(s)); break;
      case AccessSpec::PhaseKind::loop: w.loop.streams.push_back(std::move(s)); break;
    }
  }
  return w;
}

inline HypervisorConfig build_hypervisor(const ExperimentConfig& cfg, bool partitioned) {
  const auto& h = cfg.hypervisor;
  HypervisorConfig hyp;
  hyp.partition_mask = partitioned ? PartitionMask(cfg.tlb.partitions, h.partition)
                                   : PartitionMask::all(cfg.tlb.partitions);
  hyp.quantum_cycles = h.quantum_cycles;
  hyp.table_ppn = layout::kHypTableBase >> kPageShift;
  const std::uint8_t rx = pte_flag::R | pte_flag::X;
  const std::uint8_t rw = pte_flag::R | pte_flag::W;
  if (h.footprint_code_pages > 0)
    hyp.map.push_back({layout::kHypCodeGva, layout::kHypCodeHpa, h.footprint_code_pages * kPageBytes, rx, PageSize::k4K});
  if (h.footprint_data_pages > 0)
    hyp.map.push_back({layout::kHypDataGva, layout::kHypDataHpa, h.footprint_data_pages * kPageBytes, rw, PageSize::k4K});
  Phase handler;
  AccessStream code;
  code.kind = AccessKind::ifetch;
  code.stride = 64;
  code.accesses_per_page = h.footprint_accesses_per_page;
  for (unsigned p = 0; p < h.footprint_code_pages; ++p) code.pages.push_back(layout::kHypCodeGva + p * kPageBytes);
  AccessStream data = code;
  data.kind = AccessKind::read;
  data.pages.clear();
  for (unsigned p = 0; p < h.footprint_data_pages; ++p) data.pages.push_back(layout::kHypDataGva + p * kPageBytes);
  handler.streams = {code, data};
  hyp.handler_footprint = expand(handler, 0);
  return hyp;
}

struct BuiltScenario {
  ScenarioSpec spec;
  ScenarioState state;
  std::vector<SpmPlan> plans;  // parallel to state.vms
};

inline BuiltScenario build_scenario(const ExperimentConfig& cfg, const ScenarioSpec& sc) {
  const MemSysConfig mcfg = memsys_config(cfg);
  MemorySystem sys(mcfg);
  const unsigned spm_ways = sc.mitigations.spm ? spm_way_count(cfg.cache) : 0;
  const auto [ispm_first, ispm_pages] = spm_window(mcfg.icache, mcfg.ispm_base, spm_ways);
  const auto [dspm_first, dspm_pages] = spm_window(mcfg.dcache, mcfg.dspm_base, spm_ways);
  if (sc.mitigations.spm) {
    for (unsigned w = mcfg.icache.ways - spm_ways; w < mcfg.icache.ways; ++w)
      sys.icache().configure_way(sys.memory(), w, WayMode::spm);
    for (unsigned w = mcfg.dcache.ways - spm_ways; w < mcfg.dcache.ways; ++w)
      sys.dcache().configure_way(sys.memory(), w, WayMode::spm);
  }

  std::vector<const VmSpec*> chosen;
  for (const auto& vm : cfg.vms)
    if (vm.critical) chosen.push_back(&vm);
  if (sc.interference)
    for (const auto& vm : cfg.vms)
      if (!vm.critical) chosen.push_back(&vm);
  if (chosen.empty()) throw ConfigError("scenario '" + sc.name + "' has no critical VM");

  std::vector<VmContext> vms;
  std::vector<SpmPlan> plans;
  for (const VmSpec* spec : chosen) {
    const std::size_t k = static_cast<std::size_t>(spec - cfg.vms.data());
    const bool use_spm = sc.mitigations.spm && spec->critical;
    SpmPlan plan = plan_memory(*spec, use_spm, ispm_pages, dspm_pages);

    VmContext vm;
    vm.name = spec->name;
    vm.role = spec->critical ? VmRole::critical : VmRole::interference;
    vm.vmid = spec->vmid;
    vm.asid = spec->asid;
    vm.partition_mask = sc.mitigations.partitioning ? PartitionMask(cfg.tlb.partitions, spec->partition)
                                                    : PartitionMask::all(cfg.tlb.partitions);
    vm.workload = build_workload(*spec, plan);

    const PhysAddr slot = layout::kVmSlotBase + k * layout::kVmSlotBytes;
    const std::uint64_t table_gpa = layout::kGuestRamGpa + spec->ram_bytes;
    vm.guest_map.push_back({layout::kGuestRamGva, layout::kGuestRamGpa, spec->ram_bytes,
                            pte_flag::R | pte_flag::W | pte_flag::X, PageSize::k4K});
    vm.guest_table_ppn = table_gpa >> kPageShift;
    vm.host_map.push_back({layout::kGuestRamGpa, slot, spec->ram_bytes + layout::kGuestTableReserve,
                           pte_flag::R | pte_flag::W | pte_flag::X, spec->host_page});
    vm.host_table_ppn = (layout::kHostTableBase + k * layout::kHostTableBytes) >> kPageShift;
    if (use_spm && plan.ispm_pages_used > 0) {
      const auto bytes = plan.ispm_pages_used * kPageBytes;
      vm.guest_map.push_back({layout::kGuestIspmGva, ispm_first, bytes, pte_flag::R | pte_flag::X, PageSize::k4K});
      vm.host_map.push_back({ispm_first, ispm_first, bytes, pte_flag::R | pte_flag::X, PageSize::k4K});
      vm.spm_regions.push_back({layout::kGuestIspmGva, ispm_first, bytes});
    }
    if (use_spm && plan.dspm_pages_used > 0) {
      const auto bytes = plan.dspm_pages_used * kPageBytes;
      vm.guest_map.push_back({layout::kGuestDspmGva, dspm_first, bytes, pte_flag::R | pte_flag::W, PageSize::k4K});
      vm.host_map.push_back({dspm_first, dspm_first, bytes, pte_flag::R | pte_flag::W, PageSize::k4K});
      vm.spm_regions.push_back({layout::kGuestDspmGva, dspm_first, bytes});
    }
    if (sc.mitigations.locking && spec->critical) {
      vm.lock_regions.push_back({layout::kGuestRamGva, spec->ram_bytes, LockSide::both});
      if (plan.ispm_pages_used > 0)
        vm.lock_regions.push_back({layout::kGuestIspmGva, plan.ispm_pages_used * kPageBytes, LockSide::instruction});
      if (plan.dspm_pages_used > 0)
        vm.lock_regions.push_back({layout::kGuestDspmGva, plan.dspm_pages_used * kPageBytes, LockSide::data});
    }
    vms.push_back(std::move(vm));
    plans.push_back(std::move(plan));
  }

  auto hyp = build_hypervisor(cfg, sc.mitigations.partitioning);
  return {sc, setup_scenario(std::move(vms), std::move(hyp), std::move(sys)), std::move(plans)};
}

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> iterations;
  std::optional<unsigned> workers;
  bool dump_state = false;
};

struct ScenarioResult {
  ScenarioSpec spec;
  std::uint64_t iterations = 0;
  std::vector<IterationRecord> records;
  RunStats stats;
};

struct MatrixResult {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string isolation;
  std::string unmitigated;
  std::vector<ScenarioResult> scenarios;

  const ScenarioResult* find(const std::string& name) const {
    for (const auto& s : scenarios)
      if (s.spec.name == name) return &s;
    return nullptr;
  }
};

inline std::string auto_isolation(const ExperimentConfig& cfg) {
  if (!cfg.isolation.empty()) return cfg.isolation;
  for (const auto& s : cfg.scenarios)
    if (!s.interference && s.mitigations.none()) return s.name;
  return {};
}

inline std::string auto_unmitigated(const ExperimentConfig& cfg) {
  if (!cfg.unmitigated.empty()) return cfg.unmitigated;
  for (const auto& s : cfg.scenarios)
    if (s.interference && s.mitigations.none()) return s.name;
  return {};
}

inline std::string describe_state(const BuiltScenario& b) {
  std::ostringstream os;
  const auto& st = b.state;
  os << "scenario " << b.spec.name << "\n";
  for (std::size_t i = 0; i < st.vms.size(); ++i) {
    const auto& vm = st.vms[i];
    os << "vm " << vm.name << " vmid=" << vm.vmid << " asid=" << vm.asid
       << " partition=" << vm.partition_mask.bit_string() << "\n";
    for (const auto& o : b.plans[i].objects) {
      os << "  object " << o.name << " pages=" << o.pages.size() << " spm_pages=" << o.spm_pages << " first=0x"
         << std::hex << (o.pages.empty() ? 0 : o.pages.front()) << std::dec << "\n";
    }
  }
  for (const auto& l : st.locks)
    os << "lock vm=" << l.vm << " va=0x" << std::hex << l.gvaddr << std::dec << " size=" << page_bytes(l.page_size)
       << " islot=" << l.islot << " dslot=" << l.dslot << "\n";
  os << "itlb\n" << st.sys.itlb().dump() << "dtlb\n" << st.sys.dtlb().dump();
  os << "icache spm ways=" << st.sys.icache().spm_way_count() << " dcache spm ways=" << st.sys.dcache().spm_way_count()
     << "\n";
  return os.str();
}

inline void write_csv(const std::filesystem::path& path, const std::vector<IterationRecord>& recs) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << "iteration,cycles,tlb_misses,cache_misses\n";
  for (std::size_t i = 0; i < recs.size(); ++i)
    out << i << ',' << recs[i].cycles << ',' << recs[i].tlb_misses << ',' << recs[i].cache_misses << '\n';
}

inline nlohmann::ordered_json delta_json(const RunStats* base, const RunStats& subject) {
  nlohmann::ordered_json j;
  if (!base) return nullptr;
  auto put = [&](const char* key, std::optional<double> v) {
    if (v) j[key] = *v;
    else j[key] = "undefined";
  };
  put("mean_pct", delta_pct(base->mean, subject.mean));
  put("stddev_pct", delta_pct(base->stddev, subject.stddev));
  return j;
}

inline nlohmann::ordered_json summary_json(const MatrixResult& m) {
  nlohmann::ordered_json j;
  j["tool"] = "vmrt";
  j["version"] = kVersion;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["stddev"] = "population";
  j["quartiles"] = "linear";
  j["baselines"] = {{"isolation", m.isolation}, {"unmitigated", m.unmitigated}};
  const auto* iso = m.find(m.isolation);
  const auto* unm = m.find(m.unmitigated);
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : m.scenarios) {
    nlohmann::ordered_json e;
    e["name"] = s.spec.name;
    e["mitigations"] = s.spec.mitigations.names();
    e["interference"] = s.spec.interference;
    e["iterations"] = s.iterations;
    e["csv"] = s.spec.name + ".csv";
    e["mean"] = s.stats.mean;
    e["stddev"] = s.stats.stddev;
    e["min"] = s.stats.min;
    e["q1"] = s.stats.q1;
    e["median"] = s.stats.median;
    e["q3"] = s.stats.q3;
    e["max"] = s.stats.max;
    e["tlb_misses"] = s.stats.tlb_misses;
    e["cache_misses"] = s.stats.cache_misses;
    e["vs_isolation"] = delta_json(iso ? &iso->stats : nullptr, s.stats);
    e["vs_unmitigated"] = delta_json(unm ? &unm->stats : nullptr, s.stats);
    arr.push_back(std::move(e));
  }
  j["scenarios"] = std::move(arr);
  return j;
}

// Runs every scenario. With `out_dir` set, writes <scenario>.csv, summary.json
// and (with dump_state) <scenario>.state.txt there.
inline MatrixResult run_matrix(const ExperimentConfig& cfg, const RunOptions& opt = {},
                               const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  MatrixResult m;
  m.seed = opt.seed.value_or(cfg.seed);
  m.config_hash = "fnv1a64:" + hex64(fnv1a64(cfg.source_text));
  m.isolation = auto_isolation(cfg);
  m.unmitigated = auto_unmitigated(cfg);
  if (out_dir) std::filesystem::create_directories(*out_dir);
  const unsigned workers = opt.workers.value_or(cfg.workers);

  for (const auto& sc : cfg.scenarios) {
    BuiltScenario built = build_scenario(cfg, sc);
    ScenarioResult r;
    r.spec = sc;
    r.iterations = opt.iterations.value_or(sc.iterations ? sc.iterations : cfg.iterations);
    r.records = run(built.state, r.iterations, m.seed, workers);
    std::vector<Cycles> cycles;
    std::uint64_t tlb = 0, cache = 0;
    for (const auto& rec : r.records) {
      cycles.push_back(rec.cycles);
      tlb += rec.tlb_misses;
      cache += rec.cache_misses;
    }
    r.stats = compute_stats(std::move(cycles), tlb, cache);
    if (out_dir) {
      write_csv(*out_dir / (sc.name + ".csv"), r.records);
      if (opt.dump_state) {
        std::ofstream(*out_dir / (sc.name + ".state.txt")) << describe_state(built);
      }
    }
    m.scenarios.push_back(std::move(r));
  }
  if (out_dir) std::ofstream(*out_dir / "summary.json") << summary_json(m).dump(2) << '\n';
  return m;
}

struct Comparison {
  std::string baseline;
  std::string subject;
  std::optional<double> mean_pct;
  std::optional<double> stddev_pct;
};

// Compares two scenarios of a written bundle (directory or summary.json).
inline Comparison compare_bundle(const std::filesystem::path& bundle, const std::string& baseline,
                                 const std::string& subject) {
  const auto file = std::filesystem::is_directory(bundle) ? bundle / "summary.json" : bundle;
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open bundle '" + file.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed bundle '" + file.string() + "': " + e.what());
  }
  auto find = [&](const std::string& name) -> const nlohmann::json& {
    for (const auto& s : j.at("scenarios"))
      if (s.at("name") == name) return s;
    throw ConfigError("scenario '" + name + "' not found in bundle");
  };
  const auto& b = find(baseline);
  const auto& s = find(subject);
  return {baseline, subject, delta_pct(b.at("mean").get<double>(), s.at("mean").get<double>()),
          delta_pct(b.at("stddev").get<double>(), s.at("stddev").get<double>())};
}

}  // namespace vmrt
