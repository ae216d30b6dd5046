#pragma once

// Built-in experiment presets. configs/<name>.ini holds the same text
// (checked by the test suite).

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vmrt {

struct Preset {
  std::string_view name;
  std::string_view description;
  std::string_view text;
};

namespace preset_text {

// Shared platform: 16-entry TLBs with 16 partitions and 8 lock slots whose
// shadowed leaves sit in the interference VM's partition, 16 KiB I$ and
// 32 KiB D$ (8 ways, 16-byte lines), half of the ways usable as SPM.
#define VMRT_PRESET_PLATFORM                                   \
  "[latency]\n"                                                \
  "tlb_hit_cycles = 1\n"                                       \
  "cache_hit_cycles = 1\n"                                     \
  "spm_cycles = 1\n"                                           \
  "memory_cycles = 40\n"                                       \
  "trap_entry_cycles = 50\n"                                   \
  "trap_exit_cycles = 50\n"                                    \
  "vm_switch_cycles = 400\n"                                   \
  "jitter = 2\n"                                               \
  "\n"                                                         \
  "[tlb]\n"                                                    \
  "entries = 16\n"                                             \
  "partitions = 16\n"                                          \
  "lock_slots = 8\n"                                           \
  "lock_leaves = 15, 14, 13, 12, 11, 10, 9, 8\n"               \
  "\n"                                                         \
  "[cache]\n"                                                  \
  "icache_bytes = 16384\n"                                     \
  "dcache_bytes = 32768\n"                                     \
  "ways = 8\n"                                                 \
  "line_bytes = 16\n"                                          \
  "spm_fraction = 0.5\n"                                       \
  "ispm_base = 0x10000000\n"                                   \
  "dspm_base = 0x10100000\n"                                   \
  "\n"                                                         \
  "[hypervisor]\n"                                             \
  "partition = 0x0100\n"                                       \
  "quantum_cycles = 20000\n"                                   \
  "footprint_code_pages = 1\n"                                 \
  "footprint_data_pages = 1\n"                                 \
  "footprint_accesses_per_page = 4\n"                          \
  "\n"

// Background Linux-like VM: random page visits with replacement over a
// working set four times the TLB size, one write per visit.
#define VMRT_PRESET_NOISE_VM                                   \
  "[vm.linux]\n"                                               \
  "role = interference\n"                                      \
  "vmid = 2\n"                                                 \
  "asid = 1\n"                                                 \
  "partition = 0xFE00\n"                                       \
  "ram_bytes = 0x200000\n"                                     \
  "\n"                                                         \
  "[mem.linux.text]\n"                                         \
  "pages = 4\n"                                                \
  "type = code\n"                                              \
  "\n"                                                         \
  "[mem.linux.heap]\n"                                         \
  "pages = 64\n"                                               \
  "type = data\n"                                              \
  "\n"                                                         \
  "[access.linux.text]\n"                                      \
  "mem = text\n"                                               \
  "phase = loop\n"                                             \
  "kind = ifetch\n"                                            \
  "order = random\n"                                           \
  "stride = 16\n"                                              \
  "accesses_per_page = 4\n"                                    \
  "skew = 1040\n"                                              \
  "\n"                                                         \
  "[access.linux.heap]\n"                                      \
  "mem = heap\n"                                               \
  "phase = loop\n"                                             \
  "kind = write\n"                                             \
  "order = uniform\n"                                          \
  "accesses_per_page = 1\n"                                    \
  "skew = 400\n"                                               \
  "compute_cycles = 1200\n"                                    \
  "\n"

inline constexpr std::string_view kSyntheticNoSpm =
    "# Synthetic benchmark: 16 data pages filling the D-TLB plus one code page.\n"
    "[run]\n"
    "iterations = 1000\n"
    "seed = 1\n"
    "workers = 1\n"
    "\n" VMRT_PRESET_PLATFORM
    "[vm.bench]\n"
    "role = critical\n"
    "vmid = 1\n"
    "asid = 1\n"
    "partition = 0x00FF\n"
    "ram_bytes = 0x200000\n"
    "\n"
    "[mem.bench.code]\n"
    "pages = 1\n"
    "type = code\n"
    "spm = true\n"
    "\n"
    "[mem.bench.data]\n"
    "pages = 16\n"
    "type = data\n"
    "spm = true\n"
    "\n"
    "[access.bench.warm_code]\n"
    "mem = code\n"
    "phase = prime\n"
    "kind = ifetch\n"
    "stride = 16\n"
    "accesses_per_page = 32\n"
    "\n"
    "[access.bench.warm_data]\n"
    "mem = data\n"
    "phase = prime\n"
    "kind = read\n"
    "order = forward\n"
    "skew = 272\n"
    "\n"
    "[access.bench.code]\n"
    "mem = code\n"
    "phase = measure\n"
    "kind = ifetch\n"
    "stride = 16\n"
    "accesses_per_page = 32\n"
    "\n"
    "[access.bench.data]\n"
    "mem = data\n"
    "phase = measure\n"
    "kind = read\n"
    "order = reverse\n"
    "skew = 272\n"
    "\n" VMRT_PRESET_NOISE_VM
    "[scenario.a_isolation]\n"
    "mitigations = none\n"
    "interference = false\n"
    "\n"
    "[scenario.b_interference]\n"
    "mitigations = none\n"
    "interference = true\n"
    "\n"
    "[scenario.c_partitioning]\n"
    "mitigations = partitioning\n"
    "interference = true\n"
    "\n"
    "[scenario.d_locking]\n"
    "mitigations = locking\n"
    "interference = true\n"
    "\n"
    "[scenario.e_partitioning_locking]\n"
    "mitigations = partitioning, locking\n"
    "interference = true\n";

inline constexpr std::string_view kSyntheticSpm =
    "# Synthetic benchmark with half of each cache used as SPM. The first two\n"
    "# scenarios are the cache-only references.\n"
    "[run]\n"
    "iterations = 1000\n"
    "seed = 1\n"
    "workers = 1\n"
    "isolation = a_isolation\n"
    "unmitigated = ref_interference_nospm\n"
    "\n" VMRT_PRESET_PLATFORM
    "[vm.bench]\n"
    "role = critical\n"
    "vmid = 1\n"
    "asid = 1\n"
    "partition = 0x00FF\n"
    "ram_bytes = 0x200000\n"
    "\n"
    "[mem.bench.code]\n"
    "pages = 1\n"
    "type = code\n"
    "spm = true\n"
    "\n"
    "[mem.bench.data]\n"
    "pages = 16\n"
    "type = data\n"
    "spm = true\n"
    "\n"
    "[access.bench.warm_code]\n"
    "mem = code\n"
    "phase = prime\n"
    "kind = ifetch\n"
    "stride = 16\n"
    "accesses_per_page = 32\n"
    "\n"
    "[access.bench.warm_data]\n"
    "mem = data\n"
    "phase = prime\n"
    "kind = read\n"
    "order = forward\n"
    "skew = 272\n"
    "\n"
    "[access.bench.code]\n"
    "mem = code\n"
    "phase = measure\n"
    "kind = ifetch\n"
    "stride = 16\n"
    "accesses_per_page = 32\n"
    "\n"
    "[access.bench.data]\n"
    "mem = data\n"
    "phase = measure\n"
    "kind = read\n"
    "order = reverse\n"
    "skew = 272\n"
    "\n" VMRT_PRESET_NOISE_VM
    "[scenario.ref_isolation_nospm]\n"
    "mitigations = none\n"
    "interference = false\n"
    "\n"
    "[scenario.ref_interference_nospm]\n"
    "mitigations = none\n"
    "interference = true\n"
    "\n"
    "[scenario.a_isolation]\n"
    "mitigations = spm\n"
    "interference = false\n"
    "\n"
    "[scenario.b_interference]\n"
    "mitigations = spm\n"
    "interference = true\n"
    "\n"
    "[scenario.c_partitioning]\n"
    "mitigations = partitioning, spm\n"
    "interference = true\n"
    "\n"
    "[scenario.d_locking]\n"
    "mitigations = locking, spm\n"
    "interference = true\n"
    "\n"
    "[scenario.e_partitioning_locking]\n"
    "mitigations = partitioning, locking, spm\n"
    "interference = true\n";

inline constexpr std::string_view kPowerWindowLike =
    "# Control-loop benchmark: two code pages, a lookup table, controller state\n"
    "# and an I/O buffer. SPM placement puts the table and the I/O buffer in\n"
    "# the D-SPM; the state overflows to cacheable RAM.\n"
    "[run]\n"
    "iterations = 1000\n"
    "seed = 1\n"
    "workers = 1\n"
    "\n" VMRT_PRESET_PLATFORM
    "[vm.ctrl]\n"
    "role = critical\n"
    "vmid = 1\n"
    "asid = 1\n"
    "partition = 0x00FF\n"
    "ram_bytes = 0x200000\n"
    "\n"
    "[mem.ctrl.code]\n"
    "pages = 2\n"
    "type = code\n"
    "spm = true\n"
    "\n"
    "[mem.ctrl.table]\n"
    "pages = 3\n"
    "type = data\n"
    "spm = true\n"
    "\n"
    "[mem.ctrl.state]\n"
    "pages = 2\n"
    "type = data\n"
    "spm = true\n"
    "\n"
    "[mem.ctrl.io]\n"
    "pages = 1\n"
    "type = data\n"
    "spm = true\n"
    "\n"
    "[access.ctrl.warm_code]\n"
    "mem = code\n"
    "phase = prime\n"
    "kind = ifetch\n"
    "stride = 16\n"
    "accesses_per_page = 64\n"
    "\n"
    "[access.ctrl.warm_table]\n"
    "mem = table\n"
    "phase = prime\n"
    "kind = read\n"
    "stride = 256\n"
    "accesses_per_page = 16\n"
    "skew = 16\n"
    "\n"
    "[access.ctrl.warm_state]\n"
    "mem = state\n"
    "phase = prime\n"
    "kind = write\n"
    "stride = 512\n"
    "accesses_per_page = 8\n"
    "skew = 48\n"
    "\n"
    "[access.ctrl.warm_io]\n"
    "mem = io\n"
    "phase = prime\n"
    "kind = read\n"
    "stride = 512\n"
    "accesses_per_page = 8\n"
    "offset = 96\n"
    "\n"
    "[access.ctrl.code]\n"
    "mem = code\n"
    "phase = measure\n"
    "kind = ifetch\n"
    "stride = 16\n"
    "accesses_per_page = 64\n"
    "\n"
    "[access.ctrl.table]\n"
    "mem = table\n"
    "phase = measure\n"
    "kind = read\n"
    "order = random\n"
    "stride = 256\n"
    "accesses_per_page = 16\n"
    "skew = 16\n"
    "\n"
    "[access.ctrl.state]\n"
    "mem = state\n"
    "phase = measure\n"
    "kind = write\n"
    "stride = 512\n"
    "accesses_per_page = 8\n"
    "skew = 48\n"
    "\n"
    "[access.ctrl.io]\n"
    "mem = io\n"
    "phase = measure\n"
    "kind = read\n"
    "stride = 512\n"
    "accesses_per_page = 8\n"
    "offset = 96\n"
    "\n" VMRT_PRESET_NOISE_VM
    "[scenario.a_isolation]\n"
    "mitigations = none\n"
    "interference = false\n"
    "\n"
    "[scenario.b_interference]\n"
    "mitigations = none\n"
    "interference = true\n"
    "\n"
    "[scenario.c_partitioning]\n"
    "mitigations = partitioning\n"
    "interference = true\n"
    "\n"
    "[scenario.d_locking]\n"
    "mitigations = locking\n"
    "interference = true\n"
    "\n"
    "[scenario.e_spm]\n"
    "mitigations = spm\n"
    "interference = true\n"
    "\n"
    "[scenario.f_partitioning_locking]\n"
    "mitigations = partitioning, locking\n"
    "interference = true\n"
    "\n"
    "[scenario.g_all]\n"
    "mitigations = partitioning, locking, spm\n"
    "interference = true\n";

#undef VMRT_PRESET_PLATFORM
#undef VMRT_PRESET_NOISE_VM

}  // namespace preset_text

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> all{
      {"synthetic-nospm", "synthetic benchmark, cache only (isolation, interference, partitioning, locking, both)",
       preset_text::kSyntheticNoSpm},
      {"synthetic-spm", "synthetic benchmark with SPM, plus cache-only references", preset_text::kSyntheticSpm},
      {"powerwindow-like", "control-loop benchmark, every mitigation combination", preset_text::kPowerWindowLike},
  };
  return all;
}

inline std::optional<Preset> find_preset(std::string_view name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  return std::nullopt;
}

}  // namespace vmrt
