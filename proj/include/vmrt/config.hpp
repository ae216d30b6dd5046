#pragma once

// Experiment configuration: an INI file with sections
//   [run] [latency] [tlb] [cache] [hypervisor]
//   [vm.<vm>] [mem.<vm>.<name>] [access.<vm>.<name>] [scenario.<name>]
// Unknown sections and keys are rejected. Key reference: README.md.

#include <algorithm>
#include <cctype>
#include <functional>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "vmrt/common.hpp"
#include "vmrt/memsys.hpp"
#include "vmrt/workload.hpp"

namespace vmrt {

enum class Mitigation : std::uint8_t { partitioning, locking, spm };

inline const char* to_string(Mitigation m) {
  switch (m) {
    case Mitigation::partitioning: return "partitioning";
    case Mitigation::locking: return "locking";
    case Mitigation::spm: return "spm";
  }
  return "?";
}

struct MitigationSet {
  bool partitioning = false;
  bool locking = false;
  bool spm = false;

  bool none() const { return !partitioning && !locking && !spm; }
  std::vector<std::string> names() const {
    std::vector<std::string> n;
    if (partitioning) n.emplace_back("partitioning");
    if (locking) n.emplace_back("locking");
    if (spm) n.emplace_back("spm");
    return n;
  }
  friend bool operator==(const MitigationSet&, const MitigationSet&) = default;
};

struct ScenarioSpec {
  std::string name;
  MitigationSet mitigations;
  bool interference = false;
  std::uint64_t iterations = 0;  // 0 = [run] iterations
};

enum class MemType : std::uint8_t { code, data };

struct MemObject {
  std::string name;
  std::uint64_t pages = 1;
  MemType type = MemType::data;
  bool spm = false;  // eligible for SPM placement when the spm mitigation is on
};

struct AccessSpec {
  std::string name;
  std::string mem;
  enum class PhaseKind : std::uint8_t { prime, measure, loop } phase = PhaseKind::measure;
  AccessKind kind = AccessKind::read;
  Order order = Order::forward;
  std::uint64_t offset = 0;
  std::uint64_t stride = 8;
  unsigned accesses_per_page = 1;
  std::uint64_t skew = 0;
  unsigned repeats = 1;
  Cycles compute_cycles = 0;
};

struct VmSpec {
  std::string name;
  bool critical = true;
  std::uint16_t vmid = 1;
  std::uint16_t asid = 1;
  std::uint64_t partition = 0;
  std::uint64_t ram_bytes = 2 << 20;
  PageSize host_page = PageSize::k4K;
  std::vector<MemObject> mems;
  std::vector<AccessSpec> accesses;
};

struct CacheSpec {
  std::uint64_t icache_bytes = 16 * 1024;
  std::uint64_t dcache_bytes = 32 * 1024;
  unsigned ways = 8;
  unsigned line_bytes = 16;
  double spm_fraction = 0.5;
  PhysAddr ispm_base = 0x1000'0000;
  PhysAddr dspm_base = 0x1010'0000;
};

struct HypervisorSpec {
  std::uint64_t partition = 0;
  Cycles quantum_cycles = 20000;
  unsigned footprint_code_pages = 1;
  unsigned footprint_data_pages = 2;
  unsigned footprint_accesses_per_page = 4;
};

struct ExperimentConfig {
  std::uint64_t iterations = 1000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::string isolation;    // baseline scenario names; empty = auto-detect
  std::string unmitigated;
  LatencyConfig latency;
  TlbConfig tlb;
  CacheSpec cache;
  HypervisorSpec hypervisor;
  std::vector<VmSpec> vms;
  std::vector<ScenarioSpec> scenarios;
  std::string source_text;
};

namespace config_detail {

using boost::property_tree::ptree;

[[noreturn]] inline void fail(const std::string& where, const std::string& msg) {
  throw ConfigError("config error at " + where + ": " + msg);
}

inline std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c); };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::uint64_t parse_uint(const std::string& where, const std::string& v) {
  std::string t = trim(v);
  t.erase(std::remove(t.begin(), t.end(), '_'), t.end());
  if (t.empty() || t[0] == '-') fail(where, "expected a non-negative integer, got '" + v + "'");
  try {
    std::size_t pos = 0;
    const auto r = std::stoull(t, &pos, 0);
    if (pos != t.size()) fail(where, "trailing characters in integer '" + v + "'");
    return r;
  } catch (const std::logic_error&) {
    fail(where, "expected a non-negative integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& where, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
  if (t == "false" || t == "no" || t == "0" || t == "off") return false;
  fail(where, "expected a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& where, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(trim(v), &pos);
    if (pos != trim(v).size()) fail(where, "trailing characters in number '" + v + "'");
    return d;
  } catch (const std::logic_error&) {
    fail(where, "expected a number, got '" + v + "'");
  }
}

// Walks one section, dispatching each key and rejecting unknown ones.
class Section {
 public:
  Section(std::string name, const ptree& tree) : name_(std::move(name)), tree_(tree) {}

  template <class Handlers>
  void visit(const Handlers& handlers) const {
    for (const auto& [key, child] : tree_) {
      auto it = handlers.find(key);
      if (it == handlers.end()) fail(where(key), "unknown key");
      it->second(where(key), child.data());
    }
  }
  std::string where(const std::string& key) const { return "[" + name_ + "] " + key; }

 private:
  std::string name_;
  const ptree& tree_;
};

using Handler = std::function<void(const std::string&, const std::string&)>;
using HandlerMap = std::map<std::string, Handler>;

inline Handler u64(std::uint64_t& dst) {
  return [&dst](const std::string& w, const std::string& v) { dst = parse_uint(w, v); };
}
inline Handler u32(unsigned& dst) {
  return [&dst](const std::string& w, const std::string& v) {
    const auto x = parse_uint(w, v);
    if (x > 0xffff'ffffULL) fail(w, "value too large");
    dst = static_cast<unsigned>(x);
  };
}
inline Handler u16(std::uint16_t& dst) {
  return [&dst](const std::string& w, const std::string& v) {
    const auto x = parse_uint(w, v);
    if (x > 0xffff) fail(w, "value does not fit 16 bits");
    dst = static_cast<std::uint16_t>(x);
  };
}
inline Handler boolean(bool& dst) {
  return [&dst](const std::string& w, const std::string& v) { dst = parse_bool(w, v); };
}
inline Handler str(std::string& dst) {
  return [&dst](const std::string&, const std::string& v) { dst = trim(v); };
}

inline PageSize parse_page(const std::string& w, const std::string& v) {
  const auto t = trim(v);
  if (t == "4K") return PageSize::k4K;
  if (t == "2M") return PageSize::k2M;
  if (t == "1G") return PageSize::k1G;
  fail(w, "expected 4K, 2M or 1G");
}

inline AccessKind parse_kind(const std::string& w, const std::string& v) {
  const auto t = trim(v);
  if (t == "read") return AccessKind::read;
  if (t == "write") return AccessKind::write;
  if (t == "ifetch") return AccessKind::ifetch;
  fail(w, "expected read, write or ifetch");
}

inline Order parse_order(const std::string& w, const std::string& v) {
  const auto t = trim(v);
  if (t == "forward") return Order::forward;
  if (t == "reverse") return Order::reverse;
  if (t == "random") return Order::random;
  if (t == "uniform") return Order::uniform;
  fail(w, "expected forward, reverse, random or uniform");
}

inline std::pair<std::string, std::string> split_vm_name(const std::string& where, const std::string& rest) {
  const auto dot = rest.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == rest.size())
    fail(where, "section name must be <vm>.<name>");
  return {rest.substr(0, dot), rest.substr(dot + 1)};
}

}  // namespace config_detail

inline ExperimentConfig parse_config(const std::string& text) {
  using namespace config_detail;
  ptree root;
  {
    std::istringstream in(text);
    try {
      boost::property_tree::ini_parser::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError("config parse error at line " + std::to_string(e.line()) + ": " + e.message());
    }
  }

  ExperimentConfig cfg;
  cfg.source_text = text;
  std::vector<std::pair<std::string, const ptree*>> mem_sections, access_sections;
  std::set<std::string> scenario_names;

  for (const auto& [name, sec] : root) {
    if (sec.empty() && !sec.data().empty()) fail(name, "key outside of any section");
    const Section s(name, sec);
    if (name == "run") {
      std::uint64_t workers = 1;
      s.visit(HandlerMap{{"iterations", u64(cfg.iterations)},
                         {"seed", u64(cfg.seed)},
                         {"workers", u64(workers)},
                         {"isolation", str(cfg.isolation)},
                         {"unmitigated", str(cfg.unmitigated)}});
      cfg.workers = static_cast<unsigned>(std::clamp<std::uint64_t>(workers, 1, 256));
    } else if (name == "latency") {
      auto& l = cfg.latency;
      s.visit(HandlerMap{{"tlb_hit_cycles", u64(l.tlb_hit_cycles)},
                         {"cache_hit_cycles", u64(l.cache_hit_cycles)},
                         {"spm_cycles", u64(l.spm_cycles)},
                         {"memory_cycles", u64(l.memory_cycles)},
                         {"trap_entry_cycles", u64(l.trap_entry_cycles)},
                         {"trap_exit_cycles", u64(l.trap_exit_cycles)},
                         {"vm_switch_cycles", u64(l.vm_switch_cycles)},
                         {"jitter", [&l](const std::string& w, const std::string& v) {
                            l.jitter = trim(v) == "none" ? 0 : parse_uint(w, v);
                          }}});
      try {
        l.validate();
      } catch (const ConfigError& e) {
        fail("[latency] jitter", e.what());
      }
    } else if (name == "tlb") {
      auto& t = cfg.tlb;
      s.visit(HandlerMap{{"entries", u32(t.entries)},
                         {"partitions", u32(t.partitions)},
                         {"lock_slots", u32(t.lock_slots)},
                         {"lock_leaves", [&t](const std::string& w, const std::string& v) {
                            t.lock_leaves.clear();
                            for (const auto& item : split_list(v)) t.lock_leaves.push_back(static_cast<unsigned>(parse_uint(w, item)));
                          }}});
      if (!is_pow2(t.entries) || t.entries < 2 || t.entries > 64) fail("[tlb] entries", "must be a power of two in [2, 64]");
      if (!is_pow2(t.partitions) || t.partitions > t.entries) fail("[tlb] partitions", "must be a power of two <= entries");
      if (!t.lock_leaves.empty() && t.lock_leaves.size() != t.lock_slots)
        fail("[tlb] lock_leaves", "must list exactly lock_slots leaves");
      for (auto leaf : t.lock_leaves)
        if (leaf >= t.entries) fail("[tlb] lock_leaves", "leaf index out of range");
    } else if (name == "cache") {
      auto& c = cfg.cache;
      s.visit(HandlerMap{{"icache_bytes", u64(c.icache_bytes)},
                         {"dcache_bytes", u64(c.dcache_bytes)},
                         {"ways", u32(c.ways)},
                         {"line_bytes", u32(c.line_bytes)},
                         {"spm_fraction", [&c](const std::string& w, const std::string& v) {
                            c.spm_fraction = parse_double(w, v);
                            if (c.spm_fraction < 0 || c.spm_fraction > 1) fail(w, "must be within [0, 1]");
                          }},
                         {"ispm_base", u64(c.ispm_base)},
                         {"dspm_base", u64(c.dspm_base)}});
    } else if (name == "hypervisor") {
      auto& h = cfg.hypervisor;
      s.visit(HandlerMap{{"partition", u64(h.partition)},
                         {"quantum_cycles", u64(h.quantum_cycles)},
                         {"footprint_code_pages", u32(h.footprint_code_pages)},
                         {"footprint_data_pages", u32(h.footprint_data_pages)},
                         {"footprint_accesses_per_page", u32(h.footprint_accesses_per_page)}});
      if (h.quantum_cycles == 0) fail("[hypervisor] quantum_cycles", "must be > 0");
    } else if (name.starts_with("vm.")) {
      VmSpec vm;
      vm.name = name.substr(3);
      if (vm.name.empty() || vm.name.find('.') != std::string::npos) fail("[" + name + "]", "bad VM name");
      s.visit(HandlerMap{{"role", [&vm](const std::string& w, const std::string& v) {
                            const auto t = trim(v);
                            if (t == "critical") vm.critical = true;
                            else if (t == "interference") vm.critical = false;
                            else fail(w, "expected critical or interference");
                          }},
                         {"vmid", u16(vm.vmid)},
                         {"asid", u16(vm.asid)},
                         {"partition", u64(vm.partition)},
                         {"ram_bytes", u64(vm.ram_bytes)},
                         {"host_page", [&vm](const std::string& w, const std::string& v) { vm.host_page = parse_page(w, v); }}});
      if (vm.ram_bytes == 0 || !is_aligned(vm.ram_bytes, kPageBytes)) fail("[" + name + "] ram_bytes", "must be a positive multiple of 4096");
      if (vm.vmid == 0) fail("[" + name + "] vmid", "0 is reserved for the hypervisor");
      for (const auto& other : cfg.vms)
        if (other.vmid == vm.vmid) fail("[" + name + "] vmid", "duplicate vmid");
      cfg.vms.push_back(std::move(vm));
    } else if (name.starts_with("mem.")) {
      mem_sections.emplace_back(name, &sec);
    } else if (name.starts_with("access.")) {
      access_sections.emplace_back(name, &sec);
    } else if (name.starts_with("scenario.")) {
      ScenarioSpec sc;
      sc.name = name.substr(9);
      if (sc.name.empty()) fail("[" + name + "]", "empty scenario name");
      if (!scenario_names.insert(sc.name).second) fail("[" + name + "]", "duplicate scenario name");
      s.visit(HandlerMap{{"mitigations", [&sc](const std::string& w, const std::string& v) {
                            for (const auto& m : split_list(v)) {
                              if (m == "none") continue;
                              if (m == "partitioning") sc.mitigations.partitioning = true;
                              else if (m == "locking") sc.mitigations.locking = true;
                              else if (m == "spm") sc.mitigations.spm = true;
                              else fail(w, "unknown mitigation '" + m + "'");
                            }
                          }},
                         {"interference", boolean(sc.interference)},
                         {"iterations", u64(sc.iterations)}});
      cfg.scenarios.push_back(std::move(sc));
    } else {
      fail("[" + name + "]", "unknown section");
    }
  }

  auto find_vm = [&](const std::string& where, const std::string& vm_name) -> VmSpec& {
    for (auto& vm : cfg.vms)
      if (vm.name == vm_name) return vm;
    fail(where, "unknown VM '" + vm_name + "'");
  };

  for (const auto& [name, sec] : mem_sections) {
    const auto [vm_name, obj] = split_vm_name("[" + name + "]", name.substr(4));
    auto& vm = find_vm("[" + name + "]", vm_name);
    MemObject m;
    m.name = obj;
    Section(name, *sec).visit(HandlerMap{{"pages", u64(m.pages)},
                                         {"type", [&m](const std::string& w, const std::string& v) {
                                            const auto t = trim(v);
                                            if (t == "code") m.type = MemType::code;
                                            else if (t == "data") m.type = MemType::data;
                                            else fail(w, "expected code or data");
                                          }},
                                         {"spm", boolean(m.spm)}});
    if (m.pages == 0) fail("[" + name + "] pages", "must be > 0");
    for (const auto& other : vm.mems)
      if (other.name == m.name) fail("[" + name + "]", "duplicate memory object");
    vm.mems.push_back(m);
  }

  for (const auto& [name, sec] : access_sections) {
    const auto [vm_name, obj] = split_vm_name("[" + name + "]", name.substr(7));
    auto& vm = find_vm("[" + name + "]", vm_name);
    AccessSpec a;
    a.name = obj;
    Section(name, *sec).visit(HandlerMap{
        {"mem", str(a.mem)},
        {"phase", [&a](const std::string& w, const std::string& v) {
           const auto t = trim(v);
           if (t == "prime") a.phase = AccessSpec::PhaseKind::prime;
           else if (t == "measure") a.phase = AccessSpec::PhaseKind::measure;
           else if (t == "loop") a.phase = AccessSpec::PhaseKind::loop;
           else fail(w, "expected prime, measure or loop");
         }},
        {"kind", [&a](const std::string& w, const std::string& v) { a.kind = parse_kind(w, v); }},
        {"order", [&a](const std::string& w, const std::string& v) { a.order = parse_order(w, v); }},
        {"offset", u64(a.offset)},
        {"stride", u64(a.stride)},
        {"accesses_per_page", u32(a.accesses_per_page)},
        {"skew", u64(a.skew)},
        {"repeats", u32(a.repeats)},
        {"compute_cycles", u64(a.compute_cycles)}});
    const auto it = std::find_if(vm.mems.begin(), vm.mems.end(), [&](const MemObject& m) { return m.name == a.mem; });
    if (it == vm.mems.end()) fail("[" + name + "] mem", "unknown memory object '" + a.mem + "'");
    if ((a.kind == AccessKind::ifetch) != (it->type == MemType::code))
      fail("[" + name + "] kind", "ifetch must target code objects and data accesses data objects");
    vm.accesses.push_back(a);
  }

  std::uint64_t full = cfg.tlb.partitions == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << cfg.tlb.partitions) - 1;
  auto check_mask = [&](const std::string& where, std::uint64_t& m) {
    if (m == 0) m = full;
    if (m & ~full) fail(where, "partition bitmap wider than [tlb] partitions");
  };
  check_mask("[hypervisor] partition", cfg.hypervisor.partition);
  std::size_t criticals = 0, noises = 0;
  for (auto& vm : cfg.vms) {
    check_mask("[vm." + vm.name + "] partition", vm.partition);
    (vm.critical ? criticals : noises)++;
  }
  if (!cfg.scenarios.empty() && criticals != 1) fail("[vm.*]", "exactly one critical VM is required");
  if (noises > 1) fail("[vm.*]", "at most one interference VM is supported");
  for (const auto& name : {cfg.isolation, cfg.unmitigated})
    if (!name.empty() && !scenario_names.contains(name)) fail("[run]", "baseline names unknown scenario '" + name + "'");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace vmrt
