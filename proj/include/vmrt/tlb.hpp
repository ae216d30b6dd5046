#pragma once

// Fully associative TLB with partitioned PLRU replacement, the
// CUR_PART / LAST_PART / RESTORE_LAST_PART register protocol and
// CSR-backed locked entries.

#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vmrt/common.hpp"
#include "vmrt/pte.hpp"
#include "vmrt/replacement.hpp"

namespace vmrt {

struct TlbEntry {
  std::uint64_t vpn = 0;  // aligned to page_size
  PageSize page_size = PageSize::k4K;
  std::uint16_t asid = 0;
  std::uint16_t vmid = 0;
  PageTableEntry pte;
  bool valid = false;
  bool global_flag = false;

  bool covers(VirtAddr va) const {
    const unsigned sh = vpn_ignore_bits(page_size);
    return (vpn_of(va) >> sh) == (vpn >> sh);
  }
  bool tag_matches(VirtAddr va, std::uint16_t q_asid, std::uint16_t q_vmid) const {
    return valid && vmid == q_vmid && (global_flag || asid == q_asid) && covers(va);
  }
  PhysAddr translate(VirtAddr va) const {
    return (pte.ppn << kPageShift) | (va & (page_bytes(page_size) - 1));
  }

  friend bool operator==(const TlbEntry&, const TlbEntry&) = default;
};

struct PartitionCsrFile {
  PartitionMask cur_part;
  PartitionMask last_part;

  explicit PartitionCsrFile(unsigned width = 1)
      : cur_part(PartitionMask::all(width)), last_part(PartitionMask::all(width)) {}

  void write_cur_part(const PartitionMask& value) {
    check(value);
    last_part = cur_part;
    cur_part = value;
  }
  void write_last_part(const PartitionMask& value) {
    check(value);
    last_part = value;
  }
  // Copies LAST_PART into CUR_PART when the LSB of the written value is set.
  void write_restore_last_part(std::uint64_t value) {
    if (value & 1U) cur_part = last_part;
  }

  friend bool operator==(const PartitionCsrFile&, const PartitionCsrFile&) = default;

 private:
  void check(const PartitionMask& m) const {
    if (m.width() != cur_part.width()) throw UsageError("partition CSR write has wrong width");
  }
};

// Three CSR registers describing one locked translation.
struct LockVpnCsr {
  std::uint64_t vpn = 0;
  PageSize page_size = PageSize::k4K;
  bool global_flag = false;
  bool valid = false;
  friend bool operator==(const LockVpnCsr&, const LockVpnCsr&) = default;
};
struct LockPteCsr {
  PageTableEntry pte;
  bool valid = false;
  friend bool operator==(const LockPteCsr&, const LockPteCsr&) = default;
};
struct LockIdCsr {
  std::uint16_t asid = 0;
  std::uint16_t vmid = 0;
  bool valid = false;
  friend bool operator==(const LockIdCsr&, const LockIdCsr&) = default;
};

struct LockSlot {
  LockVpnCsr csr_vpn;
  LockPteCsr csr_pte;
  LockIdCsr csr_id;
  unsigned target_leaf = 0;

  bool active() const { return csr_vpn.valid && csr_pte.valid && csr_id.valid; }

  TlbEntry as_entry() const {
    TlbEntry e;
    e.vpn = csr_vpn.vpn;
    e.page_size = csr_vpn.page_size;
    e.global_flag = csr_vpn.global_flag;
    e.asid = csr_id.asid;
    e.vmid = csr_id.vmid;
    e.pte = csr_pte.pte;
    e.valid = active();
    return e;
  }

  friend bool operator==(const LockSlot&, const LockSlot&) = default;
};

struct TlbConfig {
  unsigned entries = 16;
  unsigned partitions = 16;
  unsigned lock_slots = 8;
  Cycles hit_cycles = 1;
  // Leaf shadowed by each lock slot; empty means slot j shadows leaf j.
  std::vector<unsigned> lock_leaves;
};

enum class TlbOutcome : std::uint8_t { miss, hit, lock_hit, fault };

struct TlbLookup {
  TlbOutcome outcome = TlbOutcome::miss;
  TlbEntry entry;   // valid for hit / lock_hit
  unsigned index = 0;  // leaf for hit, slot for lock_hit
  Cycles cycles = 0;   // lookup latency, charged on every outcome

  bool is_hit() const { return outcome == TlbOutcome::hit || outcome == TlbOutcome::lock_hit; }
};

struct FlushFilter {
  enum class Kind : std::uint8_t { all, by_asid, by_vmid, by_vaddr } kind = Kind::all;
  std::uint16_t asid = 0;
  std::uint16_t vmid = 0;
  VirtAddr vaddr = 0;

  static FlushFilter all() { return {}; }
  static FlushFilter by_asid(std::uint16_t asid, std::uint16_t vmid) { return {Kind::by_asid, asid, vmid, 0}; }
  static FlushFilter by_vmid(std::uint16_t vmid) { return {Kind::by_vmid, 0, vmid, 0}; }
  static FlushFilter by_vaddr(VirtAddr va) { return {Kind::by_vaddr, 0, 0, va}; }
};

class Tlb {
 public:
  explicit Tlb(TlbConfig cfg = {})
      : cfg_(std::move(cfg)), tree_(cfg_.entries, cfg_.partitions), csr_(cfg_.partitions),
        entries_(cfg_.entries), slots_(cfg_.lock_slots) {
    if (!cfg_.lock_leaves.empty() && cfg_.lock_leaves.size() != cfg_.lock_slots)
      throw UsageError("lock_leaves must list one leaf per lock slot");
    for (unsigned j = 0; j < cfg_.lock_slots; ++j) {
      const unsigned leaf = cfg_.lock_leaves.empty() ? j : cfg_.lock_leaves[j];
      if (leaf >= cfg_.entries) throw UsageError("lock slot target leaf out of range");
      slots_[j].target_leaf = leaf;
    }
  }

  const TlbConfig& config() const { return cfg_; }
  const PlruTree& tree() const { return tree_; }
  const PartitionCsrFile& csr() const { return csr_; }
  const std::vector<TlbEntry>& entries() const { return entries_; }
  const std::vector<LockSlot>& lock_slots() const { return slots_; }
  unsigned size() const { return cfg_.entries; }

  TlbLookup lookup(VirtAddr va, std::uint16_t asid, std::uint16_t vmid) {
    TlbLookup r;
    r.cycles = cfg_.hit_cycles;
    if (!is_canonical_sv39(va)) {
      r.outcome = TlbOutcome::fault;
      return r;
    }
    for (unsigned j = 0; j < slots_.size(); ++j) {
      if (!slots_[j].active()) continue;
      TlbEntry e = slots_[j].as_entry();
      if (e.tag_matches(va, asid, vmid)) {
        r.outcome = TlbOutcome::lock_hit;
        r.entry = e;
        r.index = j;
        return r;
      }
    }
    for (unsigned i = 0; i < entries_.size(); ++i) {
      if (entries_[i].tag_matches(va, asid, vmid)) {
        tree_.touch(i);
        r.outcome = TlbOutcome::hit;
        r.entry = entries_[i];
        r.index = i;
        return r;
      }
    }
    return r;
  }

  // Non-mutating probe used for inspection; does not update replacement state.
  std::optional<TlbEntry> probe(VirtAddr va, std::uint16_t asid, std::uint16_t vmid) const {
    for (const auto& s : slots_)
      if (s.active() && s.as_entry().tag_matches(va, asid, vmid)) return s.as_entry();
    for (const auto& e : entries_)
      if (e.tag_matches(va, asid, vmid)) return e;
    return std::nullopt;
  }

  // Returns the written leaf, or nullopt if CUR_PART leaves nothing
  // replaceable (the translation is then not cached).
  std::optional<unsigned> fill(const TlbEntry& entry) {
    if (!entry.valid || !entry.pte.valid()) throw UsageError("TLB fill requires a valid entry");
    const unsigned sh = vpn_ignore_bits(entry.page_size);
    if ((entry.vpn & ((std::uint64_t{1} << sh) - 1)) != 0)
      throw UsageError("TLB fill vpn not aligned to its page size");
    auto victim = tree_.insert(csr_.cur_part);
    if (victim) entries_[*victim] = entry;
    return victim;
  }

  void write_cur_part(const PartitionMask& m) { csr_.write_cur_part(m); }
  void write_last_part(const PartitionMask& m) { csr_.write_last_part(m); }
  void write_restore_last_part(std::uint64_t v) { csr_.write_restore_last_part(v); }

  void program_lock_vpn(unsigned slot, const LockVpnCsr& v) {
    check_slot(slot);
    if (v.valid || v.vpn != 0) {
      const unsigned sh = vpn_ignore_bits(v.page_size);
      if ((v.vpn & ((std::uint64_t{1} << sh) - 1)) != 0)
        throw UsageError("lock slot vpn is not naturally aligned to its page size");
    }
    slots_[slot].csr_vpn = v;
    reevaluate(slot);
  }
  void program_lock_pte(unsigned slot, const LockPteCsr& v) {
    check_slot(slot);
    slots_[slot].csr_pte = v;
    reevaluate(slot);
  }
  void program_lock_id(unsigned slot, const LockIdCsr& v) {
    check_slot(slot);
    slots_[slot].csr_id = v;
    reevaluate(slot);
  }

  // Invalidates regular entries; lock slots are never affected.
  void flush(const FlushFilter& f) {
    for (auto& e : entries_) {
      if (!e.valid) continue;
      bool hit = false;
      switch (f.kind) {
        case FlushFilter::Kind::all: hit = true; break;
        case FlushFilter::Kind::by_asid: hit = !e.global_flag && e.asid == f.asid && e.vmid == f.vmid; break;
        case FlushFilter::Kind::by_vmid: hit = e.vmid == f.vmid; break;
        case FlushFilter::Kind::by_vaddr: hit = e.covers(f.vaddr); break;
      }
      if (hit) e = TlbEntry{};
    }
  }

  std::string dump() const {
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    os << "tlb entries=" << std::dec << cfg_.entries << " partitions=" << cfg_.partitions
       << " lock_slots=" << cfg_.lock_slots << "\n";
    os << std::hex;
    os << "cur_part=0x" << csr_.cur_part.bits() << " last_part=0x" << csr_.last_part.bits() << "\n";
    os << "plru=" << tree_.bit_string() << " locked=0x" << tree_.locked_bits() << "\n";
    for (unsigned i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      os << "entry " << std::dec << i << ": ";
      if (!e.valid) {
        os << "invalid\n";
        continue;
      }
      write_entry(os, e);
    }
    for (unsigned j = 0; j < slots_.size(); ++j) {
      const auto& s = slots_[j];
      os << "lock " << std::dec << j << " leaf=" << s.target_leaf << " v=" << s.csr_vpn.valid
         << s.csr_pte.valid << s.csr_id.valid << (s.active() ? " active: " : " inactive");
      if (s.active()) write_entry(os, s.as_entry());
      else os << "\n";
    }
    return os.str();
  }

 private:
  static void write_entry(std::ostringstream& os, const TlbEntry& e) {
    os << std::hex << "vpn=0x" << std::setw(7) << e.vpn << " size=" << to_string(e.page_size)
       << " asid=0x" << std::setw(4) << e.asid << " vmid=0x" << std::setw(4) << e.vmid
       << " ppn=0x" << std::setw(11) << e.pte.ppn << " flags=" << flags_string(e.pte.flags)
       << (e.global_flag ? " G" : "") << "\n";
  }

  void check_slot(unsigned slot) const {
    if (slot >= slots_.size()) throw UsageError("lock slot index out of range");
  }

  void reevaluate(unsigned slot) {
    const unsigned leaf = slots_[slot].target_leaf;
    bool any_active = false;
    for (const auto& s : slots_)
      if (s.active() && s.target_leaf == leaf) any_active = true;
    if (any_active && !tree_.is_locked(leaf)) entries_[leaf] = TlbEntry{};
    tree_.set_lock(leaf, any_active);
  }

  TlbConfig cfg_;
  PlruTree tree_;
  PartitionCsrFile csr_;
  std::vector<TlbEntry> entries_;
  std::vector<LockSlot> slots_;
};

}  // namespace vmrt
