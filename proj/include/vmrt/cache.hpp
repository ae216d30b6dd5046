#pragma once

// Set-associative write-back / write-allocate L1 cache whose ways can be
// turned into scratchpad memory at runtime.
//
// The SPM window spans the whole data array; way w answers at
// [base + w * way_bytes, base + (w + 1) * way_bytes). Only ways in SPM
// mode respond: to the others, writes are dropped and reads return zero.

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "vmrt/common.hpp"
#include "vmrt/pte.hpp"
#include "vmrt/replacement.hpp"

namespace vmrt {

// Sparse byte-addressable main memory restricted to a set of mapped ranges.
class BackingMemory {
 public:
  struct Range {
    PhysAddr base;
    std::uint64_t size;
  };

  BackingMemory() = default;
  explicit BackingMemory(std::vector<Range> ranges) : ranges_(std::move(ranges)) {}

  bool mapped(PhysAddr a, std::uint64_t len = 1) const {
    for (const auto& r : ranges_)
      if (a >= r.base && a - r.base + len <= r.size) return true;
    return false;
  }

  void read(PhysAddr a, std::span<std::uint8_t> out) const {
    check(a, out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      auto it = pages_.find((a + i) >> kPageShift);
      out[i] = it == pages_.end() ? 0 : it->second[(a + i) & (kPageBytes - 1)];
    }
  }
  void write(PhysAddr a, std::span<const std::uint8_t> in) {
    check(a, in.size());
    for (std::size_t i = 0; i < in.size(); ++i) pages_[(a + i) >> kPageShift][(a + i) & (kPageBytes - 1)] = in[i];
  }

  std::uint64_t read_word(PhysAddr a, unsigned size = 8) const {
    std::array<std::uint8_t, 8> b{};
    read(a, std::span(b.data(), size));
    std::uint64_t v = 0;
    std::memcpy(&v, b.data(), size);
    return v;
  }
  void write_word(PhysAddr a, std::uint64_t v, unsigned size = 8) {
    std::array<std::uint8_t, 8> b{};
    std::memcpy(b.data(), &v, size);
    write(a, std::span<const std::uint8_t>(b.data(), size));
  }

  friend bool operator==(const BackingMemory& a, const BackingMemory& b) {
    // Unwritten bytes read as zero, so compare by content.
    auto covers = [](const BackingMemory& x, const BackingMemory& y) {
      for (const auto& [page, bytes] : x.pages_) {
        auto it = y.pages_.find(page);
        for (std::size_t i = 0; i < kPageBytes; ++i) {
          const std::uint8_t other = it == y.pages_.end() ? 0 : it->second[i];
          if (bytes[i] != other) return false;
        }
      }
      return true;
    };
    return covers(a, b) && covers(b, a);
  }

 private:
  void check(PhysAddr a, std::uint64_t len) const {
    if (!mapped(a, len)) throw ConfigError("access to unmapped physical address");
  }

  std::vector<Range> ranges_;
  std::unordered_map<std::uint64_t, std::array<std::uint8_t, kPageBytes>> pages_;
};

struct CacheGeometry {
  unsigned ways = 8;
  unsigned sets = 256;
  unsigned line_bytes = 16;

  std::uint64_t way_bytes() const { return std::uint64_t{sets} * line_bytes; }
  std::uint64_t total_bytes() const { return way_bytes() * ways; }

  static CacheGeometry from_total(std::uint64_t total, unsigned ways, unsigned line_bytes) {
    if (ways == 0 || line_bytes == 0 || total % (std::uint64_t{ways} * line_bytes) != 0)
      throw UsageError("cache size not divisible by ways * line size");
    return {ways, static_cast<unsigned>(total / (std::uint64_t{ways} * line_bytes)), line_bytes};
  }
};

struct CacheTiming {
  Cycles hit_cycles = 1;
  Cycles miss_cycles = 40;
  Cycles spm_cycles = 1;
};

enum class WayMode : std::uint8_t { cache, spm };
enum class CacheEvent : std::uint8_t { hit, miss, spm, spm_misconfig };
enum class DataResult : std::uint8_t { data, dummy, dropped };

inline const char* to_string(CacheEvent e) {
  switch (e) {
    case CacheEvent::hit: return "hit";
    case CacheEvent::miss: return "miss";
    case CacheEvent::spm: return "spm";
    case CacheEvent::spm_misconfig: return "spm-misconfig";
  }
  return "?";
}

struct CacheAccess {
  Cycles latency = 0;
  CacheEvent event = CacheEvent::hit;
  DataResult result = DataResult::data;
  std::uint64_t data = 0;
  bool allocated = false;   // miss placed the line in a way
  bool wrote_back = false;  // miss evicted a dirty line

  // True when the access went out to main memory.
  bool touched_memory() const { return event == CacheEvent::miss; }
};

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t evictions = 0;
  std::uint64_t writebacks = 0;
  std::uint64_t fill_drops = 0;
  std::uint64_t spm_accesses = 0;
  std::uint64_t spm_misconfig = 0;

  friend bool operator==(const CacheStats&, const CacheStats&) = default;
};

struct SpmLocation {
  unsigned way;
  unsigned set;
  unsigned offset;
};

class Cache {
 public:
  Cache(CacheGeometry geo, CacheTiming timing, PhysAddr spm_base)
      : geo_(geo), timing_(timing), spm_base_(spm_base) {
    if (!is_pow2(geo.ways) || geo.ways < 2 || geo.ways > kMaxPlruLeaves || !is_pow2(geo.sets) ||
        !is_pow2(geo.line_bytes) || geo.line_bytes < 8)
      throw UsageError("cache geometry must be powers of two (ways in [2, 64], line >= 8 bytes)");
    if (!is_aligned(spm_base, geo.total_bytes())) throw UsageError("SPM window base must be aligned to its size");
    const std::size_t lines = std::size_t{geo.sets} * geo.ways;
    tags_.assign(lines, 0);
    valid_.assign(lines, 0);
    dirty_.assign(lines, 0);
    data_.assign(lines * geo.line_bytes, 0);
    modes_.assign(geo.ways, WayMode::cache);
    trees_.assign(geo.sets, PlruTree(geo.ways, 1));
  }

  const CacheGeometry& geometry() const { return geo_; }
  const CacheTiming& timing() const { return timing_; }
  const CacheStats& stats() const { return stats_; }
  void reset_stats() { stats_ = {}; }
  PhysAddr spm_base() const { return spm_base_; }
  WayMode mode(unsigned way) const { return modes_.at(way); }
  unsigned spm_way_count() const {
    unsigned n = 0;
    for (auto m : modes_) n += m == WayMode::spm;
    return n;
  }

  bool in_spm_window(PhysAddr a) const { return a >= spm_base_ && a - spm_base_ < geo_.total_bytes(); }

  std::optional<SpmLocation> spm_decode(PhysAddr a) const {
    if (!in_spm_window(a)) return std::nullopt;
    const std::uint64_t off = a - spm_base_;
    const std::uint64_t in_way = off % geo_.way_bytes();
    return SpmLocation{static_cast<unsigned>(off / geo_.way_bytes()),
                       static_cast<unsigned>(in_way / geo_.line_bytes),
                       static_cast<unsigned>(in_way % geo_.line_bytes)};
  }

  // Physical address range served by SPM way `way`.
  PhysAddr spm_way_base(unsigned way) const { return spm_base_ + way * geo_.way_bytes(); }

  void configure_way(BackingMemory& mem, unsigned way, WayMode mode) {
    if (way >= geo_.ways) throw UsageError("cache way index out of range");
    if (mode == WayMode::spm) {
      if (modes_[way] == WayMode::cache) flush_way(mem, way);
      for (unsigned s = 0; s < geo_.sets; ++s) {
        const auto i = idx(s, way);
        valid_[i] = dirty_[i] = 0;
        tags_[i] = 0;
        trees_[s].set_lock(way, true);
      }
    } else {
      for (unsigned s = 0; s < geo_.sets; ++s) trees_[s].set_lock(way, false);
    }
    if (modes_[way] != mode) zero_way(way);
    modes_[way] = mode;
  }

  // Writes back every dirty line of `way` and keeps it valid and clean.
  void flush_way(BackingMemory& mem, unsigned way) {
    for (unsigned s = 0; s < geo_.sets; ++s) {
      const auto i = idx(s, way);
      if (valid_[i] && dirty_[i]) {
        write_back(mem, s, way);
        dirty_[i] = 0;
      }
    }
  }
  void flush(BackingMemory& mem) {
    for (unsigned w = 0; w < geo_.ways; ++w)
      if (modes_[w] == WayMode::cache) flush_way(mem, w);
  }

  // `size` in {1, 2, 4, 8}; the access must be naturally aligned.
  CacheAccess access(BackingMemory& mem, PhysAddr a, AccessKind kind, std::uint64_t wdata = 0, unsigned size = 8) {
    if (size == 0 || size > 8 || !is_pow2(size) || !is_aligned(a, size))
      throw UsageError("cache access size must be 1/2/4/8 and naturally aligned");
    if (auto loc = spm_decode(a)) return spm_access(*loc, kind, wdata, size);

    CacheAccess r;
    const unsigned set = set_of(a);
    const std::uint64_t tag = tag_of(a);
    const unsigned off = static_cast<unsigned>(a & (geo_.line_bytes - 1));
    for (unsigned w = 0; w < geo_.ways; ++w) {
      const auto i = idx(set, w);
      if (valid_[i] && tags_[i] == tag) {
        ++stats_.hits;
        trees_[set].touch(w);
        r.latency = timing_.hit_cycles;
        r.event = CacheEvent::hit;
        r.data = line_rw(i, off, kind, wdata, size);
        return r;
      }
    }

    ++stats_.misses;
    r.latency = timing_.miss_cycles;
    r.event = CacheEvent::miss;
    auto victim = trees_[set].insert(PartitionMask::all(1));
    if (!victim) {
      // Every way is SPM: serve straight from memory.
      ++stats_.fill_drops;
      if (kind == AccessKind::write)
        mem.write_word(a, wdata, size);
      else
        r.data = mem.read_word(a, size);
      return r;
    }
    const auto i = idx(set, *victim);
    if (valid_[i]) {
      ++stats_.evictions;
      if (dirty_[i]) {
        write_back(mem, set, *victim);
        r.wrote_back = true;
      }
    }
    const PhysAddr line_addr = align_down(a, geo_.line_bytes);
    mem.read(line_addr, std::span(&data_[i * geo_.line_bytes], geo_.line_bytes));
    tags_[i] = tag;
    valid_[i] = 1;
    dirty_[i] = 0;
    r.allocated = true;
    r.data = line_rw(i, off, kind, wdata, size);
    return r;
  }

  // Inspection helpers.
  bool line_valid(unsigned set, unsigned way) const { return valid_[idx(set, way)]; }
  bool line_dirty(unsigned set, unsigned way) const { return dirty_[idx(set, way)]; }
  std::uint64_t line_tag(unsigned set, unsigned way) const { return tags_[idx(set, way)]; }
  bool contains(PhysAddr a) const {
    const unsigned set = set_of(a);
    for (unsigned w = 0; w < geo_.ways; ++w)
      if (valid_[idx(set, w)] && tags_[idx(set, w)] == tag_of(a)) return true;
    return false;
  }
  std::span<const std::uint8_t> way_data(unsigned way) const {
    // Data of one way is not contiguous in the line-major array; copy out.
    way_scratch_.resize(geo_.way_bytes());
    for (unsigned s = 0; s < geo_.sets; ++s)
      std::memcpy(&way_scratch_[std::size_t{s} * geo_.line_bytes], &data_[idx(s, way) * geo_.line_bytes],
                  geo_.line_bytes);
    return way_scratch_;
  }
  const PlruTree& set_tree(unsigned set) const { return trees_.at(set); }

  unsigned set_of(PhysAddr a) const { return static_cast<unsigned>((a / geo_.line_bytes) & (geo_.sets - 1)); }
  std::uint64_t tag_of(PhysAddr a) const { return a / geo_.line_bytes / geo_.sets; }

 private:
  std::size_t idx(unsigned set, unsigned way) const { return std::size_t{set} * geo_.ways + way; }

  CacheAccess spm_access(const SpmLocation& loc, AccessKind kind, std::uint64_t wdata, unsigned size) {
    CacheAccess r;
    r.latency = timing_.spm_cycles;
    if (modes_[loc.way] != WayMode::spm) {
      ++stats_.spm_misconfig;
      r.event = CacheEvent::spm_misconfig;
      r.result = kind == AccessKind::write ? DataResult::dropped : DataResult::dummy;
      return r;
    }
    ++stats_.spm_accesses;
    r.event = CacheEvent::spm;
    std::uint8_t* p = &data_[idx(loc.set, loc.way) * geo_.line_bytes + loc.offset];
    if (kind == AccessKind::write)
      std::memcpy(p, &wdata, size);
    else
      std::memcpy(&r.data, p, size);
    return r;
  }

  std::uint64_t line_rw(std::size_t i, unsigned off, AccessKind kind, std::uint64_t wdata, unsigned size) {
    std::uint8_t* p = &data_[i * geo_.line_bytes + off];
    std::uint64_t v = 0;
    if (kind == AccessKind::write) {
      std::memcpy(p, &wdata, size);
      dirty_[i] = 1;
    } else {
      std::memcpy(&v, p, size);
    }
    return v;
  }

  void write_back(BackingMemory& mem, unsigned set, unsigned way) {
    const auto i = idx(set, way);
    const PhysAddr line_addr = (tags_[i] * geo_.sets + set) * geo_.line_bytes;
    mem.write(line_addr, std::span<const std::uint8_t>(&data_[i * geo_.line_bytes], geo_.line_bytes));
    ++stats_.writebacks;
  }

  void zero_way(unsigned way) {
    for (unsigned s = 0; s < geo_.sets; ++s)
      std::memset(&data_[idx(s, way) * geo_.line_bytes], 0, geo_.line_bytes);
  }

  CacheGeometry geo_;
  CacheTiming timing_;
  PhysAddr spm_base_;
  std::vector<std::uint64_t> tags_;
  std::vector<std::uint8_t> valid_;
  std::vector<std::uint8_t> dirty_;
  std::vector<std::uint8_t> data_;
  std::vector<WayMode> modes_;
  std::vector<PlruTree> trees_;
  CacheStats stats_;
  mutable std::vector<std::uint8_t> way_scratch_;
};

}  // namespace vmrt
