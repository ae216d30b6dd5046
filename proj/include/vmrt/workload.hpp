#pragma once

// Synthetic access-trace workloads. A phase is a set of streams whose
// accesses are interleaved round-robin; each stream walks a list of pages
// in forward, reverse or shuffled order.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "vmrt/common.hpp"
#include "vmrt/pte.hpp"

namespace vmrt {

// random: a fresh permutation per repeat; uniform: draws with replacement.
enum class Order : std::uint8_t { forward, reverse, random, uniform };

inline const char* to_string(Order o) {
  switch (o) {
    case Order::forward: return "forward";
    case Order::reverse: return "reverse";
    case Order::random: return "random";
    case Order::uniform: return "uniform";
  }
  return "?";
}

struct Access {
  VirtAddr va = 0;
  AccessKind kind = AccessKind::read;
  Cycles compute = 0;  // charged before the access

  friend bool operator==(const Access&, const Access&) = default;
};

struct AccessStream {
  std::vector<VirtAddr> pages;  // page base addresses, in logical order
  AccessKind kind = AccessKind::read;
  Order order = Order::forward;
  std::uint64_t offset = 0;  // first byte offset inside each page
  std::uint64_t stride = 8;  // between accesses within a page
  unsigned accesses_per_page = 1;
  std::uint64_t skew = 0;  // extra offset per logical page index, spreads cache sets
  unsigned repeats = 1;
  Cycles compute_cycles = 0;
};

struct Phase {
  std::vector<AccessStream> streams;
  bool empty() const { return streams.empty(); }
};

struct Workload {
  Phase prime;    // untimed warm-up of the critical task
  Phase measure;  // timed phase
  Phase loop;     // unbounded background loop (interference VMs)
};

inline std::vector<Access> expand(const AccessStream& s, std::uint64_t seed) {
  std::vector<Access> out;
  std::vector<std::size_t> order(s.pages.size());
  for (unsigned rep = 0; rep < s.repeats; ++rep) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (s.order == Order::reverse) std::reverse(order.begin(), order.end());
    if (s.order == Order::random) {
      std::mt19937_64 rng(derive_seed(seed, rep));
      std::shuffle(order.begin(), order.end(), rng);
    }
    if (s.order == Order::uniform && !order.empty()) {
      std::mt19937_64 rng(derive_seed(seed, rep));
      std::uniform_int_distribution<std::size_t> pick(0, order.size() - 1);
      for (auto& p : order) p = pick(rng);
    }
    for (std::size_t p : order) {
      for (unsigned k = 0; k < s.accesses_per_page; ++k) {
        const std::uint64_t off = (s.offset + p * s.skew + std::uint64_t{k} * s.stride) % kPageBytes;
        out.push_back({s.pages[p] + align_down(off, 8), s.kind, s.compute_cycles});
      }
    }
  }
  return out;
}

// Round-robin interleaving of all streams of a phase.
inline std::vector<Access> expand(const Phase& phase, std::uint64_t seed) {
  std::vector<std::vector<Access>> per;
  per.reserve(phase.streams.size());
  for (std::size_t i = 0; i < phase.streams.size(); ++i) per.push_back(expand(phase.streams[i], derive_seed(seed, i)));
  std::vector<Access> out;
  std::size_t longest = 0;
  for (const auto& v : per) longest = std::max(longest, v.size());
  for (std::size_t k = 0; k < longest; ++k)
    for (const auto& v : per)
      if (k < v.size()) out.push_back(v[k]);
  return out;
}

}  // namespace vmrt
