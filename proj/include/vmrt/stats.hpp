#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "vmrt/common.hpp"

namespace vmrt {

// Descriptive statistics over per-iteration cycle counts. Standard
// deviation uses the population formula (divide by n); quartiles use
// linear interpolation between order statistics.
struct RunStats {
  std::vector<Cycles> cycles;
  double mean = 0;
  double stddev = 0;
  Cycles min = 0;
  Cycles max = 0;
  double q1 = 0;
  double median = 0;
  double q3 = 0;
  std::uint64_t tlb_misses = 0;
  std::uint64_t cache_misses = 0;
};

inline double quantile_sorted(const std::vector<Cycles>& sorted, double q) {
  if (sorted.empty()) return 0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return static_cast<double>(sorted[lo]) + frac * (static_cast<double>(sorted[hi]) - static_cast<double>(sorted[lo]));
}

inline RunStats compute_stats(std::vector<Cycles> cycles, std::uint64_t tlb_misses = 0, std::uint64_t cache_misses = 0) {
  RunStats s;
  s.tlb_misses = tlb_misses;
  s.cache_misses = cache_misses;
  s.cycles = std::move(cycles);
  if (s.cycles.empty()) return s;
  const double n = static_cast<double>(s.cycles.size());
  double sum = 0;
  for (auto c : s.cycles) sum += static_cast<double>(c);
  s.mean = sum / n;
  double ss = 0;
  for (auto c : s.cycles) ss += (static_cast<double>(c) - s.mean) * (static_cast<double>(c) - s.mean);
  s.stddev = std::sqrt(ss / n);
  std::vector<Cycles> sorted = s.cycles;
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  s.q1 = quantile_sorted(sorted, 0.25);
  s.median = quantile_sorted(sorted, 0.5);
  s.q3 = quantile_sorted(sorted, 0.75);
  return s;
}

// (subject - baseline) / baseline * 100; nullopt when the baseline is zero.
inline std::optional<double> delta_pct(double baseline, double subject) {
  if (baseline == 0) return std::nullopt;
  return (subject - baseline) / baseline * 100.0;
}

}  // namespace vmrt
