#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace vmrt {

using Cycles = std::uint64_t;
using VirtAddr = std::uint64_t;
using PhysAddr = std::uint64_t;

inline constexpr unsigned kPageShift = 12;
inline constexpr std::uint64_t kPageBytes = std::uint64_t{1} << kPageShift;

// Raised on caller misuse: out-of-range indices, width mismatches, bad geometry.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when the modeled system is configured inconsistently (unmapped
// physical memory, lock slot exhaustion, misaligned regions ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

constexpr unsigned log2_exact(std::uint64_t v) {
  return static_cast<unsigned>(std::countr_zero(v));
}

enum class AccessKind : std::uint8_t { read, write, ifetch };

inline const char* to_string(AccessKind k) {
  switch (k) {
    case AccessKind::read: return "read";
    case AccessKind::write: return "write";
    case AccessKind::ifetch: return "ifetch";
  }
  return "?";
}

// SplitMix64 finalizer; used to derive independent per-iteration seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(mix64(master) ^ (index * 0xd1b54a32d192ed03ULL));
}

}  // namespace vmrt
