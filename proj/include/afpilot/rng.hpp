#pragma once

#include <cstdint>
#include <random>

namespace afpilot {

/// SplitMix64 finalizer; the mixing step of every seed derivation.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based stream split: child = splitmix64(parent ^ splitmix64(counter)).
/// A slot seed depends only on (master, cell, slot index), never on which
/// worker simulated it.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t counter) {
  return splitmix64(parent ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

}  // namespace afpilot
