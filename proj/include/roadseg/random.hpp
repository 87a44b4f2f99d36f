#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace roadseg {

// std::mt19937_64 output is fixed by the standard, but the standard
// distributions and std::shuffle are not. These helpers only consume raw
// engine output so sequences are identical on every platform.

// Uniform integer in [0, bound) by rejection sampling. bound must be > 0.
inline std::uint64_t uniform_below(std::mt19937_64& engine, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t draw = engine();
  while (draw >= limit) draw = engine();
  return draw % bound;
}

inline int uniform_int(std::mt19937_64& engine, int lo, int hi) {
  return lo + static_cast<int>(uniform_below(engine, static_cast<std::uint64_t>(hi - lo) + 1));
}

// Uniform double in [0, 1) built from the top 53 bits.
inline double uniform_unit(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

inline double uniform_real(std::mt19937_64& engine, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(engine);
}

// Fisher-Yates.
template <typename T>
void deterministic_shuffle(std::span<T> items, std::mt19937_64& engine) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(engine, i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace roadseg
