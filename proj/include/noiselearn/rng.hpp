#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace noiselearn {

using Rng = std::mt19937_64;

/// One round of the splitmix64 finalizer; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent sub-seed for a named stream. Streams are keyed by
/// name (and an optional index) so adding a stream never shifts the others.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

}  // namespace noiselearn
