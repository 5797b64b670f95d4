#pragma once

#include <cstdint>
#include <random>

namespace cma {

// Derive an independent engine for (root seed, stream index).  Replicates
// seeded this way are order-independent, so splits can run in any order or
// concurrently and still reproduce.
inline std::mt19937_64 substream(std::uint64_t root, std::uint64_t stream,
                                 std::uint64_t salt = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace cma
