#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace advsteg {

using Rng = std::mt19937_64;

// Distribution helpers built straight on the engine output so that seeded
// streams are identical across standard library implementations.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

double gaussian(Rng& rng);

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

// Derive an independent stream seed from a base seed and a tag (splitmix64).
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag);

// Number of worker threads used by parallel_for; 0 means hardware concurrency.
void set_jobs(unsigned jobs);
unsigned jobs();

// Runs fn(i) for i in [0, count). Each index is handled by exactly one thread,
// so results written to per-index slots are deterministic.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::string to_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> from_hex(const std::string& hex);

}  // namespace advsteg
