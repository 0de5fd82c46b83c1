#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace spdperm {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Child seed from a parent seed and a path of indices. Distinct paths give
/// statistically independent streams.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                           std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632BE59BD9B4E019ull));
    return h;
}

/// Uniform integer in [0, n), n > 0, by rejection (portable across standard
/// library implementations, unlike std::uniform_int_distribution).
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
    static_assert(Rng::min() == 0 && Rng::max() == ~std::uint64_t{0});
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    std::uint64_t x;
    do {
        x = rng();
    } while (x < threshold);
    return x % n;
}

/// In-place Fisher-Yates shuffle.
template <class T>
void shuffle(std::span<T> v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace spdperm
