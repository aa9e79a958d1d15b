#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fewshot/errors.hpp"

namespace fewshot {

/// Deterministic random source. All randomness in the project flows through
/// this wrapper so that a given seed reproduces the same stream on every
/// platform. The raw engine is mt19937_64 but the mappings to doubles, ranges
/// and shuffles are implemented here rather than with std distributions,
/// whose output is implementation defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 bits of precision.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in (0, 1]. Used where a log of the draw is taken.
    double uniform_open_closed() { return 1.0 - uniform(); }

    /// Uniform double in [lo, hi).
    double uniform_in(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Uniform integer in [lo, hi], both ends inclusive. Rejection sampled
    /// so every value is exactly equally likely.
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
        if (lo > hi) fail("rng", "uniform_int: empty range");
        std::uint64_t span = hi - lo + 1;
        if (span == 0) return next_u64();  // full 64-bit range
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t draw;
        do {
            draw = next_u64();
        } while (draw >= limit);
        return lo + draw % span;
    }

    std::size_t index(std::size_t count) {
        if (count == 0) fail("rng", "index: empty range");
        return static_cast<std::size_t>(uniform_int(0, count - 1));
    }

    /// Standard normal via Box-Muller. One value per call so the draw count
    /// stays predictable.
    double normal() {
        double u1 = uniform_open_closed();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    /// k distinct indices drawn from [0, n), in draw order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        if (k > n) fail("rng", "sample_indices: k exceeds population");
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<std::size_t> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i, n - 1));
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
        return out;
    }

    /// Derived generator for a numbered sub-stream, a function of the
    /// construction seed only, never of how many draws have been made.
    /// Mixing through splitmix64 keeps sibling streams statistically
    /// independent of each other and of the parent.
    Rng child(std::uint64_t counter) const {
        std::uint64_t x = seed_ + counter * 0x9E3779B97F4A7C15ull;
        x ^= x >> 30;
        x *= 0xBF58476D1CE4E5B9ull;
        x ^= x >> 27;
        x *= 0x94D049BB133111EBull;
        x ^= x >> 31;
        return Rng(x);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace fewshot
