#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

#include "promptnorm/errors.hpp"

namespace promptnorm {

/// Counter-based splittable random number generator.
///
/// Every stream is fully determined by its key; forking derives a new
/// independent key from (parent key, word). Draws inside a stream walk a
/// counter through the SplitMix64 finalizer, so identical keys produce
/// identical sequences regardless of what other streams did in between.
/// That is what makes parallel sweeps reproduce serial ones byte for byte:
/// each worker forks its own stream instead of sharing generator state.
class SplitRng {
  public:
    explicit SplitRng(std::uint64_t seed) : key_(mix(seed + kGamma)) {}

    /// Derives an independent child stream keyed by an integer word.
    [[nodiscard]] SplitRng fork(std::uint64_t word) const {
        return SplitRng(FromKey{}, mix(key_ ^ mix(word + kGamma)));
    }

    /// Derives an independent child stream keyed by a purpose tag.
    [[nodiscard]] SplitRng fork(std::string_view tag) const {
        return fork(fnv1a(tag));
    }

    std::uint64_t next_u64() {
        counter_ += kGamma;
        return mix(key_ + counter_);
    }

    /// Uniform draw in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform draw in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Standard Box-Muller transform; one deviate per uniform pair.
    double normal(double mu = 0.0, double sigma = 1.0) {
        // u1 in (0, 1] keeps the log finite.
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mu + sigma * r * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform index in [0, n).
    std::size_t below(std::size_t n) {
        if (n == 0) {
            throw ContractError("SplitRng::below requires n >= 1");
        }
        return static_cast<std::size_t>(next_u64() % n);
    }

    /// k distinct values sampled uniformly from {1, ..., n} (1-based),
    /// via a partial Fisher-Yates shuffle.
    std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t k) {
        if (k == 0 || k > n) {
            throw ContractError("sample_distinct: k must satisfy 1 <= k <= n");
        }
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) {
            pool[i] = i + 1;
        }
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + below(n - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

  private:
    struct FromKey {};
    SplitRng(FromKey, std::uint64_t key) : key_(key) {}

    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (const char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ULL;
        }
        return h;
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace promptnorm
