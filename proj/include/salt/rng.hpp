#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace salt {

// Deterministic random stream. All distributions are derived from raw
// mt19937_64 words with fixed arithmetic, so sequences are identical on
// every platform (std::uniform_real_distribution and friends are
// implementation-defined and must not be used anywhere in the library).
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    uint32_t next_u32() { return static_cast<uint32_t>(gen_() >> 32); }

    // [0, 1), 53-bit resolution
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

    // keep-decision for a Bernoulli(1-p) mask element; exact at p=0 and p=1
    bool keep(double p) { return !(uniform01() < p); }

    // standard normal via Box-Muller (cached spare kept in-stream)
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // integer in [0, n)
    uint64_t below(uint64_t n) { return n == 0 ? 0 : gen_() % n; }

    // Fisher-Yates permutation of 0..n-1
    std::vector<int64_t> permutation(int64_t n) {
        std::vector<int64_t> idx(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        for (int64_t i = n - 1; i > 0; --i) {
            const auto j = static_cast<int64_t>(below(static_cast<uint64_t>(i + 1)));
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        }
        return idx;
    }

    // derive an independent child stream (for per-link / per-trial use)
    static uint64_t derive(uint64_t seed, uint64_t salt_word) {
        uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt_word + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace salt
