#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace primkit::rng {

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// splitmix64 finalizer; good avalanche for seed derivation.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Namespaced seed streams: toggling one consumer (shuffle, dropout, split,
// init, ...) must not perturb the others.
inline uint64_t derive(uint64_t seed, std::string_view ns) {
    return mix64(seed ^ mix64(fnv1a64(ns)));
}

inline uint64_t derive(uint64_t seed, std::string_view ns, uint64_t index) {
    return mix64(derive(seed, ns) ^ mix64(index + 0x51ed2701ull));
}

// mt19937_64 with hand-rolled draw helpers. The standard distributions are
// implementation-defined, which would break the bit-reproducibility contract
// across standard libraries.
class Stream {
public:
    explicit Stream(uint64_t seed) : eng_(seed) {}

    uint64_t bits() { return eng_(); }

    // [0, 1)
    double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    // inclusive range, rejection sampled (no modulo bias)
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t span = uint64_t(hi - lo) + 1;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t r = eng_();
        while (r >= limit) r = eng_();
        return lo + int64_t(r % span);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[size_t(uniform_int(0, int64_t(i) - 1))]);
        }
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace primkit::rng
