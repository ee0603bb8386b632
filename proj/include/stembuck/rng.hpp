#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace stembuck {

namespace detail {

// splitmix64 finalizer; decorrelates sequential or structured seed inputs.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Deterministic RNG. All randomness in the project flows from one root seed
// through named substreams so that individual components are reproducible in
// isolation (e.g. the data split does not depend on how many stems were
// sampled before it).
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller without state; one draw consumes two uniforms.
    double normal() {
        const double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    int uniform_int(int n) {  // in [0, n)
        return static_cast<int>(gen_() % static_cast<uint64_t>(n));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates; spelled out so the permutation is stable across
        // standard library versions.
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = gen_() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

// Named substream derivation: hash the stream name, then fold in indices.
inline uint64_t substream_seed(uint64_t root, std::string_view name) {
    return detail::mix64(root ^ detail::fnv1a(name));
}

inline uint64_t substream_seed(uint64_t root, std::string_view name, uint64_t index) {
    return detail::mix64(substream_seed(root, name) ^ detail::mix64(index));
}

inline uint64_t substream_seed(uint64_t root, std::string_view name, uint64_t i, uint64_t j) {
    return detail::mix64(substream_seed(root, name, i) ^ detail::mix64(detail::mix64(j) + 0x517cc1b727220a95ULL));
}

}  // namespace stembuck
