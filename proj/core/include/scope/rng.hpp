#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace scope {

// 64-bit FNV-1a. Used for config/weight provenance hashes and for keying
// parameter initialization streams by name.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}
inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based generator: the stream is a pure function of its key, so
// draws are reproducible regardless of evaluation order across agents,
// frames and sweep points.
class Rng {
  public:
    explicit Rng(std::uint64_t key) : state_(mix_key(key)) {}
    Rng(std::uint64_t seed, std::uint64_t a) : Rng(combine(seed, a)) {}
    Rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) : Rng(combine(combine(seed, a), b)) {}
    Rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c)
        : Rng(combine(combine(combine(seed, a), b), c)) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1) with 53 mantissa bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller; two uniforms per draw, no cache.
    double normal() {
        double u1 = uniform01(), u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    static std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
        std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
        return splitmix64(s);
    }

  private:
    static std::uint64_t mix_key(std::uint64_t key) {
        std::uint64_t s = key;
        return splitmix64(s);
    }
    std::uint64_t state_;
};

}  // namespace scope
