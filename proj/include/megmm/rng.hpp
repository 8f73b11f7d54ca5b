// Seeded RNG with platform-independent transforms.
//
// std::mt19937_64's raw output is fully specified by the standard, but the
// <random> distributions are not, so uniform/normal/bounded draws are
// implemented here directly. Identical seeds give identical streams on any
// platform and at any worker count.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace megmm {

// splitmix64 step; used to derive independent per-replicate seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// seed_b = hash(base_seed, b): replicate streams are independent of worker
// scheduling, so parallel and serial runs produce identical draws.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream + 0x1d8af066a9ef6ULL));
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t raw() { return gen_(); }

    // uniform on [0,1) with 53-bit resolution
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller (two uniforms per draw, no cache)
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // unbiased draw from {0, ..., n-1} (Lemire's bounded reduction)
    std::size_t below(std::size_t n) {
        auto bound = static_cast<std::uint64_t>(n);
        unsigned __int128 m =
            static_cast<unsigned __int128>(gen_()) * bound;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < bound) {
            const std::uint64_t threshold = (-bound) % bound;
            while (lo < threshold) {
                m = static_cast<unsigned __int128>(gen_()) * bound;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::size_t>(m >> 64);
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace megmm
