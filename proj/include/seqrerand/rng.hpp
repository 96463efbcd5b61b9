#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace seqrerand {

using Rng = std::mt19937_64;

// splitmix64 step; used to decorrelate per-replicate seeds
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// independent, reproducible stream for replicate r of a run seeded with master_seed
inline Rng replicate_rng(std::uint64_t master_seed, std::uint64_t replicate) {
    std::uint64_t s = master_seed;
    std::uint64_t a = splitmix64(s);
    s ^= replicate * 0xda942042e4dd58b5ULL;
    std::uint64_t b = splitmix64(s);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(replicate),
                      static_cast<std::uint32_t>(replicate >> 32)};
    return Rng(seq);
}

// uniform on [0,1) with 53 random bits
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// uniform on (0,1) — safe as a log() argument
inline double uniform01_open(Rng& rng) {
    for (;;) {
        double u = uniform01(rng);
        if (u > 0.0) return u;
    }
}

// one standard normal draw (Box–Muller; the sine partner is discarded,
// which keeps the sampler stateless -- datagen batches draws where it matters)
inline double draw_normal(Rng& rng) {
    double u1 = uniform01_open(rng);
    double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

// both Box–Muller outputs, for bulk generation
inline void draw_normal_pair(Rng& rng, double& z1, double& z2) {
    double u1 = uniform01_open(rng);
    double u2 = uniform01(rng);
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 6.283185307179586477 * u2;
    z1 = r * std::cos(t);
    z2 = r * std::sin(t);
}

}  // namespace seqrerand
