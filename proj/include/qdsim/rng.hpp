#pragma once

// Counter-based random number generation (Philox4x32-10, Salmon et al. SC'11).
//
// Every stochastic stage of the pipeline draws from an RngStream keyed by
// (seed, stage salt, purpose, block index). Streams attached to a fixed block
// produce the same values no matter how blocks are distributed over threads,
// which is what makes simulation output bit-identical for any thread count.

#include <cmath>
#include <cstdint>
#include <limits>

#include "qdsim/units.hpp"

namespace qdsim {

namespace detail {

inline void philox_mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
    const uint64_t p = static_cast<uint64_t>(a) * b;
    hi = static_cast<uint32_t>(p >> 32);
    lo = static_cast<uint32_t>(p);
}

inline void philox4x32_10(const uint32_t ctr_in[4], const uint32_t key_in[2], uint32_t out[4]) {
    constexpr uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    uint32_t c0 = ctr_in[0], c1 = ctr_in[1], c2 = ctr_in[2], c3 = ctr_in[3];
    uint32_t k0 = key_in[0], k1 = key_in[1];
    for (int round = 0; round < 10; ++round) {
        uint32_t hi0, lo0, hi1, lo1;
        philox_mulhilo(kM0, c0, hi0, lo0);
        philox_mulhilo(kM1, c2, hi1, lo1);
        const uint32_t n0 = hi1 ^ c1 ^ k0;
        const uint32_t n1 = lo1;
        const uint32_t n2 = hi0 ^ c3 ^ k1;
        const uint32_t n3 = lo0;
        c0 = n0; c1 = n1; c2 = n2; c3 = n3;
        k0 += kW0; k1 += kW1;
    }
    out[0] = c0; out[1] = c1; out[2] = c2; out[3] = c3;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace detail

// Stage identifiers; each (stage, block) pair is an independent stream.
enum class RngPurpose : uint32_t {
    Emission = 1,
    SpectralDiffusion = 2,
    Blinking = 3,
    ConvertThinning = 4,
    ConvertNoise = 5,
    SeedModeWeights = 6,
    HbtRouting = 7,
    HomRouting = 8,
    HomPairing = 9,
    DetectorA = 10,
    DetectorB = 11,
    DarkCountsA = 12,
    DarkCountsB = 13,
    CoherentSource = 14,
};

// Mixes a per-run seed with a stage-specific salt into a 64-bit Philox key.
inline uint64_t derive_key(uint64_t seed, uint64_t salt) {
    return detail::splitmix64(detail::splitmix64(seed) ^ detail::splitmix64(~salt));
}

// Hash for string salts (FNV-1a 64).
inline uint64_t salt_of(const char* tag) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (const char* p = tag; *p; ++p) h = (h ^ static_cast<uint8_t>(*p)) * 0x100000001B3ull;
    return h;
}

class RngStream {
public:
    RngStream(uint64_t key64, RngPurpose purpose, uint64_t block) {
        key_[0] = static_cast<uint32_t>(key64);
        key_[1] = static_cast<uint32_t>(key64 >> 32);
        c2_ = static_cast<uint32_t>(block);
        c3_ = (static_cast<uint32_t>(purpose) << 24) | (static_cast<uint32_t>(block >> 32) & 0x00FFFFFFu);
    }

    uint32_t next_u32() {
        if (pos_ == 4) refill();
        return buf_[pos_++];
    }

    uint64_t next_u64() {
        const uint64_t lo = next_u32();
        const uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller (cosine branch only, so one normal
    // consumes exactly two uniforms).
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(kTwoPi * u2);
    }

    double exponential(double mean) { return -mean * std::log1p(-uniform()); }

    // Marsaglia-Tsang gamma sampler; shape boost for alpha < 1.
    double gamma(double alpha) {
        if (alpha < 1.0) {
            const double u = uniform();
            return gamma(alpha + 1.0) * std::pow(u > 0.0 ? u : std::numeric_limits<double>::min(), 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

private:
    void refill() {
        const uint32_t ctr[4] = {static_cast<uint32_t>(draw_), static_cast<uint32_t>(draw_ >> 32), c2_, c3_};
        detail::philox4x32_10(ctr, key_, buf_);
        ++draw_;
        pos_ = 0;
    }

    uint32_t key_[2];
    uint32_t c2_, c3_;
    uint64_t draw_ = 0;
    uint32_t buf_[4] = {0, 0, 0, 0};
    int pos_ = 4;
};

}  // namespace qdsim
