#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Dense>

#include "bpskit/common.hpp"

namespace bpskit {

// Splittable stream generator: xoshiro256++ with per-stream state derived from
// (master seed, stream id) through SplitMix64. Stream c of a chain ensemble is
// RngStream(seed, c); the sequence depends only on that pair, never on thread
// scheduling, which is what the reproducibility contract needs.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) {
        std::uint64_t sm = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        for (auto& word : state_) {
            word = splitmix64(sm);
        }
        // xoshiro state must not be all zero; splitmix64 output never is for all four words.
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Unit-rate exponential.
    double exponential() { return -std::log1p(-uniform01()); }

    // Standard normal, Box-Muller (second draw cached).
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(phi);
        has_cached_ = true;
        return r * std::cos(phi);
    }

    // Uniform draw from S^{d-1}; |result| = 1 up to floating-point rounding.
    Eigen::VectorXd unit_sphere(int d) {
        if (d < 2) throw ConfigError("unit_sphere: requires d >= 2");
        Eigen::VectorXd v(d);
        double norm = 0.0;
        do {
            for (int i = 0; i < d; ++i) v[i] = normal();
            norm = v.norm();
        } while (norm < 1e-150);
        return v / norm;
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix64(std::uint64_t& s) {
        std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_[4];
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace bpskit
