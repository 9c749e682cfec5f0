#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "dassim/numerics/covariance.hpp"

namespace dassim {

// xoshiro256** seeded through splitmix64. Normal draws use the Box-Muller
// transform so that a seed reproduces the same stream on any platform with
// IEEE doubles (std::normal_distribution is implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed) {
        std::uint64_t x = seed;
        for (auto& s : state_) s = splitmix64(x);
    }

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept {
        // Lemire-free simple rejection keeps the stream layout obvious.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do { v = next_u64(); } while (v >= limit);
        return v % n;
    }

    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    // Independent child stream, e.g. one per ensemble member.
    Rng fork(std::uint64_t index) const noexcept { return Rng(seed_ ^ (0x9E3779B97F4A7C15ULL * (index + 1))); }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
    static std::uint64_t splitmix64(std::uint64_t& x) noexcept {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// n draws from N(mean, cov), one per row. A zero covariance yields n copies
// of the mean without consuming randomness.
inline Matrix sample_gaussian(std::span<const double> mean, const CovarianceMatrix& cov, std::size_t n, Rng& rng) {
    detail::require_dims(mean.size() == cov.dim(), "sample_gaussian: mean length " + std::to_string(mean.size()) +
                                                       " vs covariance dim " + std::to_string(cov.dim()));
    detail::require_dims(n >= 1, "sample_gaussian: n must be at least 1");
    const std::size_t d = mean.size();
    Matrix out(n, d);
    if (cov.is_zero()) {
        for (std::size_t i = 0; i < n; ++i) out.set_row(i, mean);
        return out;
    }
    const Matrix& l = cov.factor();
    Vector z(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : z) v = rng.normal();
        for (std::size_t r = 0; r < d; ++r) {
            double s = mean[r];
            for (std::size_t c = 0; c <= r; ++c) s += l(r, c) * z[c];
            out(i, r) = s;
        }
    }
    return out;
}

}  // namespace dassim
