#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace pbitmc {

/// SplitMix64 step; used for seeding and key mixing.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Derive a stream key from a master seed and a tuple of subkeys.
/// Streams with distinct subkey tuples are statistically independent.
inline std::uint64_t stream_key(std::uint64_t master,
                                std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = master;
    splitmix64(h);
    for (std::uint64_t p : parts) {
        h ^= p;
        splitmix64(h);
        h ^= splitmix64(h);
    }
    return h;
}

/// xoshiro256++ by Blackman & Vigna. Fast, high quality, trivially seedable;
/// we avoid std distributions everywhere so that draws are bit-identical
/// across platforms and compilers.
class Rng {
public:
    Rng() : Rng(0) {}

    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
        if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform double in [0,1), 53 random bits.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform double in [-1,1).
    double uniform_pm1() { return 2.0 * uniform01() - 1.0; }

    /// Uniform integer in [0,n), unbiased (rejection sampling).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    /// Random spin value, -1 or +1.
    int plus_minus_one() { return (next() >> 63) ? 1 : -1; }

    /// Standard normal via Box-Muller (test oracles and bootstrap synthetics).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01(), u2 = uniform01();
        while (u1 == 0.0) u1 = uniform01();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double ang = 6.283185307179586476925286766559 * u2;
        spare_ = mag * std::sin(ang);
        have_spare_ = true;
        return mag * std::cos(ang);
    }

    /// In-place Fisher-Yates shuffle with unbiased index draws.
    template <typename T>
    void shuffle(T* data, std::size_t count) {
        for (std::size_t i = count; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            T tmp = data[i - 1];
            data[i - 1] = data[j];
            data[j] = tmp;
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace pbitmc
