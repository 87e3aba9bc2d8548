#pragma once

// Deterministic random streams.  A base seed is expanded through splitmix64
// into independent substreams (latents, network init, batching, ...) so that
// regenerating one part of a pipeline never perturbs the others.

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace mvlat {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        // xoshiro-style state fill from splitmix64; never all-zero.
        std::uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    // Substream derivation: hash (seed, stream_id) into a fresh generator.
    static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
        std::uint64_t s = seed;
        std::uint64_t mixed = splitmix64(s) ^ (0x632be59bd9b4e019ULL * (stream_id + 1));
        return Rng(mixed);
    }

    std::uint64_t next_u64() {
        // xoshiro256** step.
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

    // Uniform on the open interval (0,1); never returns an endpoint, which
    // keeps log/atanh style transforms finite.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Zero-mean Laplace via inverse CDF.
    double laplace(double scale) {
        const double u = uniform() - 0.5;
        const double mag = std::log1p(-2.0 * std::abs(u));
        return (u >= 0.0 ? -scale : scale) * mag;
    }

    // Unbiased integer in [0, n) by rejection on a power-of-two mask.
    std::size_t below(std::size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        std::uint64_t mask = n - 1;
        mask |= mask >> 1; mask |= mask >> 2; mask |= mask >> 4;
        mask |= mask >> 8; mask |= mask >> 16; mask |= mask >> 32;
        while (true) {
            const std::uint64_t v = next_u64() & mask;
            if (v < n) return static_cast<std::size_t>(v);
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

    // k distinct indices from [0, n), in random order (partial Fisher-Yates).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        if (k > n)
            throw std::invalid_argument("Rng::sample_without_replacement: k > n");
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        for (std::size_t i = 0; i < k; ++i)
            std::swap(pool[i], pool[i + below(n - i)]);
        pool.resize(k);
        return pool;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Fixed substream ids used across the library.  Keeping them in one place
// documents which parts of a run draw from which stream.
namespace stream_id {
inline constexpr std::uint64_t latents_z = 1;
inline constexpr std::uint64_t latents_c1 = 2;
inline constexpr std::uint64_t latents_c2 = 3;
inline constexpr std::uint64_t mixer1 = 4;
inline constexpr std::uint64_t mixer2 = 5;
inline constexpr std::uint64_t model_init = 6;
inline constexpr std::uint64_t trainer = 7;
inline constexpr std::uint64_t eval = 8;
} // namespace stream_id

} // namespace mvlat
