#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace frl {

/// splitmix64 step; used to expand seeds into full generator states.
inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// One-shot mix of a 64-bit value into a well-spread seed.
inline std::uint64_t hash_u64(std::uint64_t x) {
    std::uint64_t s = x;
    return splitmix64(s);
}

/// Deterministic xoshiro256** generator with explicit distribution helpers.
///
/// All randomness in the library flows through this type so that results are
/// reproducible bit-for-bit for a given seed, independent of the standard
/// library's distribution implementations. State is four words and can be
/// saved/restored, which training checkpoints rely on.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
    }

    /// Independent stream derived from (seed, stream id). Streams with
    /// distinct ids are statistically independent for practical purposes.
    static Rng substream(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t x = seed ^ (0x6a09e667f3bcc909ULL + stream * 0x9e3779b97f4a7c15ULL);
        return Rng(splitmix64(x));
    }

    std::uint64_t next_u64() {
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

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller. No cached spare, so the generator
    /// state alone determines the stream (checkpoint-friendly).
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::array<std::uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

private:
    static std::uint64_t rotl(std::uint64_t v, int k) {
        return (v << k) | (v >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
};

}  // namespace frl
