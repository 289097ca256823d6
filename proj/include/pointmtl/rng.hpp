#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace pointmtl {

// Counter-based splitmix64 stream. Splitting derives statistically independent
// child streams from (state, key), so per-cloud streams drawn in parallel match
// the serial order exactly. The full state is a single u64, which keeps
// checkpointed rng positions trivial to persist.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Child stream keyed by (current seed, key). Does not advance this stream.
    Rng split(uint64_t key) const {
        uint64_t z = state_ ^ (0xD2B74407B1CE6E93ull + key * 0xCA5A826395121157ull);
        z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDull;
        z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ull;
        return Rng(z ^ (z >> 33));
    }

    Rng split2(uint64_t a, uint64_t b) const { return split(a).split(b); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    uint64_t uniform_index(uint64_t n) {
        // Rejection sampling to avoid modulo bias.
        uint64_t threshold = (~n + 1) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller. Draws two uniforms per call.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        // Guard against log(0).
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

  private:
    uint64_t state_;
};

}  // namespace pointmtl
