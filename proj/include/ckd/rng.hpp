#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace ckd {

// Counter-based deterministic RNG. Streams are keyed by (seed, label),
// so independent consumers (per-tensor init, per-epoch shuffles) never
// interleave. Hand-rolled so results are identical across platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(splitmix(seed + 0x9e3779b97f4a7c15ull)) {}

    Rng(std::uint64_t seed, const std::string &label) {
        std::uint64_t h = 1469598103934665603ull;  // FNV-1a
        for (unsigned char c : label) {
            h ^= c;
            h *= 1099511628211ull;
        }
        state_ = splitmix(seed ^ h);
        next_u64();
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return splitmix(state_);
    }

    // Uniform in (0, 1).
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; one value per call, cache discarded for simplicity.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * M_PI * u2);
    }

    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // Fisher-Yates permutation of [0, n).
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

  private:
    static std::uint64_t splitmix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
};

}  // namespace ckd
