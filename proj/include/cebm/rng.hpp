#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cebm {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic stream of uniforms/normals. mt19937_64 is fully specified by
// the standard; the normal transform is our own Box-Muller so that draws are
// identical across platforms and standard library implementations.
class Rng {
 public:
    explicit Rng(std::uint64_t seed) : root_(splitmix64(seed)), engine_(splitmix64(seed)) {}

    // Derive an independent stream, e.g. one per chain or per batch item.
    // Depends only on the constructor seed, not on draws made so far.
    Rng split(std::uint64_t index) const {
        Rng r(0);
        r.root_ = splitmix64(root_ ^ splitmix64(index + 0x51ed2701ULL));
        r.engine_.seed(r.root_);
        return r;
    }

    // Uniform on [0, 1).
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1].
    double uniform_open0() { return 1.0 - uniform(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t next_u64() { return engine_(); }

    std::uint64_t uniform_index(std::uint64_t n) { return engine_() % n; }

    double normal() {
        double u1 = uniform_open0();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
    std::uint64_t root_;
    std::mt19937_64 engine_;
};

}  // namespace cebm
