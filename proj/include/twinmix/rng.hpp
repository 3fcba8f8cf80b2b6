#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <utility>

namespace twinmix {

// splitmix64 finalizer; used for deriving independent stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Derives a child seed from a master seed and a path of ids (cell index,
// replicate index, ...). The rule is fixed so that work items can run in
// any order, or in parallel, and still consume identical streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = mix64(master);
    for (std::uint64_t id : path) s = mix64(s ^ (id + 0xD1B54A32D192ED03ULL));
    return s;
}

// Seeded random stream. Wraps std::mt19937_64 (bit-exact across platforms)
// and pins the uniform-to-variate mappings so sequences are reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform on the open interval (0,1); 53-bit resolution, never 0 or 1.
    double uniform() {
        return (static_cast<double>(eng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double uniform(double a, double b) { return a + uniform() * (b - a); }

    bool bernoulli(double p) { return uniform() < p; }

    // Two independent standard normals via Box-Muller; consumes exactly two
    // uniform draws.
    std::pair<double, double> normal_pair() {
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        return {r * std::cos(theta), r * std::sin(theta)};
    }

    double normal() { return normal_pair().first; }

    // Uniform integer in [0, n); rejection-free modulo is fine here since n
    // is tiny relative to 2^64.
    std::uint64_t below(std::uint64_t n) { return eng_() % n; }

private:
    std::mt19937_64 eng_;
};

}  // namespace twinmix
