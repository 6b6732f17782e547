#pragma once

// Deterministic random streams. Substreams are derived by hashing a root
// seed with string tags (splitmix64 over the tag bytes), so per-path
// generation is order-independent and reproducible bit-for-bit.
//
// Gaussian draws use a hand-rolled Box-Muller over the raw engine because
// std::normal_distribution's algorithm is implementation-defined and would
// break cross-toolchain determinism.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace cloudbench {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stable stream id from a root seed and a tag string.
inline std::uint64_t derive_seed(std::uint64_t root, const std::string& tag) {
    std::uint64_t h = splitmix64(root ^ 0x5851f42d4c957f2dULL);
    for (unsigned char c : tag) h = splitmix64(h ^ c);
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    Rng(std::uint64_t root, const std::string& tag) : eng_(derive_seed(root, tag)) {}

    // Uniform in (0,1); never returns 0 or 1 exactly.
    double uniform() {
        std::uint64_t r = eng_();
        return (static_cast<double>(r >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Modulo bias is < 2^-53 for any n this project uses.
        return eng_() % n;
    }

    int poisson(double lambda) {
        // Knuth multiplication method; lambdas here are small (< 100).
        double l = std::exp(-lambda);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > l);
        return k - 1;
    }

    // Geometric with success probability p: count of trials up to and
    // including the first success, support {1, 2, ...}, mean 1/p.
    int geometric(double p) {
        double u = uniform();
        return 1 + static_cast<int>(std::floor(std::log(u) / std::log(1.0 - p)));
    }

    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace cloudbench
