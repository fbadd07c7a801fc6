#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "fedspd/errors.hpp"

namespace fedspd {

// splitmix64 finalizer; used to turn structured ids into stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_role(std::string_view role) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : role) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Stable stream-seed derivation: every random decision in the simulator
// draws from a stream keyed by (global_seed, role, a, b, c). Streams are
// independent of execution order, which is what makes parallel runs and
// checkpoint resume bit-reproducible.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view role,
                                 std::uint64_t a = 0, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t h = mix64(global_seed ^ hash_role(role));
    h = mix64(h ^ mix64(a + 0x9e3779b97f4a7c15ull));
    h = mix64(h ^ mix64(b + 0x7f4a7c159e3779b9ull));
    h = mix64(h ^ mix64(c + 0x2545f4914f6cdd1dull));
    return h;
}

// mt19937_64 plus hand-rolled distributions. std:: distributions are not
// bit-portable across standard libraries; these are.
class rng_stream {
public:
    explicit rng_stream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0, n)
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw invalid_parameter("uniform_index: n must be positive");
        const std::uint64_t bound = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= bound);
        return static_cast<std::size_t>(x % n);
    }

    // standard normal via Box-Muller (deterministic given the engine)
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // index drawn from an (approximately normalized) probability row
    int categorical(std::span<const double> probs) {
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t s = 0; s < probs.size(); ++s) {
            acc += probs[s];
            if (u < acc) return static_cast<int>(s);
        }
        // fp slack: return the last index with positive mass
        for (std::size_t s = probs.size(); s-- > 0;)
            if (probs[s] > 0.0) return static_cast<int>(s);
        throw protocol_error("categorical: all-zero probability row");
    }

    // Fisher-Yates over an index vector
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fedspd
