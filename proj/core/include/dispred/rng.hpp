#ifndef DISPRED_RNG_HPP
#define DISPRED_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "dispred/error.hpp"

namespace dispred {

// Seeded random stream: xorshift64* over a splitmix64-mixed seed, with all
// sampling algorithms implemented here so that draw sequences are a fixed
// function of (seed, stream id). Every stochastic operation in the library
// takes one of these explicitly; substream() derives independent children by
// counter so unrelated pipeline stages never share a sequence.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
        : origin_(mix(mix(seed) + 0x9e3779b97f4a7c15ull * (stream + 1))) {
        state_ = origin_ ? origin_ : 0x853c49e6748fea9bull;
    }

    // Counter-derived child; independent of draws already made on the parent.
    RngStream substream(std::uint64_t stream) const {
        return RngStream(raw_tag{}, mix(origin_ + 0x9e3779b97f4a7c15ull * (stream + 1)));
    }

    std::uint64_t next_u64() {
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dull;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) via rejection.
    std::uint64_t bounded(std::uint64_t n) {
        if (n == 0) throw ParameterError("bounded: n must be positive");
        std::uint64_t threshold = (~n + 1) % n; // 2^64 mod n
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal, Marsaglia polar method (second draw cached).
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double f = std::sqrt(-2.0 * std::log(s) / s);
        cached_ = v * f;
        have_cached_ = true;
        return u * f;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Binomial(2, p): the dosage sampler.
    int binomial2(double p) { return (bernoulli(p) ? 1 : 0) + (bernoulli(p) ? 1 : 0); }

    // Gamma(shape, 1), Marsaglia-Tsang; shape < 1 via the shape+1 boost.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw ParameterError("gamma: shape must be positive");
        if (shape < 1.0) {
            double u = uniform();
            while (u == 0.0) u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double beta(double a, double b) {
        double x = gamma(a);
        double y = gamma(b);
        double s = x + y;
        if (s <= 0.0) return 0.5; // both underflowed; degenerate but defined
        return x / s;
    }

    std::vector<double> dirichlet(const std::vector<double>& alpha) {
        std::vector<double> g(alpha.size());
        double s = 0.0;
        for (std::size_t k = 0; k < alpha.size(); ++k) {
            g[k] = gamma(alpha[k]);
            s += g[k];
        }
        if (s <= 0.0) {
            // all gammas underflowed: put the mass on the largest concentration
            std::size_t best = 0;
            for (std::size_t k = 1; k < alpha.size(); ++k)
                if (alpha[k] > alpha[best]) best = k;
            std::fill(g.begin(), g.end(), 0.0);
            g[best] = 1.0;
            return g;
        }
        for (double& x : g) x /= s;
        return g;
    }

    // Fisher-Yates.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[static_cast<std::size_t>(bounded(i))]);
    }

private:
    struct raw_tag {};
    RngStream(raw_tag, std::uint64_t origin) : origin_(origin) {
        state_ = origin_ ? origin_ : 0x853c49e6748fea9bull;
    }

    static std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t origin_; // construction-time identity, used by substream()
    std::uint64_t state_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

} // namespace dispred

#endif
