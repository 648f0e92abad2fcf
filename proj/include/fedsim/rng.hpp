#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fedsim {

// Deterministic RNG utilities. Distribution sampling is implemented here
// instead of using std:: distributions, whose output is implementation
// defined; experiment outputs must reproduce bit-exactly from a seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t bits() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() { return (eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n >= 1. Rejection keeps the draw unbiased.
    int uniform_int(int n) {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return static_cast<int>(x % bound);
    }

    // Standard normal via Box-Muller (cacheless variant).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
    double gamma(double shape) {
        if (shape < 1.0) {
            double u = 1.0 - uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = 1.0 - uniform();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
        }
    }

    // Symmetric Dirichlet(alpha) over k categories.
    std::vector<double> dirichlet(double alpha, int k) {
        std::vector<double> p(k);
        double sum = 0.0;
        for (int i = 0; i < k; ++i) {
            p[i] = gamma(alpha);
            sum += p[i];
        }
        for (int i = 0; i < k; ++i) p[i] /= sum;
        return p;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[i], v[j]);
        }
    }

    // k distinct values from [0, n), in draw order.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> pool(n);
        for (int i = 0; i < n; ++i) pool[i] = i;
        std::vector<int> out;
        out.reserve(k);
        for (int i = 0; i < k; ++i) {
            int j = i + uniform_int(n - i);
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
        return out;
    }

private:
    std::mt19937_64 eng_;
};

// Stateless mixing for deriving independent stream seeds, e.g. per
// (experiment, round, agent). splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = mix64(seed ^ 0x5851f42d4c957f2dULL);
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    h = mix64(h ^ c);
    return h;
}

}  // namespace fedsim
