#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "imuda/error.hpp"
#include "imuda/matrix.hpp"

namespace imuda {

// std::mt19937_64 output is fully specified by the standard, so everything
// below is bit-identical across platforms as long as we avoid the standard
// library's distribution classes (those are implementation-defined).
namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Derives an independent child seed from a parent seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return detail::splitmix64(seed ^ detail::splitmix64(stream));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
    return derive_seed(seed, detail::fnv1a64(stream));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                                 std::uint64_t index) {
    return derive_seed(derive_seed(seed, stream), index);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 bits of precision.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; caches the second variate.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Uniform integer in [0, n). Unbiased via rejection on the top range.
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw ValueError("uniform_index: n must be positive");
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return static_cast<std::size_t>(x % bound);
    }

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    Rng derive(std::string_view stream) const { return Rng(derive_seed(seed_, stream)); }
    Rng derive(std::string_view stream, std::uint64_t index) const {
        return Rng(derive_seed(seed_, stream, index));
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Uniform draw from the unit sphere in R^dim (gaussian direction, normalized).
inline std::vector<double> sample_unit_sphere(Rng& rng, std::size_t dim) {
    if (dim == 0) throw DimensionError("sample_unit_sphere: dim must be positive");
    std::vector<double> v(dim);
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            v[i] = rng.gaussian();
            norm2 += v[i] * v[i];
        }
    } while (norm2 == 0.0);
    const double norm = std::sqrt(norm2);
    for (double& x : v) x /= norm;
    return v;
}

// L rows, each a unit vector in R^dim.
inline Matrix sample_projections(Rng& rng, std::size_t count, std::size_t dim) {
    Matrix p(count, dim);
    for (std::size_t l = 0; l < count; ++l) {
        const auto v = sample_unit_sphere(rng, dim);
        std::copy(v.begin(), v.end(), p.row(l).begin());
    }
    return p;
}

}  // namespace imuda
