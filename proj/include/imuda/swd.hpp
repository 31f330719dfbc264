#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "imuda/error.hpp"
#include "imuda/matrix.hpp"
#include "imuda/rng.hpp"

namespace imuda {

// Random slicing directions, regenerable from (seed, count, dim).
struct ProjectionSet {
    Matrix directions;
    std::uint64_t seed = 0;

    static ProjectionSet draw(std::uint64_t seed, std::size_t count, std::size_t dim) {
        Rng rng(seed);
        return ProjectionSet{sample_projections(rng, count, dim), seed};
    }

    std::size_t count() const { return directions.rows(); }
    std::size_t dim() const { return directions.cols(); }
};

struct SwdResult {
    double value = 0.0;
    std::vector<double> per_projection;
    Matrix grad_a;
    Matrix grad_b;
};

// Squared-cost 1D Wasserstein distance between equal-size samples:
// sort both, average the squared differences. Terms are summed in sorted
// order so the result is exactly invariant to input permutations.
inline double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionError("wasserstein_1d: sample counts differ (" +
                             std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    if (a.empty()) throw DimensionError("wasserstein_1d: empty input");
    std::vector<double> sa(a.begin(), a.end());
    std::vector<double> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    std::vector<double> terms(sa.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
        const double d = sa[i] - sb[i];
        terms[i] = d * d;
    }
    return stable_sum(std::move(terms)) / static_cast<double>(sa.size());
}

// Test oracle: minimum mean squared cost over every permutation coupling.
// Exponential, hence the size guard.
inline double exact_wd_oracle(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionError("exact_wd_oracle: sample counts differ");
    if (a.empty()) throw DimensionError("exact_wd_oracle: empty input");
    if (a.size() > 6)
        throw ValueError("exact_wd_oracle: at most 6 points (got " +
                         std::to_string(a.size()) + ")");
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[perm[i]];
            cost += d * d;
        }
        best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / static_cast<double>(a.size());
}

// Inner products of every row with one direction.
inline std::vector<double> project(const Matrix& batch, std::span<const double> direction) {
    if (batch.cols() != direction.size())
        throw DimensionError("project: direction dim " + std::to_string(direction.size()) +
                             " does not match batch cols " + std::to_string(batch.cols()));
    std::vector<double> out(batch.rows());
    for (std::size_t i = 0; i < batch.rows(); ++i) {
        double s = 0.0;
        const auto row = batch.row(i);
        for (std::size_t j = 0; j < direction.size(); ++j) s += row[j] * direction[j];
        out[i] = s;
    }
    return out;
}

// Sliced Wasserstein distance between two equal-size batches, with the
// subgradient taken holding each slice's sort permutation fixed. Per-slice
// and across-slice reductions sum in sorted order, which makes the value
// exactly symmetric and exactly invariant to row permutations.
inline SwdResult swd(const Matrix& a, const Matrix& b, const ProjectionSet& proj) {
    if (a.rows() != b.rows())
        throw DimensionError("swd: batch sizes differ (" + std::to_string(a.rows()) +
                             " vs " + std::to_string(b.rows()) + ")");
    if (a.rows() == 0) throw DimensionError("swd: empty batches");
    if (a.cols() != b.cols())
        throw DimensionError("swd: feature dims differ (" + std::to_string(a.cols()) +
                             " vs " + std::to_string(b.cols()) + ")");
    if (proj.count() == 0) throw ValueError("swd: projection set is empty");
    if (proj.dim() != a.cols())
        throw DimensionError("swd: projection dim " + std::to_string(proj.dim()) +
                             " does not match feature dim " + std::to_string(a.cols()));

    const std::size_t m = a.rows();
    const std::size_t big_l = proj.count();
    const std::size_t f = a.cols();
    const double scale = 2.0 / (static_cast<double>(big_l) * static_cast<double>(m));

    SwdResult res;
    res.per_projection.resize(big_l);
    res.grad_a = Matrix(m, f);
    res.grad_b = Matrix(m, f);

    std::vector<double> terms(m);
    for (std::size_t l = 0; l < big_l; ++l) {
        const auto gamma = proj.directions.row(l);
        const auto pa = project(a, gamma);
        const auto pb = project(b, gamma);
        const auto s = argsort(pa);
        const auto t = argsort(pb);
        for (std::size_t i = 0; i < m; ++i) {
            const double diff = pa[s[i]] - pb[t[i]];
            terms[i] = diff * diff;
            const double g = scale * diff;
            auto ga = res.grad_a.row(s[i]);
            auto gb = res.grad_b.row(t[i]);
            for (std::size_t j = 0; j < f; ++j) {
                ga[j] += g * gamma[j];
                gb[j] -= g * gamma[j];
            }
        }
        res.per_projection[l] = stable_sum(terms) / static_cast<double>(m);
    }
    res.value = stable_sum(res.per_projection) / static_cast<double>(big_l);
    return res;
}

}  // namespace imuda
