#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "imuda/error.hpp"
#include "imuda/matrix.hpp"
#include "imuda/rng.hpp"

namespace imuda {

struct GmmComponent {
    double weight = 0.0;
    std::vector<double> mean;
    Matrix cov;
    Matrix chol;
};

struct GmmModel {
    std::vector<GmmComponent> components;
    double eps = 1e-4;

    std::size_t k() const { return components.size(); }
    std::size_t dim() const { return components.empty() ? 0 : components[0].mean.size(); }
};

// Closed-form MAP estimate of a class-conditional Gaussian mixture: weights
// are class fractions, means are class means, covariances are biased class
// scatters plus eps on the diagonal. Accumulations sum in sorted order, so
// permuting the input rows yields bit-identical parameters.
inline GmmModel estimate_map(const Matrix& embeddings, const Matrix& labels,
                             double eps = 1e-4, bool diagonal = false) {
    if (embeddings.rows() != labels.rows())
        throw DimensionError("estimate_map: row counts differ (" +
                             std::to_string(embeddings.rows()) + " embeddings vs " +
                             std::to_string(labels.rows()) + " labels)");
    if (embeddings.rows() == 0) throw EstimationError("estimate_map: empty input");
    if (labels.cols() == 0) throw DimensionError("estimate_map: labels have no classes");
    if (!embeddings.all_finite()) throw ValueError("estimate_map: non-finite embedding");
    if (eps <= 0.0) throw ValueError("estimate_map: eps must be positive");

    const std::size_t n = embeddings.rows();
    const std::size_t f = embeddings.cols();
    const std::size_t k = labels.cols();

    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = labels.row(i);
        double sum = 0.0;
        std::size_t hot = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (row[j] != 0.0 && row[j] != 1.0)
                throw ValueError("estimate_map: labels must be one-hot");
            sum += row[j];
            if (row[j] > row[hot]) hot = j;
        }
        if (sum != 1.0) throw ValueError("estimate_map: labels must be one-hot");
        members[hot].push_back(i);
    }

    GmmModel model;
    model.eps = eps;
    model.components.resize(k);
    std::vector<double> terms;
    for (std::size_t j = 0; j < k; ++j) {
        const auto& idx = members[j];
        if (idx.size() < 2)
            throw EstimationError("estimate_map: class " + std::to_string(j) + " has " +
                                  std::to_string(idx.size()) + " samples, need at least 2");
        auto& comp = model.components[j];
        comp.weight = static_cast<double>(idx.size()) / static_cast<double>(n);
        comp.mean.assign(f, 0.0);
        for (std::size_t p = 0; p < f; ++p) {
            terms.clear();
            for (std::size_t i : idx) terms.push_back(embeddings(i, p));
            comp.mean[p] = stable_sum(terms) / static_cast<double>(idx.size());
        }
        comp.cov = Matrix(f, f);
        for (std::size_t p = 0; p < f; ++p)
            for (std::size_t q = p; q < f; ++q) {
                if (diagonal && q != p) continue;
                terms.clear();
                for (std::size_t i : idx)
                    terms.push_back((embeddings(i, p) - comp.mean[p]) *
                                    (embeddings(i, q) - comp.mean[q]));
                const double v = stable_sum(terms) / static_cast<double>(idx.size());
                comp.cov(p, q) = v;
                comp.cov(q, p) = v;
            }
        for (std::size_t p = 0; p < f; ++p) comp.cov(p, p) += eps;
        comp.chol = cholesky(comp.cov);
    }
    return model;
}

// Draws n samples; returns them with the originating component indices
// (diagnostics only, never labels).
inline std::pair<Matrix, std::vector<std::size_t>> sample(const GmmModel& gmm, Rng& rng,
                                                          std::size_t n) {
    if (n == 0) throw ValueError("sample: n must be positive");
    if (gmm.components.empty()) throw StateError("sample: model has no components");
    const std::size_t f = gmm.dim();
    Matrix out(n, f);
    std::vector<std::size_t> comp_idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        double cum = 0.0;
        std::size_t j = gmm.k() - 1;
        for (std::size_t c = 0; c < gmm.k(); ++c) {
            cum += gmm.components[c].weight;
            if (u < cum) {
                j = c;
                break;
            }
        }
        comp_idx[i] = j;
        const auto& comp = gmm.components[j];
        std::vector<double> g(f);
        for (auto& v : g) v = rng.gaussian();
        auto row = out.row(i);
        for (std::size_t p = 0; p < f; ++p) {
            double s = comp.mean[p];
            for (std::size_t q = 0; q <= p; ++q) s += comp.chol(p, q) * g[q];
            row[p] = s;
        }
    }
    return {std::move(out), std::move(comp_idx)};
}

// log sum_j alpha_j N(z | mu_j, Sigma_j), via log-sum-exp over components.
inline double log_density(const GmmModel& gmm, std::span<const double> z) {
    if (gmm.components.empty()) throw StateError("log_density: model has no components");
    const std::size_t f = gmm.dim();
    if (z.size() != f)
        throw DimensionError("log_density: expected dim " + std::to_string(f) + ", got " +
                             std::to_string(z.size()));
    for (double v : z)
        if (!std::isfinite(v)) throw ValueError("log_density: non-finite input");

    constexpr double log_two_pi = 1.8378770664093454836;
    std::vector<double> comp_log(gmm.k(), -std::numeric_limits<double>::infinity());
    for (std::size_t j = 0; j < gmm.k(); ++j) {
        const auto& comp = gmm.components[j];
        if (comp.weight <= 0.0) continue;
        std::vector<double> diff(f);
        for (std::size_t p = 0; p < f; ++p) diff[p] = z[p] - comp.mean[p];
        const auto y = solve_lower(comp.chol, diff);
        double quad = 0.0;
        for (double v : y) quad += v * v;
        double log_det_half = 0.0;
        for (std::size_t p = 0; p < f; ++p) log_det_half += std::log(comp.chol(p, p));
        comp_log[j] = std::log(comp.weight) - 0.5 * static_cast<double>(f) * log_two_pi -
                      log_det_half - 0.5 * quad;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : comp_log) mx = std::max(mx, v);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double v : comp_log) s += std::exp(v - mx);
    return mx + std::log(s);
}

}  // namespace imuda
