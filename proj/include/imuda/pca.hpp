#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "imuda/error.hpp"
#include "imuda/matrix.hpp"

namespace imuda {

struct PcaModel {
    std::vector<double> mean;
    Matrix components;  // d x out_dim, columns are principal axes
    std::vector<double> eigenvalues;
};

namespace detail {

// Cyclic Jacobi eigensolver for a symmetric matrix. Returns eigenvalues and a
// matrix whose columns are the matching eigenvectors.
inline std::pair<std::vector<double>, Matrix> jacobi_eigen(Matrix a) {
    if (a.rows() != a.cols())
        throw DimensionError("jacobi_eigen: matrix must be square, got " + shape_string(a));
    const std::size_t n = a.rows();
    Matrix v = Matrix::identity(n);
    double norm = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) norm += a.data()[i] * a.data()[i];
    norm = std::sqrt(norm);
    const double tol = std::max(1e-300, 1e-14 * norm);

    for (std::size_t sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
        if (std::sqrt(off) <= tol) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    return {std::move(eig), std::move(v)};
}

}  // namespace detail

inline PcaModel fit_pca(const Matrix& x, std::size_t out_dim) {
    if (x.rows() < 2) throw ValueError("fit_pca: need at least 2 rows");
    if (out_dim == 0 || out_dim > x.cols())
        throw ValueError("fit_pca: out_dim must be in [1, " + std::to_string(x.cols()) + "]");
    require_finite(x, "fit_pca input");
    const std::size_t n = x.rows(), d = x.cols();

    PcaModel model;
    model.mean.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = x(i, j);
        model.mean[j] = stable_sum(std::move(col)) / static_cast<double>(n);
    }
    Matrix centered(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) centered(i, j) = x(i, j) - model.mean[j];
    Matrix cov = matmul_at_b(centered, centered);
    for (auto& c : cov.data()) c /= static_cast<double>(n - 1);

    auto [eig, vecs] = detail::jacobi_eigen(std::move(cov));
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return eig[a] > eig[b]; });

    model.components = Matrix(d, out_dim);
    model.eigenvalues.resize(out_dim);
    for (std::size_t c = 0; c < out_dim; ++c) {
        const std::size_t src = order[c];
        model.eigenvalues[c] = eig[src];
        // Canonical sign: the entry of largest magnitude is positive, so the
        // projection is unique rather than unique-up-to-reflection.
        std::size_t peak = 0;
        for (std::size_t r = 1; r < d; ++r)
            if (std::abs(vecs(r, src)) > std::abs(vecs(peak, src))) peak = r;
        const double sign = vecs(peak, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < d; ++r) model.components(r, c) = sign * vecs(r, src);
    }
    return model;
}

inline Matrix project_pca(const PcaModel& model, const Matrix& x) {
    if (x.cols() != model.mean.size())
        throw DimensionError("project_pca: expected dim " + std::to_string(model.mean.size()) +
                             ", got " + std::to_string(x.cols()));
    Matrix centered(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) centered(i, j) = x(i, j) - model.mean[j];
    return matmul(centered, model.components);
}

}  // namespace imuda
