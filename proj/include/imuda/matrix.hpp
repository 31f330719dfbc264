#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "imuda/error.hpp"

namespace imuda {

// Dense row-major matrix of doubles. Rows index samples throughout the
// library; columns index features/coordinates.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
        std::size_t i = 0;
        for (const auto& r : rows) {
            if (r.size() != m.cols_)
                throw DimensionError("from_rows: ragged initializer (row " + std::to_string(i) +
                                     " has " + std::to_string(r.size()) + " entries, expected " +
                                     std::to_string(m.cols_) + ")");
            std::copy(r.begin(), r.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * m.cols_));
            ++i;
        }
        return m;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(),
                           [](double v) { return std::isfinite(v); });
    }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline std::string shape_string(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_shape(const Matrix& m, std::size_t rows, std::size_t cols,
                          const std::string& what) {
    if (m.rows() != rows || m.cols() != cols)
        throw DimensionError(what + ": expected " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", got " + shape_string(m));
}

inline void require_finite(const Matrix& m, const std::string& what) {
    if (!m.all_finite()) throw ValueError(what + ": non-finite entry");
}

// c = a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dims differ (" + shape_string(a) + " * " +
                             shape_string(b) + ")");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

// c = a^T * b
inline Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw DimensionError("matmul_at_b: row counts differ (" + shape_string(a) + " vs " +
                             shape_string(b) + ")");
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k)
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aki * b(k, j);
        }
    return c;
}

// c = a * b^T
inline Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw DimensionError("matmul_a_bt: col counts differ (" + shape_string(a) + " vs " +
                             shape_string(b) + ")");
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
            c(i, j) = s;
        }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

// Sum of values accumulated in ascending order. The sorted pass makes the
// result independent of the order terms were produced in, which several
// estimator invariants rely on (exact permutation invariance).
inline double stable_sum(std::vector<double> terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

inline std::vector<std::size_t> argsort(std::span<const double> values) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Ties broken by original index so the permutation is deterministic.
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return a < b;
    });
    return idx;
}

// Lower-triangular L with L*L^T = a. Requires a symmetric positive-definite
// input; the caller is expected to regularize before calling.
inline Matrix cholesky(const Matrix& a) {
    if (a.rows() != a.cols())
        throw DimensionError("cholesky: matrix not square (" + shape_string(a) + ")");
    const std::size_t n = a.rows();
    double scale = 1.0;
    for (double v : a.data()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(a(i, j) - a(j, i)) > 1e-10 * scale)
                throw ValueError("cholesky: input not symmetric at (" + std::to_string(i) + "," +
                                 std::to_string(j) + ")");
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (d <= 0.0 || !std::isfinite(d))
            throw DecompositionError("cholesky: matrix not positive definite at pivot " +
                                     std::to_string(j), j);
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

// Solves L*y = b for lower-triangular L (forward substitution).
inline std::vector<double> solve_lower(const Matrix& l, std::span<const double> b) {
    const std::size_t n = l.rows();
    if (b.size() != n)
        throw DimensionError("solve_lower: size mismatch (" + std::to_string(b.size()) +
                             " vs " + std::to_string(n) + ")");
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    return y;
}

}  // namespace imuda
