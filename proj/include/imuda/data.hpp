#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "imuda/error.hpp"
#include "imuda/matrix.hpp"
#include "imuda/net.hpp"
#include "imuda/rng.hpp"

namespace imuda {

struct LabeledDataset {
    Matrix features;      // n x d
    Matrix labels;        // n x k, one-hot
    std::size_t class_count = 0;
    std::string name;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
};

// The adaptation-facing view of a target domain: features only. Evaluation
// labels live in a separate LabeledDataset that adaptation code never takes.
struct UnlabeledDataset {
    Matrix features;
    std::string name;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
};

struct DomainShiftSpec {
    double rotation = 0.0;              // radians, 2-d features only
    std::vector<double> translation;    // empty = none
    std::vector<double> scale;          // empty = none, entries must be > 0
    double noise_std = 0.0;
};

struct ShiftedDataset {
    UnlabeledDataset unlabeled;   // what adaptation sees
    LabeledDataset evaluation;    // held back for metrics
};

// Two interleaved half-circles, n/2 points per class. Class 0 walks the
// upper unit half-circle, class 1 the lower one offset to interleave.
inline LabeledDataset gen_two_moons(std::size_t n, double noise_std, Rng& rng) {
    if (n % 2 != 0) throw ValueError("gen_two_moons: n must be even");
    if (n < 4) throw ValueError("gen_two_moons: n must be at least 4");
    if (noise_std < 0.0) throw ValueError("gen_two_moons: noise_std must be non-negative");
    const std::size_t half = n / 2;
    LabeledDataset ds;
    ds.features = Matrix(n, 2);
    ds.class_count = 2;
    ds.name = "two-moons";
    constexpr double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < half; ++i) {
        const double t = pi * static_cast<double>(i) / static_cast<double>(half - 1);
        ds.features(i, 0) = std::cos(t);
        ds.features(i, 1) = std::sin(t);
        ds.features(half + i, 0) = 1.0 - std::cos(t);
        ds.features(half + i, 1) = 0.5 - std::sin(t);
    }
    if (noise_std > 0.0)
        for (auto& v : ds.features.data()) v += noise_std * rng.gaussian();
    std::vector<std::size_t> y(n, 0);
    for (std::size_t i = half; i < n; ++i) y[i] = 1;
    ds.labels = one_hot(y, 2);
    return ds;
}

// One isotropic Gaussian cluster per class, n_per_class points each.
inline LabeledDataset gen_blobs(std::size_t k, std::size_t n_per_class, const Matrix& centers,
                                double cov_scale, Rng& rng) {
    if (k < 2) throw ValueError("gen_blobs: need at least 2 classes");
    if (centers.rows() != k)
        throw DimensionError("gen_blobs: expected " + std::to_string(k) + " centers, got " +
                             std::to_string(centers.rows()));
    if (n_per_class == 0) throw ValueError("gen_blobs: n_per_class must be positive");
    if (cov_scale < 0.0) throw ValueError("gen_blobs: cov_scale must be non-negative");
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j)
            if (std::equal(centers.row(i).begin(), centers.row(i).end(),
                           centers.row(j).begin()))
                throw ValueError("gen_blobs: centers " + std::to_string(i) + " and " +
                                 std::to_string(j) + " coincide");
    const std::size_t d = centers.cols();
    LabeledDataset ds;
    ds.features = Matrix(k * n_per_class, d);
    ds.class_count = k;
    ds.name = "blobs";
    std::vector<std::size_t> y(k * n_per_class);
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < n_per_class; ++i) {
            const std::size_t row = j * n_per_class + i;
            y[row] = j;
            for (std::size_t p = 0; p < d; ++p)
                ds.features(row, p) = centers(j, p) + cov_scale * rng.gaussian();
        }
    ds.labels = one_hot(y, k);
    return ds;
}

// x -> scale * (R(theta) x) + translation + noise. Labels survive only in
// the evaluation view.
inline ShiftedDataset apply_shift(const LabeledDataset& base, const DomainShiftSpec& spec,
                                  Rng& rng) {
    const std::size_t d = base.dim();
    if (spec.rotation != 0.0 && d != 2)
        throw ValueError("apply_shift: rotation requires 2-d features, got d = " +
                         std::to_string(d));
    if (!spec.translation.empty() && spec.translation.size() != d)
        throw DimensionError("apply_shift: translation dim " +
                             std::to_string(spec.translation.size()) + " vs features dim " +
                             std::to_string(d));
    if (!spec.scale.empty()) {
        if (spec.scale.size() != d)
            throw DimensionError("apply_shift: scale dim " + std::to_string(spec.scale.size()) +
                                 " vs features dim " + std::to_string(d));
        for (double s : spec.scale)
            if (!(s > 0.0)) throw ValueError("apply_shift: scale factors must be positive");
    }
    if (spec.noise_std < 0.0) throw ValueError("apply_shift: noise_std must be non-negative");

    Matrix out = base.features;
    if (spec.rotation != 0.0) {
        const double c = std::cos(spec.rotation);
        const double s = std::sin(spec.rotation);
        for (std::size_t i = 0; i < out.rows(); ++i) {
            const double x = out(i, 0), y = out(i, 1);
            out(i, 0) = c * x - s * y;
            out(i, 1) = s * x + c * y;
        }
    }
    if (!spec.scale.empty())
        for (std::size_t i = 0; i < out.rows(); ++i)
            for (std::size_t p = 0; p < d; ++p) out(i, p) *= spec.scale[p];
    if (!spec.translation.empty())
        for (std::size_t i = 0; i < out.rows(); ++i)
            for (std::size_t p = 0; p < d; ++p) out(i, p) += spec.translation[p];
    if (spec.noise_std > 0.0)
        for (auto& v : out.data()) v += spec.noise_std * rng.gaussian();

    ShiftedDataset res;
    res.unlabeled = UnlabeledDataset{out, base.name + "-shifted"};
    res.evaluation =
        LabeledDataset{std::move(out), base.labels, base.class_count, base.name + "-shifted"};
    return res;
}

namespace detail {

inline std::vector<unsigned char> read_all_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path, 0);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

struct IdxFile {
    std::vector<std::size_t> dims;
    std::size_t payload_offset = 0;
    std::vector<unsigned char> bytes;
};

inline IdxFile parse_idx(const std::string& path) {
    IdxFile f;
    f.bytes = read_all_bytes(path);
    const auto& b = f.bytes;
    if (b.size() < 4) throw ParseError(path + ": truncated header", b.size());
    if (b[0] != 0 || b[1] != 0)
        throw ParseError(path + ": bad magic", b[0] != 0 ? 0 : 1);
    if (b[2] != 0x08) throw ParseError(path + ": only unsigned-byte payloads supported", 2);
    const std::size_t ndims = b[3];
    if (ndims == 0) throw ParseError(path + ": zero dimensions", 3);
    if (b.size() < 4 + 4 * ndims)
        throw ParseError(path + ": truncated dimension table", b.size());
    std::size_t total = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        const std::size_t off = 4 + 4 * i;
        const std::size_t dim = (std::size_t(b[off]) << 24) | (std::size_t(b[off + 1]) << 16) |
                                (std::size_t(b[off + 2]) << 8) | std::size_t(b[off + 3]);
        f.dims.push_back(dim);
        total *= dim;
    }
    f.payload_offset = 4 + 4 * ndims;
    if (b.size() < f.payload_offset + total)
        throw ParseError(path + ": truncated payload", b.size());
    if (b.size() > f.payload_offset + total)
        throw ParseError(path + ": trailing bytes", f.payload_offset + total);
    return f;
}

}  // namespace detail

// IDX image file: first dimension indexes samples, the rest are flattened
// row-major; byte values scale to [0,1].
inline Matrix load_idx_features(const std::string& path) {
    const auto f = detail::parse_idx(path);
    const std::size_t n = f.dims[0];
    std::size_t d = 1;
    for (std::size_t i = 1; i < f.dims.size(); ++i) d *= f.dims[i];
    Matrix out(n, d);
    for (std::size_t i = 0; i < n * d; ++i)
        out.data()[i] = static_cast<double>(f.bytes[f.payload_offset + i]) / 255.0;
    return out;
}

inline std::vector<std::size_t> load_idx_labels(const std::string& path) {
    const auto f = detail::parse_idx(path);
    if (f.dims.size() != 1)
        throw ParseError(path + ": label file must be one-dimensional", 3);
    std::vector<std::size_t> out(f.dims[0]);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f.bytes[f.payload_offset + i];
    return out;
}

inline LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                               const std::string& name) {
    LabeledDataset ds;
    ds.features = load_idx_features(images_path);
    const auto y = load_idx_labels(labels_path);
    if (y.size() != ds.features.rows())
        throw ParseError(labels_path + ": label count " + std::to_string(y.size()) +
                         " does not match image count " + std::to_string(ds.features.rows()), 4);
    std::size_t k = 0;
    for (std::size_t v : y) k = std::max(k, v + 1);
    ds.labels = one_hot(y, k);
    ds.class_count = k;
    ds.name = name;
    return ds;
}

// count distinct indices drawn without replacement, order preserved by draw.
inline std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t count, Rng& rng) {
    if (count > n)
        throw ValueError("subsample_indices: count " + std::to_string(count) + " exceeds " +
                         std::to_string(n));
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::size_t> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + rng.uniform_index(n - i);
        std::swap(pool[i], pool[j]);
        out[i] = pool[i];
    }
    return out;
}

inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
    Matrix out(indices.size(), m.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= m.rows())
            throw ValueError("gather_rows: index " + std::to_string(indices[i]) +
                             " out of range");
        std::copy(m.row(indices[i]).begin(), m.row(indices[i]).end(), out.row(i).begin());
    }
    return out;
}

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<std::size_t> clamped;  // features whose variance was clamped to 1
};

inline NormStats compute_norm_stats(const Matrix& features) {
    if (features.rows() == 0) throw ValueError("compute_norm_stats: empty input");
    const std::size_t n = features.rows(), d = features.cols();
    NormStats st;
    st.mean.assign(d, 0.0);
    st.stddev.assign(d, 0.0);
    for (std::size_t p = 0; p < d; ++p) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += features(i, p);
        st.mean[p] = s / static_cast<double>(n);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dlt = features(i, p) - st.mean[p];
            v += dlt * dlt;
        }
        v /= static_cast<double>(n);
        if (v <= 1e-24 * std::max(1.0, st.mean[p] * st.mean[p])) {
            st.stddev[p] = 1.0;
            st.clamped.push_back(p);
        } else {
            st.stddev[p] = std::sqrt(v);
        }
    }
    return st;
}

inline Matrix apply_norm(const Matrix& features, const NormStats& stats) {
    if (features.cols() != stats.mean.size())
        throw DimensionError("apply_norm: feature dim " + std::to_string(features.cols()) +
                             " vs stats dim " + std::to_string(stats.mean.size()));
    Matrix out = features;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t p = 0; p < out.cols(); ++p)
            out(i, p) = (out(i, p) - stats.mean[p]) / stats.stddev[p];
    return out;
}

inline std::pair<Matrix, NormStats> normalize(const Matrix& features) {
    auto stats = compute_norm_stats(features);
    return {apply_norm(features, stats), std::move(stats)};
}

inline void export_csv(const LabeledDataset& ds, std::ostream& out) {
    for (std::size_t p = 0; p < ds.dim(); ++p) out << "f" << p << ",";
    out << "label\n";
    char buf[32];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t p = 0; p < ds.dim(); ++p) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, p));
            out << buf << ",";
        }
        out << argmax_row(ds.labels.row(i)) << "\n";
    }
}

// Seeded epoch sampler: serves fixed-size index batches, reshuffling whenever
// the remaining tail cannot fill a batch.
class BatchStream {
public:
    BatchStream(std::size_t n, std::size_t batch, Rng rng)
        : batch_(batch), rng_(std::move(rng)), order_(n), pos_(0) {
        if (batch == 0) throw ValueError("BatchStream: batch size must be positive");
        if (batch > n)
            throw ValueError("BatchStream: batch size " + std::to_string(batch) +
                             " exceeds dataset size " + std::to_string(n));
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        rng_.shuffle(order_);
    }

    std::vector<std::size_t> next() {
        if (pos_ + batch_ > order_.size()) {
            rng_.shuffle(order_);
            pos_ = 0;
        }
        std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                     order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
        pos_ += batch_;
        return out;
    }

private:
    std::size_t batch_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_;
};

}  // namespace imuda
