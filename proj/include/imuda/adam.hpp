#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "imuda/error.hpp"
#include "imuda/net.hpp"

namespace imuda {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    std::uint64_t step = 0;
    GradientSet m;
    GradientSet v;

    static AdamState init(const NetworkParams& params, AdamConfig cfg = {}) {
        AdamState s;
        s.cfg = cfg;
        s.m = GradientSet::zeros_like(params);
        s.v = GradientSet::zeros_like(params);
        return s;
    }
};

namespace detail {

inline void check_finite(const std::vector<LayerGrad>& grads, const std::string& which) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].w.all_finite())
            throw NumericError("adam_step: non-finite gradient in " + which + " layer " +
                               std::to_string(i) + " weights");
        for (double b : grads[i].b)
            if (!std::isfinite(b))
                throw NumericError("adam_step: non-finite gradient in " + which + " layer " +
                                   std::to_string(i) + " bias");
    }
}

inline void adam_update_array(double* p, double* m, double* v, const double* g,
                              std::size_t n, const AdamConfig& cfg, double bc1, double bc2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

inline void adam_update_stack(std::vector<Layer>& stack, std::vector<LayerGrad>& m,
                              std::vector<LayerGrad>& v, const std::vector<LayerGrad>& g,
                              const AdamConfig& cfg, double bc1, double bc2,
                              const std::string& which) {
    if (g.size() != stack.size())
        throw DimensionError("adam_step: " + which + " gradient layer count mismatch");
    for (std::size_t i = 0; i < stack.size(); ++i) {
        if (!g[i].w.same_shape(stack[i].w) || g[i].b.size() != stack[i].b.size())
            throw DimensionError("adam_step: " + which + " layer " + std::to_string(i) +
                                 " gradient shape mismatch");
        adam_update_array(stack[i].w.data().data(), m[i].w.data().data(),
                          v[i].w.data().data(), g[i].w.data().data(), stack[i].w.size(),
                          cfg, bc1, bc2);
        adam_update_array(stack[i].b.data(), m[i].b.data(), v[i].b.data(), g[i].b.data(),
                          stack[i].b.size(), cfg, bc1, bc2);
    }
}

}  // namespace detail

// Standard Adam with bias correction. Rejects non-finite gradients before
// touching any accumulator, so a failed call leaves params and state intact.
inline void adam_step(NetworkParams& params, const GradientSet& grads, AdamState& state) {
    detail::check_finite(grads.encoder, "encoder");
    detail::check_finite(grads.classifier, "classifier");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(state.step));
    detail::adam_update_stack(params.encoder, state.m.encoder, state.v.encoder,
                              grads.encoder, state.cfg, bc1, bc2, "encoder");
    detail::adam_update_stack(params.classifier, state.m.classifier, state.v.classifier,
                              grads.classifier, state.cfg, bc1, bc2, "classifier");
}

}  // namespace imuda
