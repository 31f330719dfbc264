#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "imuda/error.hpp"
#include "imuda/matrix.hpp"
#include "imuda/rng.hpp"

namespace imuda {

enum class Activation { linear, tanh_fn };

struct Layer {
    Matrix w;                // in_dim x out_dim
    std::vector<double> b;   // out_dim
    Activation act = Activation::linear;

    std::size_t in_dim() const { return w.rows(); }
    std::size_t out_dim() const { return w.cols(); }
};

struct LayerGrad {
    Matrix w;
    std::vector<double> b;
};

// Encoder maps inputs to the embedding space; the classifier is a stack of
// linear layers whose final output feeds a softmax. The embedding is exactly
// the classifier's input.
struct NetworkParams {
    std::vector<Layer> encoder;
    std::vector<Layer> classifier;

    std::size_t input_dim() const { return encoder.front().in_dim(); }
    std::size_t embedding_dim() const { return encoder.back().out_dim(); }
    std::size_t class_count() const { return classifier.back().out_dim(); }
};

struct NetSpec {
    std::vector<std::size_t> encoder_dims{2, 16, 8};  // input, hidden..., embedding
    std::size_t classes = 2;
};

inline Layer init_layer(Rng& rng, std::size_t in_dim, std::size_t out_dim, Activation act) {
    Layer layer;
    layer.w = Matrix(in_dim, out_dim);
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (auto& v : layer.w.data()) v = std_dev * rng.gaussian();
    layer.b.assign(out_dim, 0.0);
    layer.act = act;
    return layer;
}

// Hidden and embedding layers use tanh; the classifier is one linear map
// into class logits (softmax applied at forward time).
inline NetworkParams init_network(const NetSpec& spec, std::uint64_t seed) {
    if (spec.encoder_dims.size() < 2)
        throw ValueError("init_network: encoder needs at least input and output dims");
    if (spec.classes < 2) throw ValueError("init_network: need at least 2 classes");
    NetworkParams p;
    for (std::size_t i = 0; i + 1 < spec.encoder_dims.size(); ++i) {
        Rng lr = Rng(seed).derive("enc-layer", i);
        p.encoder.push_back(
            init_layer(lr, spec.encoder_dims[i], spec.encoder_dims[i + 1], Activation::tanh_fn));
    }
    Rng cr = Rng(seed).derive("cls-layer", 0);
    p.classifier.push_back(
        init_layer(cr, spec.encoder_dims.back(), spec.classes, Activation::linear));
    return p;
}

struct StackCache {
    std::vector<Matrix> layer_inputs;  // input to each layer
    std::vector<Matrix> layer_outputs; // post-activation output of each layer
    bool valid = false;
};

namespace detail {

inline Matrix layer_forward(const Layer& layer, const Matrix& x) {
    if (x.cols() != layer.in_dim())
        throw DimensionError("layer forward: expected input dim " +
                             std::to_string(layer.in_dim()) + ", got " +
                             std::to_string(x.cols()));
    Matrix y = matmul(x, layer.w);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        auto row = y.row(i);
        for (std::size_t j = 0; j < y.cols(); ++j) row[j] += layer.b[j];
    }
    if (layer.act == Activation::tanh_fn)
        for (auto& v : y.data()) v = std::tanh(v);
    return y;
}

inline Matrix stack_forward(const std::vector<Layer>& stack, const Matrix& x,
                            StackCache* cache) {
    if (cache) {
        cache->layer_inputs.clear();
        cache->layer_outputs.clear();
        cache->valid = false;
    }
    Matrix cur = x;
    for (const auto& layer : stack) {
        if (cache) cache->layer_inputs.push_back(cur);
        Matrix next = layer_forward(layer, cur);
        if (cache) cache->layer_outputs.push_back(next);
        cur = std::move(next);
    }
    if (cache) cache->valid = true;
    return cur;
}

// grad_out is with respect to the stack's post-activation output. Returns
// per-layer parameter gradients and the gradient at the stack's input.
inline std::vector<LayerGrad> stack_backward(const std::vector<Layer>& stack,
                                             const StackCache& cache, Matrix grad_out,
                                             Matrix* grad_input) {
    if (!cache.valid || cache.layer_inputs.size() != stack.size())
        throw StateError("stack backward: no matching forward cache");
    std::vector<LayerGrad> grads(stack.size());
    for (std::size_t li = stack.size(); li-- > 0;) {
        const Layer& layer = stack[li];
        const Matrix& x = cache.layer_inputs[li];
        const Matrix& y = cache.layer_outputs[li];
        if (!grad_out.same_shape(y))
            throw DimensionError("stack backward: upstream gradient shape " +
                                 shape_string(grad_out) + " does not match output " +
                                 shape_string(y));
        if (layer.act == Activation::tanh_fn)
            for (std::size_t i = 0; i < grad_out.size(); ++i)
                grad_out.data()[i] *= 1.0 - y.data()[i] * y.data()[i];
        grads[li].w = matmul_at_b(x, grad_out);
        grads[li].b.assign(layer.out_dim(), 0.0);
        for (std::size_t i = 0; i < grad_out.rows(); ++i) {
            const auto row = grad_out.row(i);
            for (std::size_t j = 0; j < row.size(); ++j) grads[li].b[j] += row[j];
        }
        if (li > 0 || grad_input) {
            Matrix gi = matmul_a_bt(grad_out, layer.w);
            if (li == 0 && grad_input) *grad_input = std::move(gi);
            else grad_out = std::move(gi);
        }
    }
    return grads;
}

}  // namespace detail

inline Matrix forward_encoder(const NetworkParams& params, const Matrix& batch,
                              StackCache* cache = nullptr) {
    if (batch.cols() != params.input_dim())
        throw DimensionError("forward_encoder: expected input dim " +
                             std::to_string(params.input_dim()) + ", got " +
                             std::to_string(batch.cols()));
    return detail::stack_forward(params.encoder, batch, cache);
}

inline Matrix softmax_rows(Matrix logits) {
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto row = logits.row(i);
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double sum = 0.0;
        for (auto& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (auto& v : row) v /= sum;
    }
    return logits;
}

// Softmax class probabilities. The cache stores the linear stack's
// activations; the softmax itself needs no cache because gradients enter at
// the logits (see cross_entropy_logit_grad).
inline Matrix forward_classifier(const NetworkParams& params, const Matrix& embeddings,
                                 StackCache* cache = nullptr) {
    if (embeddings.cols() != params.embedding_dim())
        throw DimensionError("forward_classifier: expected embedding dim " +
                             std::to_string(params.embedding_dim()) + ", got " +
                             std::to_string(embeddings.cols()));
    return softmax_rows(detail::stack_forward(params.classifier, embeddings, cache));
}

// Mean negative log-probability of the true class. Probabilities are clamped
// at 1e-300 inside the log so the loss is always finite.
inline double cross_entropy(const Matrix& probs, const Matrix& labels) {
    if (!probs.same_shape(labels))
        throw DimensionError("cross_entropy: shape mismatch (" + shape_string(probs) +
                             " vs " + shape_string(labels) + ")");
    if (probs.rows() == 0) throw DimensionError("cross_entropy: empty batch");
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double p_true = 0.0;
        const auto pr = probs.row(i);
        const auto lr = labels.row(i);
        for (std::size_t j = 0; j < pr.size(); ++j) p_true += lr[j] * pr[j];
        loss -= std::log(std::max(p_true, 1e-300));
    }
    return loss / static_cast<double>(probs.rows());
}

// Gradient of mean cross-entropy with respect to the pre-softmax logits.
inline Matrix cross_entropy_logit_grad(const Matrix& probs, const Matrix& labels) {
    if (!probs.same_shape(labels))
        throw DimensionError("cross_entropy_logit_grad: shape mismatch");
    Matrix g = probs;
    const double inv_n = 1.0 / static_cast<double>(probs.rows());
    for (std::size_t i = 0; i < g.size(); ++i)
        g.data()[i] = (g.data()[i] - labels.data()[i]) * inv_n;
    return g;
}

struct ClassifierGrads {
    std::vector<LayerGrad> layers;
    Matrix grad_embeddings;
};

inline ClassifierGrads backward_classifier(const NetworkParams& params,
                                           const StackCache& cache, Matrix logit_grad,
                                           bool need_embedding_grad = true) {
    ClassifierGrads out;
    out.layers = detail::stack_backward(params.classifier, cache, std::move(logit_grad),
                                        need_embedding_grad ? &out.grad_embeddings : nullptr);
    return out;
}

inline std::vector<LayerGrad> backward_encoder(const NetworkParams& params,
                                               const StackCache& cache,
                                               Matrix embedding_grad) {
    return detail::stack_backward(params.encoder, cache, std::move(embedding_grad), nullptr);
}

struct GradientSet {
    std::vector<LayerGrad> encoder;
    std::vector<LayerGrad> classifier;

    static GradientSet zeros_like(const NetworkParams& params) {
        GradientSet g;
        auto zero_stack = [](const std::vector<Layer>& stack) {
            std::vector<LayerGrad> out(stack.size());
            for (std::size_t i = 0; i < stack.size(); ++i) {
                out[i].w = Matrix(stack[i].w.rows(), stack[i].w.cols());
                out[i].b.assign(stack[i].b.size(), 0.0);
            }
            return out;
        };
        g.encoder = zero_stack(params.encoder);
        g.classifier = zero_stack(params.classifier);
        return g;
    }

    void accumulate_encoder(const std::vector<LayerGrad>& grads, double factor = 1.0) {
        accumulate(encoder, grads, factor);
    }
    void accumulate_classifier(const std::vector<LayerGrad>& grads, double factor = 1.0) {
        accumulate(classifier, grads, factor);
    }

private:
    static void accumulate(std::vector<LayerGrad>& into, const std::vector<LayerGrad>& from,
                           double factor) {
        if (into.size() != from.size())
            throw DimensionError("gradient accumulate: layer counts differ");
        for (std::size_t i = 0; i < into.size(); ++i) {
            if (!into[i].w.same_shape(from[i].w))
                throw DimensionError("gradient accumulate: weight shapes differ");
            for (std::size_t k = 0; k < into[i].w.size(); ++k)
                into[i].w.data()[k] += factor * from[i].w.data()[k];
            for (std::size_t k = 0; k < into[i].b.size(); ++k)
                into[i].b[k] += factor * from[i].b[k];
        }
    }
};

inline std::size_t argmax_row(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

inline Matrix one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
    Matrix m(labels.size(), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes)
            throw ValueError("one_hot: label " + std::to_string(labels[i]) +
                             " out of range for " + std::to_string(classes) + " classes");
        m(i, labels[i]) = 1.0;
    }
    return m;
}

}  // namespace imuda
