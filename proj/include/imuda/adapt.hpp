#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "imuda/adam.hpp"
#include "imuda/data.hpp"
#include "imuda/error.hpp"
#include "imuda/net.hpp"
#include "imuda/pseudo.hpp"
#include "imuda/swd.hpp"

namespace imuda {

struct TermMask {
    bool term1 = true;  // source cross-entropy (lambda-weighted)
    bool term2 = true;  // pseudo cross-entropy (lambda-weighted)
    bool term3 = true;  // SWD(encoded target, pseudo)
    bool term4 = true;  // SWD(encoded source, pseudo)

    bool any() const { return term1 || term2 || term3 || term4; }
};

struct AdaptConfig {
    double lambda = 1e-2;
    double tau = 0.95;
    std::size_t projections = 100;
    std::size_t batch_size = 64;
    std::size_t iterations = 2000;
    AdamConfig adam{};
    std::uint64_t seed = 42;
    TermMask term_mask{};
    std::size_t pretrain_epochs = 150;
    std::size_t pseudo_target_count = 0;  // 0 = match source size
    std::size_t pseudo_max_draws_factor = 50;
    double gmm_eps = 1e-4;
    bool gmm_diagonal = false;
    std::size_t eval_interval = 50;
    bool plateau_stop = false;
    double plateau_rel_change = 1e-4;
    std::size_t plateau_window = 100;
};

inline void validate(const AdaptConfig& cfg) {
    if (cfg.lambda < 0.0) throw ValueError("config: lambda must be non-negative");
    if (!(cfg.tau > 0.0 && cfg.tau < 1.0))
        throw ValueError("config: tau must lie strictly inside (0,1)");
    if (cfg.projections == 0) throw ValueError("config: projections must be positive");
    if (cfg.batch_size < 2) throw ValueError("config: batch_size must be at least 2");
    if (!cfg.term_mask.any()) throw ValueError("config: all four terms disabled");
    if (cfg.adam.lr <= 0.0) throw ValueError("config: learning rate must be positive");
    if (cfg.eval_interval == 0) throw ValueError("config: eval_interval must be positive");
    if (cfg.plateau_window < 2) throw ValueError("config: plateau_window must be at least 2");
    if (cfg.pseudo_max_draws_factor == 0)
        throw ValueError("config: pseudo_max_draws_factor must be positive");
    if (cfg.gmm_eps <= 0.0) throw ValueError("config: gmm_eps must be positive");
}

struct IterationRecord {
    std::size_t iteration = 0;  // 1-based
    double term1 = 0.0, term2 = 0.0, term3 = 0.0, term4 = 0.0;
    double total = 0.0;
    double source_acc = std::numeric_limits<double>::quiet_NaN();
    double target_acc = std::numeric_limits<double>::quiet_NaN();
    bool has_eval = false;
};

struct RunReport {
    std::string method;
    std::uint64_t seed = 0;
    AdaptConfig config;
    std::vector<IterationRecord> curve;
    std::size_t iterations_run = 0;
    double final_source_acc = std::numeric_limits<double>::quiet_NaN();
    double final_target_acc = std::numeric_limits<double>::quiet_NaN();
    double source_only_source_acc = std::numeric_limits<double>::quiet_NaN();
    double source_only_target_acc = std::numeric_limits<double>::quiet_NaN();
    double final_swd_source_pseudo = std::numeric_limits<double>::quiet_NaN();
    double final_swd_target_pseudo = std::numeric_limits<double>::quiet_NaN();
    double final_swd_source_target = std::numeric_limits<double>::quiet_NaN();
    double pseudo_acceptance_rate = std::numeric_limits<double>::quiet_NaN();
    double wall_clock_seconds = 0.0;  // reported out of band, never serialized
};

struct EvalResult {
    double accuracy = 0.0;
    std::vector<double> per_class;
    Matrix confusion;  // rows: true class, cols: predicted
};

// (source accuracy, target accuracy) at the given parameters. Adaptation
// calls this blindly; target labels stay on the caller's side.
using EvalHook = std::function<std::pair<double, double>(const NetworkParams&)>;

inline EvalResult evaluate(const NetworkParams& params, const LabeledDataset& ds) {
    if (ds.size() == 0) throw ValueError("evaluate: empty dataset");
    const auto probs = forward_classifier(params, forward_encoder(params, ds.features));
    const std::size_t k = ds.class_count;
    EvalResult res;
    res.confusion = Matrix(k, k);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::size_t truth = argmax_row(ds.labels.row(i));
        const std::size_t pred = argmax_row(probs.row(i));
        res.confusion(truth, pred) += 1.0;
        if (truth == pred) ++correct;
    }
    res.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
    res.per_class.assign(k, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t j = 0; j < k; ++j) {
        double row_total = 0.0;
        for (std::size_t c = 0; c < k; ++c) row_total += res.confusion(j, c);
        if (row_total > 0.0) res.per_class[j] = res.confusion(j, j) / row_total;
    }
    return res;
}

struct PretrainResult {
    NetworkParams params;
    double train_accuracy = 0.0;
    std::vector<double> epoch_loss;
};

namespace detail {

inline void require_min_class_counts(const LabeledDataset& ds, std::size_t min_count) {
    std::vector<std::size_t> counts(ds.class_count, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) ++counts[argmax_row(ds.labels.row(i))];
    for (std::size_t j = 0; j < counts.size(); ++j)
        if (counts[j] < min_count)
            throw ValueError("class " + std::to_string(j) + " has " +
                             std::to_string(counts[j]) + " samples, need at least " +
                             std::to_string(min_count));
}

// Smoothed-plateau check: relative change between the means of the two most
// recent windows of the loss curve.
inline bool plateau_reached(const std::vector<IterationRecord>& curve, std::size_t window,
                            double rel_change) {
    if (curve.size() < 2 * window) return false;
    double recent = 0.0, previous = 0.0;
    for (std::size_t i = curve.size() - window; i < curve.size(); ++i)
        recent += curve[i].total;
    for (std::size_t i = curve.size() - 2 * window; i < curve.size() - window; ++i)
        previous += curve[i].total;
    recent /= static_cast<double>(window);
    previous /= static_cast<double>(window);
    return std::abs(recent - previous) <=
           rel_change * std::max(std::abs(previous), 1e-12);
}

}  // namespace detail

// Plain source ERM: mini-batch cross-entropy under Adam from a fresh seeded
// initialization.
inline PretrainResult pretrain(const LabeledDataset& source, const NetSpec& spec,
                               const AdaptConfig& cfg) {
    validate(cfg);
    detail::require_min_class_counts(source, 2);
    if (source.dim() != spec.encoder_dims.front())
        throw DimensionError("pretrain: source dim " + std::to_string(source.dim()) +
                             " does not match network input " +
                             std::to_string(spec.encoder_dims.front()));
    PretrainResult res;
    res.params = init_network(spec, derive_seed(cfg.seed, "init"));
    if (cfg.pretrain_epochs == 0) {
        res.train_accuracy = evaluate(res.params, source).accuracy;
        return res;
    }
    if (cfg.batch_size > source.size())
        throw ValueError("pretrain: batch size exceeds source size");
    BatchStream stream(source.size(), cfg.batch_size, Rng(cfg.seed).derive("pretrain-batch"));
    auto adam = AdamState::init(res.params, cfg.adam);
    const std::size_t steps_per_epoch = std::max<std::size_t>(1, source.size() / cfg.batch_size);
    for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        double epoch_total = 0.0;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            const auto idx = stream.next();
            const auto xb = gather_rows(source.features, idx);
            const auto yb = gather_rows(source.labels, idx);
            StackCache enc_cache, cls_cache;
            const auto z = forward_encoder(res.params, xb, &enc_cache);
            const auto probs = forward_classifier(res.params, z, &cls_cache);
            const double loss = cross_entropy(probs, yb);
            if (!std::isfinite(loss))
                throw NumericError("pretrain: loss diverged at epoch " +
                                   std::to_string(epoch) + ", step " + std::to_string(step) +
                                   "; last finite epoch mean " +
                                   std::to_string(res.epoch_loss.empty()
                                                      ? 0.0
                                                      : res.epoch_loss.back()));
            auto cls = backward_classifier(res.params, cls_cache,
                                           cross_entropy_logit_grad(probs, yb));
            auto grads = GradientSet::zeros_like(res.params);
            grads.accumulate_classifier(cls.layers);
            grads.accumulate_encoder(
                backward_encoder(res.params, enc_cache, std::move(cls.grad_embeddings)));
            adam_step(res.params, grads, adam);
            epoch_total += loss;
        }
        res.epoch_loss.push_back(epoch_total / static_cast<double>(steps_per_epoch));
    }
    res.train_accuracy = evaluate(res.params, source).accuracy;
    return res;
}

namespace detail {

inline void check_adapt_inputs(const NetworkParams& params, const LabeledDataset& source,
                               const AdaptConfig& cfg) {
    validate(cfg);
    if (source.dim() != params.input_dim())
        throw DimensionError("adapt: source dim does not match network input");
    if (source.labels.cols() != params.class_count())
        throw DimensionError("adapt: source class count does not match classifier");
    if (cfg.batch_size > source.size())
        throw ValueError("adapt: batch size " + std::to_string(cfg.batch_size) +
                         " exceeds source size " + std::to_string(source.size()));
}

inline void record_eval(IterationRecord& rec, const EvalHook& eval,
                        const NetworkParams& params) {
    const auto [sa, ta] = eval(params);
    rec.source_acc = sa;
    rec.target_acc = ta;
    rec.has_eval = true;
}

}  // namespace detail

// Margin-enlarging adaptation: per iteration draws one equal-size batch from
// source, target, and pseudo data, then descends
//   lambda*CE(h(phi(x_s)), y_s) + lambda*CE(h(z_p), y_p)
//     + SWD(phi(x_t), z_p) + SWD(phi(x_s), z_p)
// with pseudo samples fed to the classifier directly (they live in the
// embedding space) and SWD gradients entering the encoder only through the
// encoded side of each pair.
inline std::pair<NetworkParams, RunReport> adapt_imuda(const NetworkParams& params0,
                                                       const LabeledDataset& source,
                                                       const UnlabeledDataset& target,
                                                       const PseudoDataset& pseudo,
                                                       const AdaptConfig& cfg,
                                                       const EvalHook& eval = {}) {
    const auto t_start = std::chrono::steady_clock::now();
    detail::check_adapt_inputs(params0, source, cfg);
    if (target.dim() != params0.input_dim())
        throw DimensionError("adapt: target dim does not match network input");
    if (pseudo.samples.cols() != params0.embedding_dim())
        throw DimensionError("adapt: pseudo sample dim does not match embedding");
    if (pseudo.labels.cols() != params0.class_count())
        throw DimensionError("adapt: pseudo class count does not match classifier");
    if (cfg.batch_size > target.size())
        throw ValueError("adapt: batch size exceeds target size");
    if (cfg.batch_size > pseudo.size())
        throw ValueError("adapt: batch size exceeds pseudo size");

    NetworkParams params = params0;
    RunReport report;
    report.method = "imuda";
    report.seed = cfg.seed;
    report.config = cfg;
    report.pseudo_acceptance_rate = pseudo.acceptance_rate;

    const TermMask& mask = cfg.term_mask;
    const std::size_t big_l = cfg.projections;
    const std::size_t f = params.embedding_dim();

    BatchStream s_stream(source.size(), cfg.batch_size, Rng(cfg.seed).derive("batch-source"));
    BatchStream t_stream(target.size(), cfg.batch_size, Rng(cfg.seed).derive("batch-target"));
    BatchStream p_stream(pseudo.size(), cfg.batch_size, Rng(cfg.seed).derive("batch-pseudo"));
    auto adam = AdamState::init(params, cfg.adam);

    for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
        const auto idx_s = s_stream.next();
        const auto idx_t = t_stream.next();
        const auto idx_p = p_stream.next();

        Matrix zs;
        StackCache enc_cache_s;
        if (mask.term1 || mask.term4) {
            const auto xs = gather_rows(source.features, idx_s);
            zs = forward_encoder(params, xs, &enc_cache_s);
        }

        double t1 = 0.0;
        ClassifierGrads cg1;
        if (mask.term1) {
            const auto ys = gather_rows(source.labels, idx_s);
            StackCache cls_cache;
            const auto probs = forward_classifier(params, zs, &cls_cache);
            t1 = cross_entropy(probs, ys);
            cg1 = backward_classifier(params, cls_cache,
                                      cross_entropy_logit_grad(probs, ys));
        }

        Matrix zp;
        if (mask.term2 || mask.term3 || mask.term4)
            zp = gather_rows(pseudo.samples, idx_p);

        double t2 = 0.0;
        ClassifierGrads cg2;
        if (mask.term2) {
            const auto yp = gather_rows(pseudo.labels, idx_p);
            StackCache cls_cache;
            const auto probs = forward_classifier(params, zp, &cls_cache);
            t2 = cross_entropy(probs, yp);
            cg2 = backward_classifier(params, cls_cache,
                                      cross_entropy_logit_grad(probs, yp), false);
        }

        ProjectionSet proj;
        if (mask.term3 || mask.term4)
            proj = ProjectionSet::draw(derive_seed(cfg.seed, "proj", iter), big_l, f);

        double t3 = 0.0;
        SwdResult r3;
        StackCache enc_cache_t;
        if (mask.term3) {
            const auto xt = gather_rows(target.features, idx_t);
            const auto zt = forward_encoder(params, xt, &enc_cache_t);
            r3 = swd(zt, zp, proj);
            t3 = r3.value;
        }

        double t4 = 0.0;
        SwdResult r4;
        if (mask.term4) {
            r4 = swd(zs, zp, proj);
            t4 = r4.value;
        }

        IterationRecord rec;
        rec.iteration = iter;
        rec.term1 = t1;
        rec.term2 = t2;
        rec.term3 = t3;
        rec.term4 = t4;
        rec.total = (mask.term1 ? cfg.lambda * t1 : 0.0) +
                    (mask.term2 ? cfg.lambda * t2 : 0.0) + (mask.term3 ? t3 : 0.0) +
                    (mask.term4 ? t4 : 0.0);
        if (!std::isfinite(rec.total))
            throw NumericError("adapt: loss diverged at iteration " + std::to_string(iter) +
                               " (terms " + std::to_string(t1) + ", " + std::to_string(t2) +
                               ", " + std::to_string(t3) + ", " + std::to_string(t4) + ")");

        auto grads = GradientSet::zeros_like(params);
        if (mask.term1) grads.accumulate_classifier(cg1.layers, cfg.lambda);
        if (mask.term2) grads.accumulate_classifier(cg2.layers, cfg.lambda);
        if (mask.term1 || mask.term4) {
            Matrix emb_grad;
            if (mask.term1) {
                emb_grad = std::move(cg1.grad_embeddings);
                for (auto& v : emb_grad.data()) v *= cfg.lambda;
            } else {
                emb_grad = Matrix(cfg.batch_size, f);
            }
            if (mask.term4)
                for (std::size_t i = 0; i < emb_grad.size(); ++i)
                    emb_grad.data()[i] += r4.grad_a.data()[i];
            grads.accumulate_encoder(
                backward_encoder(params, enc_cache_s, std::move(emb_grad)));
        }
        if (mask.term3)
            grads.accumulate_encoder(
                backward_encoder(params, enc_cache_t, std::move(r3.grad_a)));
        adam_step(params, grads, adam);

        if (eval && (iter % cfg.eval_interval == 0 || iter == cfg.iterations))
            detail::record_eval(rec, eval, params);
        report.curve.push_back(std::move(rec));

        if (cfg.plateau_stop &&
            detail::plateau_reached(report.curve, cfg.plateau_window, cfg.plateau_rel_change))
            break;
    }
    report.iterations_run = report.curve.size();

    if (eval) {
        const auto [sa, ta] = eval(params);
        report.final_source_acc = sa;
        report.final_target_acc = ta;
    }

    const std::size_t sub = std::min(
        {source.size(), target.size(), pseudo.size(), std::size_t{256}});
    if (sub >= 2) {
        Rng fs = Rng(cfg.seed).derive("final-swd");
        const auto si = subsample_indices(source.size(), sub, fs);
        const auto ti = subsample_indices(target.size(), sub, fs);
        const auto pi = subsample_indices(pseudo.size(), sub, fs);
        const auto proj_f =
            ProjectionSet::draw(derive_seed(cfg.seed, "final-proj"), big_l, f);
        const auto zs_f = forward_encoder(params, gather_rows(source.features, si));
        const auto zt_f = forward_encoder(params, gather_rows(target.features, ti));
        const auto zp_f = gather_rows(pseudo.samples, pi);
        report.final_swd_source_pseudo = swd(zs_f, zp_f, proj_f).value;
        report.final_swd_target_pseudo = swd(zt_f, zp_f, proj_f).value;
        report.final_swd_source_target = swd(zs_f, zt_f, proj_f).value;
    }

    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(params), std::move(report)};
}

// Source ERM plus SWD between the encoded source and encoded target batches.
// The loss slots reuse the four-term layout: term1 = source cross-entropy,
// term3 = the alignment distance, terms 2 and 4 stay zero.
inline std::pair<NetworkParams, RunReport> adapt_baseline(const NetworkParams& params0,
                                                          const LabeledDataset& source,
                                                          const UnlabeledDataset& target,
                                                          const AdaptConfig& cfg,
                                                          const EvalHook& eval = {}) {
    const auto t_start = std::chrono::steady_clock::now();
    detail::check_adapt_inputs(params0, source, cfg);
    if (target.dim() != params0.input_dim())
        throw DimensionError("adapt: target dim does not match network input");
    if (cfg.batch_size > target.size())
        throw ValueError("adapt: batch size exceeds target size");

    NetworkParams params = params0;
    RunReport report;
    report.method = "baseline";
    report.seed = cfg.seed;
    report.config = cfg;

    const std::size_t big_l = cfg.projections;
    const std::size_t f = params.embedding_dim();

    BatchStream s_stream(source.size(), cfg.batch_size, Rng(cfg.seed).derive("batch-source"));
    BatchStream t_stream(target.size(), cfg.batch_size, Rng(cfg.seed).derive("batch-target"));
    auto adam = AdamState::init(params, cfg.adam);

    for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
        const auto idx_s = s_stream.next();
        const auto idx_t = t_stream.next();

        const auto xs = gather_rows(source.features, idx_s);
        StackCache enc_cache_s;
        const auto zs = forward_encoder(params, xs, &enc_cache_s);
        const auto ys = gather_rows(source.labels, idx_s);
        StackCache cls_cache;
        const auto probs = forward_classifier(params, zs, &cls_cache);
        const double t1 = cross_entropy(probs, ys);
        auto cg = backward_classifier(params, cls_cache, cross_entropy_logit_grad(probs, ys));

        const auto xt = gather_rows(target.features, idx_t);
        StackCache enc_cache_t;
        const auto zt = forward_encoder(params, xt, &enc_cache_t);
        const auto proj = ProjectionSet::draw(derive_seed(cfg.seed, "proj", iter), big_l, f);
        auto r = swd(zs, zt, proj);
        const double t3 = r.value;

        IterationRecord rec;
        rec.iteration = iter;
        rec.term1 = t1;
        rec.term3 = t3;
        rec.total = cfg.lambda * t1 + t3;
        if (!std::isfinite(rec.total))
            throw NumericError("adapt: loss diverged at iteration " + std::to_string(iter));

        auto grads = GradientSet::zeros_like(params);
        grads.accumulate_classifier(cg.layers, cfg.lambda);
        Matrix emb_grad = std::move(cg.grad_embeddings);
        for (auto& v : emb_grad.data()) v *= cfg.lambda;
        for (std::size_t i = 0; i < emb_grad.size(); ++i)
            emb_grad.data()[i] += r.grad_a.data()[i];
        grads.accumulate_encoder(backward_encoder(params, enc_cache_s, std::move(emb_grad)));
        grads.accumulate_encoder(backward_encoder(params, enc_cache_t, std::move(r.grad_b)));
        adam_step(params, grads, adam);

        if (eval && (iter % cfg.eval_interval == 0 || iter == cfg.iterations))
            detail::record_eval(rec, eval, params);
        report.curve.push_back(std::move(rec));

        if (cfg.plateau_stop &&
            detail::plateau_reached(report.curve, cfg.plateau_window, cfg.plateau_rel_change))
            break;
    }
    report.iterations_run = report.curve.size();

    if (eval) {
        const auto [sa, ta] = eval(params);
        report.final_source_acc = sa;
        report.final_target_acc = ta;
    }

    const std::size_t sub = std::min({source.size(), target.size(), std::size_t{256}});
    if (sub >= 2) {
        Rng fs = Rng(cfg.seed).derive("final-swd");
        const auto si = subsample_indices(source.size(), sub, fs);
        const auto ti = subsample_indices(target.size(), sub, fs);
        const auto proj_f =
            ProjectionSet::draw(derive_seed(cfg.seed, "final-proj"), big_l, f);
        const auto zs_f = forward_encoder(params, gather_rows(source.features, si));
        const auto zt_f = forward_encoder(params, gather_rows(target.features, ti));
        report.final_swd_source_target = swd(zs_f, zt_f, proj_f).value;
    }

    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(params), std::move(report)};
}

// Continued source ERM from a pretrained state: the same batch stream tag and
// a fresh optimizer, descending lambda * CE alone. Reference loop for the
// degenerate term mask.
inline std::pair<NetworkParams, RunReport> continue_pretraining(const NetworkParams& params0,
                                                                const LabeledDataset& source,
                                                                const AdaptConfig& cfg,
                                                                const EvalHook& eval = {}) {
    detail::check_adapt_inputs(params0, source, cfg);

    NetworkParams params = params0;
    RunReport report;
    report.method = "continued-pretraining";
    report.seed = cfg.seed;
    report.config = cfg;

    BatchStream s_stream(source.size(), cfg.batch_size, Rng(cfg.seed).derive("batch-source"));
    auto adam = AdamState::init(params, cfg.adam);

    for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
        const auto idx_s = s_stream.next();
        const auto xs = gather_rows(source.features, idx_s);
        StackCache enc_cache, cls_cache;
        const auto zs = forward_encoder(params, xs, &enc_cache);
        const auto ys = gather_rows(source.labels, idx_s);
        const auto probs = forward_classifier(params, zs, &cls_cache);
        const double t1 = cross_entropy(probs, ys);
        auto cg = backward_classifier(params, cls_cache, cross_entropy_logit_grad(probs, ys));

        IterationRecord rec;
        rec.iteration = iter;
        rec.term1 = t1;
        rec.total = cfg.lambda * t1;
        if (!std::isfinite(rec.total))
            throw NumericError("adapt: loss diverged at iteration " + std::to_string(iter));

        auto grads = GradientSet::zeros_like(params);
        grads.accumulate_classifier(cg.layers, cfg.lambda);
        Matrix emb_grad = std::move(cg.grad_embeddings);
        for (auto& v : emb_grad.data()) v *= cfg.lambda;
        grads.accumulate_encoder(backward_encoder(params, enc_cache, std::move(emb_grad)));
        adam_step(params, grads, adam);

        if (eval && (iter % cfg.eval_interval == 0 || iter == cfg.iterations))
            detail::record_eval(rec, eval, params);
        report.curve.push_back(std::move(rec));
    }
    report.iterations_run = report.curve.size();
    if (eval) {
        const auto [sa, ta] = eval(params);
        report.final_source_acc = sa;
        report.final_target_acc = ta;
    }
    return {std::move(params), std::move(report)};
}

}  // namespace imuda
