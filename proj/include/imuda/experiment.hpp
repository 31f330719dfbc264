#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "imuda/adapt.hpp"
#include "imuda/data.hpp"
#include "imuda/error.hpp"
#include "imuda/gmm.hpp"
#include "imuda/pseudo.hpp"

namespace imuda {

struct ScenarioSpec {
    std::string kind = "two-moons";
    std::size_t train_n = 1000;
    std::size_t test_n = 1000;
    double noise = 0.1;
    double rotation_deg = 35.0;
    double blob_spread = 0.3;    // covariance scale for the blobs scenario
    double blob_distance = 4.0;  // center separation for the blobs scenario
};

inline const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names{"two-moons", "blobs"};
    return names;
}

struct ScenarioData {
    LabeledDataset source_train;
    LabeledDataset source_test;
    UnlabeledDataset target;      // what adaptation sees
    LabeledDataset target_eval;   // labels held back for metrics
};

namespace detail {

inline LabeledDataset draw_scenario_dataset(const ScenarioSpec& spec, std::size_t n, Rng rng,
                                            const std::string& name) {
    LabeledDataset ds;
    if (spec.kind == "two-moons") {
        ds = gen_two_moons(n, spec.noise, rng);
    } else if (spec.kind == "blobs") {
        const double half = spec.blob_distance / 2.0;
        const auto centers = Matrix::from_rows({{-half, 0.0}, {half, 0.0}});
        ds = gen_blobs(2, std::max<std::size_t>(1, n / 2), centers, spec.blob_spread, rng);
    } else {
        std::string valid;
        for (const auto& s : scenario_names()) valid += (valid.empty() ? "" : ", ") + s;
        throw ValueError("unknown scenario '" + spec.kind + "' (valid: " + valid + ")");
    }
    ds.name = name;
    return ds;
}

}  // namespace detail

// Source train/test splits are independent draws from the same generator;
// the target applies the configured rotation to a third draw. Evaluation on
// the target is transductive: the labeled view covers the same points
// adaptation sees.
inline ScenarioData make_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
    ScenarioData data;
    data.source_train = detail::draw_scenario_dataset(spec, spec.train_n,
                                                      Rng(seed).derive("source-train"),
                                                      spec.kind + "-source");
    data.source_test = detail::draw_scenario_dataset(spec, spec.test_n,
                                                     Rng(seed).derive("source-test"),
                                                     spec.kind + "-source-test");
    auto base = detail::draw_scenario_dataset(spec, spec.train_n,
                                              Rng(seed).derive("target-base"),
                                              spec.kind + "-target");
    DomainShiftSpec shift;
    shift.rotation = spec.rotation_deg * 3.14159265358979323846 / 180.0;
    Rng shift_rng = Rng(seed).derive("target-shift");
    auto shifted = apply_shift(base, shift, shift_rng);
    data.target = std::move(shifted.unlabeled);
    data.target_eval = std::move(shifted.evaluation);
    return data;
}

struct PretrainedState {
    PretrainResult pre;
    double source_acc = 0.0;  // source-only accuracies at the pretrained params
    double target_acc = 0.0;
};

inline PretrainedState prepare_source(const ScenarioData& data, const AdaptConfig& cfg) {
    NetSpec spec;
    spec.encoder_dims = {data.source_train.dim(), 16, 8};
    spec.classes = data.source_train.class_count;
    PretrainedState state;
    state.pre = pretrain(data.source_train, spec, cfg);
    state.source_acc = evaluate(state.pre.params, data.source_test).accuracy;
    state.target_acc = evaluate(state.pre.params, data.target_eval).accuracy;
    return state;
}

struct PseudoBundle {
    GmmModel gmm;
    PseudoDataset pseudo;
};

inline PseudoBundle build_pseudo(const NetworkParams& params, const LabeledDataset& source,
                                 const AdaptConfig& cfg) {
    PseudoBundle bundle;
    const auto embeddings = forward_encoder(params, source.features);
    bundle.gmm = estimate_map(embeddings, source.labels, cfg.gmm_eps, cfg.gmm_diagonal);
    const std::size_t target_count =
        cfg.pseudo_target_count == 0 ? source.size() : cfg.pseudo_target_count;
    Rng rng = Rng(cfg.seed).derive("pseudo");
    bundle.pseudo = generate_pseudo(bundle.gmm, params, cfg.tau, target_count,
                                    cfg.pseudo_max_draws_factor * target_count, rng);
    return bundle;
}

inline EvalHook make_eval_hook(const ScenarioData& data) {
    return [&data](const NetworkParams& p) {
        return std::make_pair(evaluate(p, data.source_test).accuracy,
                              evaluate(p, data.target_eval).accuracy);
    };
}

struct PipelineResult {
    NetworkParams params;
    RunReport report;
};

namespace detail {

inline void stamp_source_only(RunReport& report, const PretrainedState& state) {
    report.source_only_source_acc = state.source_acc;
    report.source_only_target_acc = state.target_acc;
}

}  // namespace detail

inline PipelineResult run_source_only(const ScenarioData& data, const AdaptConfig& cfg,
                                      const PretrainedState& state) {
    PipelineResult res;
    res.params = state.pre.params;
    res.report.method = "source-only";
    res.report.seed = cfg.seed;
    res.report.config = cfg;
    res.report.final_source_acc = state.source_acc;
    res.report.final_target_acc = state.target_acc;
    detail::stamp_source_only(res.report, state);
    return res;
}

inline PipelineResult run_baseline(const ScenarioData& data, const AdaptConfig& cfg,
                                   const PretrainedState& state) {
    PipelineResult res;
    auto [params, report] =
        adapt_baseline(state.pre.params, data.source_train, data.target, cfg,
                       make_eval_hook(data));
    res.params = std::move(params);
    res.report = std::move(report);
    detail::stamp_source_only(res.report, state);
    return res;
}

inline PipelineResult run_imuda(const ScenarioData& data, const AdaptConfig& cfg,
                                const PretrainedState& state, const PseudoBundle& bundle) {
    PipelineResult res;
    auto [params, report] =
        adapt_imuda(state.pre.params, data.source_train, data.target, bundle.pseudo, cfg,
                    make_eval_hook(data));
    res.params = std::move(params);
    res.report = std::move(report);
    detail::stamp_source_only(res.report, state);
    return res;
}

enum class Arm { source_only, baseline_eq1, imuda, drop_term3, drop_term4 };

inline const std::vector<Arm>& default_arms() {
    static const std::vector<Arm> arms{Arm::source_only, Arm::baseline_eq1, Arm::imuda,
                                       Arm::drop_term3, Arm::drop_term4};
    return arms;
}

inline std::string arm_name(Arm arm) {
    switch (arm) {
        case Arm::source_only: return "source_only";
        case Arm::baseline_eq1: return "baseline_eq1";
        case Arm::imuda: return "imuda";
        case Arm::drop_term3: return "drop_term3";
        case Arm::drop_term4: return "drop_term4";
    }
    throw ValueError("arm_name: unknown arm");
}

inline Arm arm_from_name(const std::string& name) {
    for (const auto arm : default_arms())
        if (arm_name(arm) == name) return arm;
    throw ValueError("unknown arm '" + name +
                     "' (valid: source_only, baseline_eq1, imuda, drop_term3, drop_term4)");
}

inline TermMask arm_mask(Arm arm) {
    switch (arm) {
        case Arm::imuda: return {true, true, true, true};
        case Arm::drop_term3: return {true, true, false, true};
        case Arm::drop_term4: return {true, true, true, false};
        default: throw ValueError("arm_mask: arm has no term mask");
    }
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw ValueError("median: empty input");
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    if (v.size() % 2 == 1) return v[mid];
    return 0.5 * (v[mid - 1] + v[mid]);
}

struct ArmOutcome {
    std::string label;
    std::vector<std::uint64_t> seeds;
    std::vector<double> source_acc;  // per seed, aligned with seeds
    std::vector<double> target_acc;
    double median_source_acc = 0.0;
    double median_target_acc = 0.0;
};

struct ComparisonTable {
    std::string kind;  // "ablation", "sweep-lambda", or "sweep-tau"
    std::vector<ArmOutcome> rows;
};

namespace detail {

// Runs one job per seed on up to `workers` threads; results land in
// seed-indexed slots so the merge order never depends on scheduling. Jobs
// only touch their own slot. Thrown errors are rethrown on the caller.
template <typename Job>
inline void for_each_seed(std::size_t count, std::size_t workers, Job job) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        while (true) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= count) return;
            try {
                job(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, count); ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

inline std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace detail

// One pretrained state per seed, shared by every arm, so row differences are
// attributable to the adaptation method alone.
inline ComparisonTable run_ablation(const ScenarioSpec& scenario, const AdaptConfig& cfg,
                                    const std::vector<std::uint64_t>& seeds,
                                    const std::vector<Arm>& arms = default_arms(),
                                    std::size_t workers = 1) {
    validate(cfg);
    if (seeds.empty()) throw ValueError("run_ablation: empty seed list");
    if (arms.empty()) throw ValueError("run_ablation: empty arm list");

    ComparisonTable table;
    table.kind = "ablation";
    for (const auto arm : arms) {
        ArmOutcome row;
        row.label = arm_name(arm);
        row.seeds = seeds;
        row.source_acc.resize(seeds.size());
        row.target_acc.resize(seeds.size());
        table.rows.push_back(std::move(row));
    }

    const bool needs_pseudo = std::any_of(arms.begin(), arms.end(), [](Arm a) {
        return a == Arm::imuda || a == Arm::drop_term3 || a == Arm::drop_term4;
    });

    detail::for_each_seed(seeds.size(), workers, [&](std::size_t si) {
        AdaptConfig seed_cfg = cfg;
        seed_cfg.seed = seeds[si];
        const auto data = make_scenario(scenario, seed_cfg.seed);
        const auto state = prepare_source(data, seed_cfg);
        PseudoBundle bundle;
        if (needs_pseudo) bundle = build_pseudo(state.pre.params, data.source_train, seed_cfg);
        for (std::size_t ai = 0; ai < arms.size(); ++ai) {
            PipelineResult res;
            switch (arms[ai]) {
                case Arm::source_only:
                    res = run_source_only(data, seed_cfg, state);
                    break;
                case Arm::baseline_eq1:
                    res = run_baseline(data, seed_cfg, state);
                    break;
                default: {
                    AdaptConfig arm_cfg = seed_cfg;
                    arm_cfg.term_mask = arm_mask(arms[ai]);
                    res = run_imuda(data, arm_cfg, state, bundle);
                    break;
                }
            }
            table.rows[ai].source_acc[si] = res.report.final_source_acc;
            table.rows[ai].target_acc[si] = res.report.final_target_acc;
        }
    });

    for (auto& row : table.rows) {
        row.median_source_acc = median(row.source_acc);
        row.median_target_acc = median(row.target_acc);
    }
    return table;
}

// One full run per value, sharing the per-seed pretraining. A tau sweep
// regenerates the pseudo dataset per value; a lambda sweep reuses it.
inline ComparisonTable sweep(const std::string& parameter, const std::vector<double>& values,
                             const ScenarioSpec& scenario, const AdaptConfig& cfg,
                             const std::vector<std::uint64_t>& seeds,
                             std::size_t workers = 1) {
    validate(cfg);
    if (parameter != "lambda" && parameter != "tau")
        throw ValueError("sweep: parameter must be lambda or tau, got '" + parameter + "'");
    if (values.size() < 2) throw ValueError("sweep: need at least 2 values");
    if (seeds.empty()) throw ValueError("sweep: empty seed list");

    ComparisonTable table;
    table.kind = "sweep-" + parameter;
    for (const auto v : values) {
        ArmOutcome row;
        row.label = detail::format_value(v);
        row.seeds = seeds;
        row.source_acc.resize(seeds.size());
        row.target_acc.resize(seeds.size());
        table.rows.push_back(std::move(row));
    }

    detail::for_each_seed(seeds.size(), workers, [&](std::size_t si) {
        AdaptConfig seed_cfg = cfg;
        seed_cfg.seed = seeds[si];
        const auto data = make_scenario(scenario, seed_cfg.seed);
        const auto state = prepare_source(data, seed_cfg);
        PseudoBundle shared;
        if (parameter == "lambda")
            shared = build_pseudo(state.pre.params, data.source_train, seed_cfg);
        for (std::size_t vi = 0; vi < values.size(); ++vi) {
            AdaptConfig run_cfg = seed_cfg;
            if (parameter == "lambda") run_cfg.lambda = values[vi];
            else run_cfg.tau = values[vi];
            validate(run_cfg);
            PseudoBundle per_value;
            if (parameter == "tau")
                per_value = build_pseudo(state.pre.params, data.source_train, run_cfg);
            const PseudoBundle& bundle = parameter == "lambda" ? shared : per_value;
            const auto res = run_imuda(data, run_cfg, state, bundle);
            table.rows[vi].source_acc[si] = res.report.final_source_acc;
            table.rows[vi].target_acc[si] = res.report.final_target_acc;
        }
    });

    for (auto& row : table.rows) {
        row.median_source_acc = median(row.source_acc);
        row.median_target_acc = median(row.target_acc);
    }
    return table;
}

}  // namespace imuda
