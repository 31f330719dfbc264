#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "imuda/checkpoint.hpp"
#include "imuda/experiment.hpp"
#include "imuda/pca.hpp"
#include "imuda/report.hpp"

namespace {

using namespace imuda;

struct CommonFlags {
    std::string scenario;
    std::string config_path;
    std::string out_dir = "imuda-out";
    std::size_t workers = 1;

    double lambda = 0.0;
    double tau = 0.0;
    std::size_t projections = 0;
    std::size_t batch_size = 0;
    std::size_t iterations = 0;
    std::uint64_t seed = 0;
    std::string term_mask;

    CLI::Option* opt_lambda = nullptr;
    CLI::Option* opt_tau = nullptr;
    CLI::Option* opt_projections = nullptr;
    CLI::Option* opt_batch_size = nullptr;
    CLI::Option* opt_iterations = nullptr;
    CLI::Option* opt_seed = nullptr;
    CLI::Option* opt_term_mask = nullptr;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--scenario", f.scenario, "data scenario")
        ->envname("IMUDA_SCENARIO")
        ->check(CLI::IsMember(scenario_names()));
    f.opt_seed = cmd->add_option("--seed", f.seed, "root seed (default 42)")
                     ->envname("IMUDA_SEED");
    f.opt_lambda = cmd->add_option("--lambda", f.lambda, "ERM trade-off weight (default 1e-2)")
                       ->envname("IMUDA_LAMBDA");
    f.opt_tau = cmd->add_option("--tau", f.tau, "pseudo confidence threshold (default 0.95)")
                    ->envname("IMUDA_TAU");
    f.opt_projections =
        cmd->add_option("--projections", f.projections, "slicing directions (default 100)")
            ->envname("IMUDA_PROJECTIONS");
    f.opt_batch_size = cmd->add_option("--batch-size", f.batch_size, "batch size (default 64)")
                           ->envname("IMUDA_BATCH_SIZE");
    f.opt_iterations =
        cmd->add_option("--iterations", f.iterations, "adaptation iterations (default 2000)")
            ->envname("IMUDA_ITERATIONS");
    f.opt_term_mask =
        cmd->add_option("--term-mask", f.term_mask, "objective terms, 4 chars of 0/1")
            ->envname("IMUDA_TERM_MASK");
    cmd->add_option("--config", f.config_path, "JSON config file (defaults < file < flags)")
        ->envname("IMUDA_CONFIG")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out-dir", f.out_dir, "output directory")->envname("IMUDA_OUT_DIR");
    cmd->add_option("--workers", f.workers, "worker pool size for sweep/ablate arms")
        ->envname("IMUDA_WORKERS");
}

AdaptConfig resolve_config(const CommonFlags& f) {
    AdaptConfig cfg;
    if (!f.config_path.empty()) {
        try {
            cfg = config_from_json(nlohmann::json::parse(read_text_file(f.config_path)), cfg);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("config file: ") + e.what(), e.byte);
        }
    }
    if (f.opt_seed->count()) cfg.seed = f.seed;
    if (f.opt_lambda->count()) cfg.lambda = f.lambda;
    if (f.opt_tau->count()) cfg.tau = f.tau;
    if (f.opt_projections->count()) cfg.projections = f.projections;
    if (f.opt_batch_size->count()) cfg.batch_size = f.batch_size;
    if (f.opt_iterations->count()) cfg.iterations = f.iterations;
    if (f.opt_term_mask->count()) cfg.term_mask = term_mask_from_string(f.term_mask);
    validate(cfg);
    return cfg;
}

ScenarioSpec resolve_scenario(const CommonFlags& f) {
    if (f.scenario.empty()) {
        std::string valid;
        for (const auto& s : scenario_names()) valid += (valid.empty() ? "" : ", ") + s;
        throw ValueError("--scenario is required (valid: " + valid + ")");
    }
    ScenarioSpec spec;
    spec.kind = f.scenario;
    return spec;
}

nlohmann::json scenario_to_json(const ScenarioSpec& spec) {
    return nlohmann::json{{"kind", spec.kind},
                          {"train_n", spec.train_n},
                          {"test_n", spec.test_n},
                          {"noise", spec.noise},
                          {"rotation_deg", spec.rotation_deg},
                          {"blob_spread", spec.blob_spread},
                          {"blob_distance", spec.blob_distance}};
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

// The manifest goes to disk before any computation so an interrupted run
// still documents what it was asked to do.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const ScenarioSpec& spec, const AdaptConfig& cfg,
                    const std::vector<std::string>& outputs,
                    nlohmann::json input_digests,
                    nlohmann::json extra = nlohmann::json::object()) {
    nlohmann::json manifest{{"format_version", report_format_version},
                            {"command", command},
                            {"scenario", scenario_to_json(spec)},
                            {"config", config_to_json(cfg)},
                            {"input_digests", std::move(input_digests)},
                            {"outputs", outputs},
                            {"artifact_versions",
                             {{"checkpoint", checkpoint_format_version},
                              {"report", report_format_version}}}};
    for (const auto& [key, value] : extra.items()) manifest[key] = value;
    std::filesystem::create_directories(out_dir);
    write_json_file(join_path(out_dir, "manifest.json"), manifest);
}

void write_timing(const std::string& out_dir,
                  std::chrono::steady_clock::time_point start) {
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_json_file(join_path(out_dir, "timing.json"),
                    nlohmann::json{{"wall_clock_seconds", seconds}});
    std::printf("completed in %.2f s\n", seconds);
}

struct LoadedCheckpoint {
    NetworkParams params;
    GmmModel gmm;
    nlohmann::json digests;
};

LoadedCheckpoint load_checkpoints(const std::string& network_path, const std::string& gmm_path,
                                  const ScenarioData& data) {
    LoadedCheckpoint lc;
    lc.params = load_network(network_path);
    lc.gmm = load_gmm(gmm_path);
    if (lc.params.input_dim() != data.source_train.dim())
        throw Error("checkpoint input dim " + std::to_string(lc.params.input_dim()) +
                    " vs scenario dim " + std::to_string(data.source_train.dim()));
    if (lc.params.class_count() != data.source_train.class_count)
        throw Error("checkpoint class count " + std::to_string(lc.params.class_count()) +
                    " vs scenario class count " +
                    std::to_string(data.source_train.class_count));
    if (lc.gmm.dim() != lc.params.embedding_dim())
        throw Error("gmm checkpoint dim " + std::to_string(lc.gmm.dim()) +
                    " vs network embedding dim " +
                    std::to_string(lc.params.embedding_dim()));
    lc.digests = {{"network", digest_hex(read_text_file(network_path))},
                  {"gmm", digest_hex(read_text_file(gmm_path))}};
    return lc;
}

int cmd_pretrain(const CommonFlags& flags) {
    const auto start = std::chrono::steady_clock::now();
    const auto spec = resolve_scenario(flags);
    const auto cfg = resolve_config(flags);
    write_manifest(flags.out_dir, "pretrain", spec, cfg,
                   {"network.json", "gmm.json", "timing.json"}, nlohmann::json::object());

    const auto data = make_scenario(spec, cfg.seed);
    const auto state = prepare_source(data, cfg);
    const auto embeddings = forward_encoder(state.pre.params, data.source_train.features);
    const auto gmm =
        estimate_map(embeddings, data.source_train.labels, cfg.gmm_eps, cfg.gmm_diagonal);

    save_network(state.pre.params, join_path(flags.out_dir, "network.json"));
    save_gmm(gmm, join_path(flags.out_dir, "gmm.json"));
    std::printf("pretrain: train acc %.4f, source test acc %.4f, target acc %.4f\n",
                state.pre.train_accuracy, state.source_acc, state.target_acc);
    write_timing(flags.out_dir, start);
    return 0;
}

int cmd_adapt(const CommonFlags& flags, const std::string& network_path,
              const std::string& gmm_path, bool with_baseline) {
    const auto start = std::chrono::steady_clock::now();
    const auto spec = resolve_scenario(flags);
    const auto cfg = resolve_config(flags);
    const auto data = make_scenario(spec, cfg.seed);

    PretrainedState state;
    GmmModel gmm;
    nlohmann::json digests = nlohmann::json::object();
    const bool from_checkpoint = !network_path.empty();
    if (from_checkpoint) {
        auto lc = load_checkpoints(network_path, gmm_path, data);
        state.pre.params = std::move(lc.params);
        gmm = std::move(lc.gmm);
        digests = std::move(lc.digests);
    }

    std::vector<std::string> outputs{"report.json", "curves.csv", "network.json",
                                     "pseudo.json", "timing.json"};
    write_manifest(flags.out_dir, "adapt", spec, cfg, outputs, digests,
                   {{"with_baseline", with_baseline}});

    if (from_checkpoint) {
        state.pre.train_accuracy = evaluate(state.pre.params, data.source_train).accuracy;
        state.source_acc = evaluate(state.pre.params, data.source_test).accuracy;
        state.target_acc = evaluate(state.pre.params, data.target_eval).accuracy;
    } else {
        state = prepare_source(data, cfg);
        const auto embeddings = forward_encoder(state.pre.params, data.source_train.features);
        gmm = estimate_map(embeddings, data.source_train.labels, cfg.gmm_eps,
                           cfg.gmm_diagonal);
    }

    const std::size_t target_count =
        cfg.pseudo_target_count == 0 ? data.source_train.size() : cfg.pseudo_target_count;
    Rng pseudo_rng = Rng(cfg.seed).derive("pseudo");
    const auto pseudo =
        generate_pseudo(gmm, state.pre.params, cfg.tau, target_count,
                        cfg.pseudo_max_draws_factor * target_count, pseudo_rng);

    auto [adapted, report] = adapt_imuda(state.pre.params, data.source_train, data.target,
                                         pseudo, cfg, make_eval_hook(data));
    report.source_only_source_acc = state.source_acc;
    report.source_only_target_acc = state.target_acc;

    nlohmann::json out{{"format_version", report_format_version},
                       {"source_only_acc", state.target_acc},
                       {"imuda_acc", report.final_target_acc},
                       {"final_swd_source_pseudo", report.final_swd_source_pseudo},
                       {"final_swd_target_pseudo", report.final_swd_target_pseudo},
                       {"report", run_report_to_json(report)}};
    if (with_baseline) {
        auto [bparams, breport] =
            adapt_baseline(state.pre.params, data.source_train, data.target, cfg,
                           make_eval_hook(data));
        breport.source_only_source_acc = state.source_acc;
        breport.source_only_target_acc = state.target_acc;
        out["baseline_acc"] = breport.final_target_acc;
        out["baseline"] = run_report_to_json(breport);
    }

    write_json_file(join_path(flags.out_dir, "report.json"), out);
    write_text_file(join_path(flags.out_dir, "curves.csv"), curves_csv(report));
    save_network(adapted, join_path(flags.out_dir, "network.json"));
    save_pseudo(pseudo, join_path(flags.out_dir, "pseudo.json"));
    std::printf("adapt: source-only tgt acc %.4f -> imuda tgt acc %.4f (src %.4f)\n",
                state.target_acc, report.final_target_acc, report.final_source_acc);
    write_timing(flags.out_dir, start);
    return 0;
}

std::vector<std::uint64_t> resolve_seeds(const std::vector<std::uint64_t>& given,
                                         std::uint64_t root) {
    if (!given.empty()) return given;
    std::vector<std::uint64_t> seeds(5);
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = root + i;
    return seeds;
}

void print_table(const ComparisonTable& table) {
    std::printf("%-14s %-18s %-18s\n", "label", "median_target_acc", "median_source_acc");
    for (const auto& row : table.rows)
        std::printf("%-14s %-18.4f %-18.4f\n", row.label.c_str(), row.median_target_acc,
                    row.median_source_acc);
}

int cmd_ablate(const CommonFlags& flags, const std::vector<std::uint64_t>& seed_flags,
               const std::vector<std::string>& arm_names) {
    const auto start = std::chrono::steady_clock::now();
    const auto spec = resolve_scenario(flags);
    const auto cfg = resolve_config(flags);
    const auto seeds = resolve_seeds(seed_flags, cfg.seed);
    std::vector<Arm> arms;
    for (const auto& name : arm_names) arms.push_back(arm_from_name(name));
    if (arms.empty()) throw ValueError("--arms must name at least one arm");

    write_manifest(flags.out_dir, "ablate", spec, cfg,
                   {"ablation.json", "ablation.csv", "timing.json"},
                   nlohmann::json::object(),
                   {{"seeds", seeds}, {"arms", arm_names}, {"workers", flags.workers}});

    const auto table = run_ablation(spec, cfg, seeds, arms, flags.workers);
    write_json_file(join_path(flags.out_dir, "ablation.json"), table_to_json(table));
    write_text_file(join_path(flags.out_dir, "ablation.csv"), table_csv(table));
    print_table(table);
    write_timing(flags.out_dir, start);
    return 0;
}

int cmd_sweep(const CommonFlags& flags, const std::string& parameter,
              const std::vector<double>& values,
              const std::vector<std::uint64_t>& seed_flags) {
    const auto start = std::chrono::steady_clock::now();
    const auto spec = resolve_scenario(flags);
    const auto cfg = resolve_config(flags);
    const auto seeds = resolve_seeds(seed_flags, cfg.seed);

    write_manifest(flags.out_dir, "sweep", spec, cfg,
                   {"sweep.json", "sweep.csv", "timing.json"}, nlohmann::json::object(),
                   {{"parameter", parameter},
                    {"values", values},
                    {"seeds", seeds},
                    {"workers", flags.workers}});

    const auto table = sweep(parameter, values, spec, cfg, seeds, flags.workers);
    write_json_file(join_path(flags.out_dir, "sweep.json"), table_to_json(table));
    write_text_file(join_path(flags.out_dir, "sweep.csv"), table_csv(table));
    print_table(table);
    write_timing(flags.out_dir, start);
    return 0;
}

std::string projection_csv(const Matrix& src_points, const LabeledDataset& src,
                           const Matrix& tgt_points, const LabeledDataset& tgt) {
    std::ostringstream out;
    out << "x,y,label,domain\n";
    for (std::size_t i = 0; i < src_points.rows(); ++i)
        out << fmt17(src_points(i, 0)) << ',' << fmt17(src_points(i, 1)) << ','
            << argmax_row(src.labels.row(i)) << ",source\n";
    for (std::size_t i = 0; i < tgt_points.rows(); ++i)
        out << fmt17(tgt_points(i, 0)) << ',' << fmt17(tgt_points(i, 1)) << ','
            << argmax_row(tgt.labels.row(i)) << ",target\n";
    return out.str();
}

int cmd_project(const CommonFlags& flags, const std::string& network_path) {
    const auto start = std::chrono::steady_clock::now();
    const auto spec = resolve_scenario(flags);
    const auto cfg = resolve_config(flags);
    const auto data = make_scenario(spec, cfg.seed);

    NetworkParams params;
    nlohmann::json digests = nlohmann::json::object();
    if (!network_path.empty()) {
        params = load_network(network_path);
        if (params.input_dim() != data.source_train.dim())
            throw Error("checkpoint input dim " + std::to_string(params.input_dim()) +
                        " vs scenario dim " + std::to_string(data.source_train.dim()));
        digests["network"] = digest_hex(read_text_file(network_path));
    }
    write_manifest(flags.out_dir, "project", spec, cfg, {"projection.csv", "timing.json"},
                   digests);
    if (network_path.empty()) params = prepare_source(data, cfg).pre.params;

    const auto src_emb = forward_encoder(params, data.source_train.features);
    const auto tgt_emb = forward_encoder(params, data.target.features);
    Matrix combined(src_emb.rows() + tgt_emb.rows(), src_emb.cols());
    for (std::size_t i = 0; i < src_emb.rows(); ++i)
        for (std::size_t j = 0; j < src_emb.cols(); ++j) combined(i, j) = src_emb(i, j);
    for (std::size_t i = 0; i < tgt_emb.rows(); ++i)
        for (std::size_t j = 0; j < tgt_emb.cols(); ++j)
            combined(src_emb.rows() + i, j) = tgt_emb(i, j);

    const auto model = fit_pca(combined, 2);
    const auto csv = projection_csv(project_pca(model, src_emb), data.source_train,
                                    project_pca(model, tgt_emb), data.target_eval);
    write_text_file(join_path(flags.out_dir, "projection.csv"), csv);
    std::printf("project: wrote %zu source + %zu target points\n", src_emb.rows(),
                tgt_emb.rows());
    write_timing(flags.out_dir, start);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sliced-Wasserstein domain adaptation experiments"};
    app.require_subcommand(1);

    CommonFlags pretrain_flags;
    auto* pretrain_cmd =
        app.add_subcommand("pretrain", "train on source, write network + GMM checkpoints");
    add_common_flags(pretrain_cmd, pretrain_flags);

    CommonFlags adapt_flags;
    std::string adapt_network, adapt_gmm;
    bool with_baseline = false;
    auto* adapt_cmd = app.add_subcommand(
        "adapt", "generate the pseudo dataset and run the adaptation loop");
    add_common_flags(adapt_cmd, adapt_flags);
    auto* net_opt = adapt_cmd->add_option("--network", adapt_network,
                                          "pretrained network checkpoint (default: pretrain "
                                          "internally)")
                        ->check(CLI::ExistingFile);
    adapt_cmd->add_option("--gmm", adapt_gmm, "GMM checkpoint matching --network")
        ->check(CLI::ExistingFile)
        ->needs(net_opt);
    net_opt->needs(adapt_cmd->get_option("--gmm"));
    adapt_cmd->add_flag("--with-baseline", with_baseline,
                        "also run the source-ERM + SWD alignment arm");

    CommonFlags ablate_flags;
    std::vector<std::uint64_t> ablate_seeds;
    std::vector<std::string> ablate_arms{"source_only", "baseline_eq1", "imuda", "drop_term3",
                                         "drop_term4"};
    auto* ablate_cmd = app.add_subcommand("ablate", "compare adaptation arms across seeds");
    add_common_flags(ablate_cmd, ablate_flags);
    ablate_cmd->add_option("--seeds", ablate_seeds, "explicit seed list (default: seed..seed+4)");
    ablate_cmd->add_option("--arms", ablate_arms, "arm subset to run")
        ->expected(-1);

    CommonFlags sweep_flags;
    std::string sweep_param;
    std::vector<double> sweep_values;
    std::vector<std::uint64_t> sweep_seeds;
    auto* sweep_cmd = app.add_subcommand("sweep", "rerun the pipeline across parameter values");
    add_common_flags(sweep_cmd, sweep_flags);
    sweep_cmd->add_option("--param", sweep_param, "swept parameter")
        ->required()
        ->check(CLI::IsMember({"lambda", "tau"}));
    sweep_cmd->add_option("--values", sweep_values, "parameter values (at least 2)")
        ->required()
        ->expected(-1);
    sweep_cmd->add_option("--seeds", sweep_seeds, "explicit seed list (default: seed..seed+4)");

    CommonFlags project_flags;
    std::string project_network;
    auto* project_cmd =
        app.add_subcommand("project", "export a 2D PCA view of source/target embeddings");
    add_common_flags(project_cmd, project_flags);
    project_cmd->add_option("--network", project_network, "network checkpoint to project with")
        ->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*pretrain_cmd) return cmd_pretrain(pretrain_flags);
        if (*adapt_cmd) return cmd_adapt(adapt_flags, adapt_network, adapt_gmm, with_baseline);
        if (*ablate_cmd) return cmd_ablate(ablate_flags, ablate_seeds, ablate_arms);
        if (*sweep_cmd) return cmd_sweep(sweep_flags, sweep_param, sweep_values, sweep_seeds);
        if (*project_cmd) return cmd_project(project_flags, project_network);
    } catch (const std::exception& e) {
        std::cerr << "imuda: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
