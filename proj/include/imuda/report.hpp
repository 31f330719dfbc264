#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "imuda/adapt.hpp"
#include "imuda/error.hpp"
#include "imuda/experiment.hpp"
#include "imuda/rng.hpp"

namespace imuda {

inline constexpr int report_format_version = 1;

// 17 significant digits: enough for doubles to round-trip through text.
inline std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string term_mask_string(const TermMask& mask) {
    std::string s(4, '0');
    s[0] = mask.term1 ? '1' : '0';
    s[1] = mask.term2 ? '1' : '0';
    s[2] = mask.term3 ? '1' : '0';
    s[3] = mask.term4 ? '1' : '0';
    return s;
}

inline TermMask term_mask_from_string(const std::string& s) {
    if (s.size() != 4 || s.find_first_not_of("01") != std::string::npos)
        throw ValueError("term mask must be 4 characters of 0/1, got '" + s + "'");
    return {s[0] == '1', s[1] == '1', s[2] == '1', s[3] == '1'};
}

inline nlohmann::json config_to_json(const AdaptConfig& cfg) {
    return nlohmann::json{{"lambda", cfg.lambda},
                          {"tau", cfg.tau},
                          {"projections", cfg.projections},
                          {"batch_size", cfg.batch_size},
                          {"iterations", cfg.iterations},
                          {"adam", {{"lr", cfg.adam.lr},
                                    {"beta1", cfg.adam.beta1},
                                    {"beta2", cfg.adam.beta2},
                                    {"eps", cfg.adam.eps}}},
                          {"seed", cfg.seed},
                          {"term_mask", term_mask_string(cfg.term_mask)},
                          {"pretrain_epochs", cfg.pretrain_epochs},
                          {"pseudo_target_count", cfg.pseudo_target_count},
                          {"pseudo_max_draws_factor", cfg.pseudo_max_draws_factor},
                          {"gmm_eps", cfg.gmm_eps},
                          {"gmm_diagonal", cfg.gmm_diagonal},
                          {"eval_interval", cfg.eval_interval},
                          {"plateau_stop", cfg.plateau_stop},
                          {"plateau_rel_change", cfg.plateau_rel_change},
                          {"plateau_window", cfg.plateau_window}};
}

// Applies the keys present in j on top of base; unknown keys are an error so
// config-file typos fail loudly instead of silently using defaults.
inline AdaptConfig config_from_json(const nlohmann::json& j, AdaptConfig base = {}) {
    if (!j.is_object()) throw ValueError("config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "lambda") base.lambda = value.get<double>();
        else if (key == "tau") base.tau = value.get<double>();
        else if (key == "projections") base.projections = value.get<std::size_t>();
        else if (key == "batch_size") base.batch_size = value.get<std::size_t>();
        else if (key == "iterations") base.iterations = value.get<std::size_t>();
        else if (key == "adam") {
            if (!value.is_object()) throw ValueError("config: adam must be an object");
            for (const auto& [ak, av] : value.items()) {
                if (ak == "lr") base.adam.lr = av.get<double>();
                else if (ak == "beta1") base.adam.beta1 = av.get<double>();
                else if (ak == "beta2") base.adam.beta2 = av.get<double>();
                else if (ak == "eps") base.adam.eps = av.get<double>();
                else throw ValueError("config: unknown adam key '" + ak + "'");
            }
        } else if (key == "seed") base.seed = value.get<std::uint64_t>();
        else if (key == "term_mask") base.term_mask = term_mask_from_string(value.get<std::string>());
        else if (key == "pretrain_epochs") base.pretrain_epochs = value.get<std::size_t>();
        else if (key == "pseudo_target_count") base.pseudo_target_count = value.get<std::size_t>();
        else if (key == "pseudo_max_draws_factor")
            base.pseudo_max_draws_factor = value.get<std::size_t>();
        else if (key == "gmm_eps") base.gmm_eps = value.get<double>();
        else if (key == "gmm_diagonal") base.gmm_diagonal = value.get<bool>();
        else if (key == "eval_interval") base.eval_interval = value.get<std::size_t>();
        else if (key == "plateau_stop") base.plateau_stop = value.get<bool>();
        else if (key == "plateau_rel_change") base.plateau_rel_change = value.get<double>();
        else if (key == "plateau_window") base.plateau_window = value.get<std::size_t>();
        else throw ValueError("config: unknown key '" + key + "'");
    }
    return base;
}

namespace detail {

inline nlohmann::json acc_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

}  // namespace detail

// Wall clock stays out on purpose: reruns of the same manifest must produce
// byte-identical reports.
inline nlohmann::json run_report_to_json(const RunReport& report) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& rec : report.curve) {
        nlohmann::json row{{"iteration", rec.iteration}, {"term1", rec.term1},
                           {"term2", rec.term2},         {"term3", rec.term3},
                           {"term4", rec.term4},         {"total", rec.total}};
        if (rec.has_eval) {
            row["source_acc"] = rec.source_acc;
            row["target_acc"] = rec.target_acc;
        }
        curve.push_back(std::move(row));
    }
    return nlohmann::json{{"format_version", report_format_version},
                          {"method", report.method},
                          {"seed", report.seed},
                          {"config", config_to_json(report.config)},
                          {"iterations_run", report.iterations_run},
                          {"final_source_acc", detail::acc_or_null(report.final_source_acc)},
                          {"final_target_acc", detail::acc_or_null(report.final_target_acc)},
                          {"source_only_source_acc",
                           detail::acc_or_null(report.source_only_source_acc)},
                          {"source_only_target_acc",
                           detail::acc_or_null(report.source_only_target_acc)},
                          {"final_swd_source_pseudo",
                           detail::acc_or_null(report.final_swd_source_pseudo)},
                          {"final_swd_target_pseudo",
                           detail::acc_or_null(report.final_swd_target_pseudo)},
                          {"final_swd_source_target",
                           detail::acc_or_null(report.final_swd_source_target)},
                          {"pseudo_acceptance_rate",
                           detail::acc_or_null(report.pseudo_acceptance_rate)},
                          {"curve", std::move(curve)}};
}

inline std::string curves_csv(const RunReport& report) {
    std::ostringstream out;
    out << "iteration,term1,term2,term3,term4,total,source_acc,target_acc\n";
    for (const auto& rec : report.curve) {
        out << rec.iteration << ',' << fmt17(rec.term1) << ',' << fmt17(rec.term2) << ','
            << fmt17(rec.term3) << ',' << fmt17(rec.term4) << ',' << fmt17(rec.total) << ',';
        if (rec.has_eval) out << fmt17(rec.source_acc) << ',' << fmt17(rec.target_acc);
        else out << ',';
        out << '\n';
    }
    return out.str();
}

inline nlohmann::json table_to_json(const ComparisonTable& table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : table.rows) {
        nlohmann::json runs = nlohmann::json::array();
        for (std::size_t i = 0; i < row.seeds.size(); ++i)
            runs.push_back({{"seed", row.seeds[i]},
                            {"source_acc", row.source_acc[i]},
                            {"target_acc", row.target_acc[i]}});
        rows.push_back({{"label", row.label},
                        {"median_source_acc", row.median_source_acc},
                        {"median_target_acc", row.median_target_acc},
                        {"runs", std::move(runs)}});
    }
    return nlohmann::json{{"format_version", report_format_version},
                          {"kind", table.kind},
                          {"rows", std::move(rows)}};
}

inline std::string table_csv(const ComparisonTable& table) {
    std::ostringstream out;
    out << "label,median_source_acc,median_target_acc";
    const std::size_t seed_count = table.rows.empty() ? 0 : table.rows.front().seeds.size();
    for (std::size_t i = 0; i < seed_count; ++i)
        out << ",seed" << i << ",source_acc" << i << ",target_acc" << i;
    out << '\n';
    for (const auto& row : table.rows) {
        out << row.label << ',' << fmt17(row.median_source_acc) << ','
            << fmt17(row.median_target_acc);
        for (std::size_t i = 0; i < row.seeds.size(); ++i)
            out << ',' << row.seeds[i] << ',' << fmt17(row.source_acc[i]) << ','
                << fmt17(row.target_acc[i]);
        out << '\n';
    }
    return out.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw Error("write to '" + path + "' failed");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'", 0);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::string digest_hex(std::string_view bytes) {
    return hex64(detail::fnv1a64(bytes));
}

}  // namespace imuda
