#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>

#include "imuda/report.hpp"

using namespace imuda;

namespace {

RunReport tiny_report() {
    RunReport report;
    report.method = "imuda";
    report.seed = 42;
    report.iterations_run = 2;
    IterationRecord r1;
    r1.iteration = 1;
    r1.term1 = 0.5;
    r1.term2 = 1.0 / 3.0;
    r1.term3 = 0.25;
    r1.term4 = 2.0;
    r1.total = 0.01 * 0.5 + 0.01 * (1.0 / 3.0) + 0.25 + 2.0;
    IterationRecord r2 = r1;
    r2.iteration = 2;
    r2.source_acc = 0.75;
    r2.target_acc = 0.5;
    r2.has_eval = true;
    report.curve = {r1, r2};
    report.final_source_acc = 0.75;
    report.final_target_acc = 0.5;
    return report;
}

}  // namespace

TEST_CASE("term mask strings round-trip", "[report]") {
    CHECK(term_mask_string({true, false, false, false}) == "1000");
    CHECK(term_mask_string({true, true, true, true}) == "1111");
    const auto mask = term_mask_from_string("1011");
    CHECK(mask.term1);
    CHECK_FALSE(mask.term2);
    CHECK(mask.term3);
    CHECK(mask.term4);
    CHECK_THROWS_AS(term_mask_from_string("101"), ValueError);
    CHECK_THROWS_AS(term_mask_from_string("10x1"), ValueError);
}

TEST_CASE("config json round-trips every field", "[report]") {
    AdaptConfig cfg;
    cfg.lambda = 0.3;
    cfg.tau = 0.7;
    cfg.projections = 17;
    cfg.batch_size = 9;
    cfg.iterations = 123;
    cfg.adam = {0.01, 0.8, 0.99, 1e-6};
    cfg.seed = 99;
    cfg.term_mask = {true, false, true, false};
    cfg.pretrain_epochs = 11;
    cfg.pseudo_target_count = 77;
    cfg.pseudo_max_draws_factor = 13;
    cfg.gmm_eps = 1e-3;
    cfg.gmm_diagonal = true;
    cfg.eval_interval = 7;
    cfg.plateau_stop = true;
    cfg.plateau_rel_change = 1e-5;
    cfg.plateau_window = 20;

    const auto restored = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(restored) == config_to_json(cfg));
}

TEST_CASE("config json rejects unknown keys", "[report]") {
    CHECK_THROWS_AS(config_from_json({{"lamda", 0.1}}), ValueError);
    CHECK_THROWS_AS(config_from_json({{"adam", {{"gamma", 0.1}}}}), ValueError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::array()), ValueError);
}

TEST_CASE("config file overrides only the keys it names", "[report]") {
    const auto patched = config_from_json({{"tau", 0.5}, {"iterations", 10}});
    CHECK(patched.tau == 0.5);
    CHECK(patched.iterations == 10);
    CHECK(patched.lambda == AdaptConfig{}.lambda);
    CHECK(patched.projections == AdaptConfig{}.projections);
}

// [DERIVED] 17-significant-digit rendering: 1/3 prints as 0.33333333333333331.
TEST_CASE("curves csv renders evaluated and plain rows", "[report]") {
    const auto csv = curves_csv(tiny_report());
    const std::string expected =
        "iteration,term1,term2,term3,term4,total,source_acc,target_acc\n"
        "1,0.5,0.33333333333333331,0.25,2,2.2583333333333333,,\n"
        "2,0.5,0.33333333333333331,0.25,2,2.2583333333333333,0.75,0.5\n";
    CHECK(csv == expected);
}

TEST_CASE("run report json carries schema version and optional fields", "[report]") {
    const auto j = run_report_to_json(tiny_report());
    CHECK(j["format_version"] == 1);
    CHECK(j["method"] == "imuda");
    CHECK(j["final_source_acc"] == 0.75);
    CHECK(j["source_only_source_acc"].is_null());  // never evaluated
    CHECK(j["final_swd_source_pseudo"].is_null());
    REQUIRE(j["curve"].size() == 2);
    CHECK_FALSE(j["curve"][0].contains("source_acc"));
    CHECK(j["curve"][1]["source_acc"] == 0.75);
    CHECK(j.dump().find("wall_clock") == std::string::npos);
}

TEST_CASE("comparison tables serialize to csv and json", "[report]") {
    ComparisonTable table;
    table.kind = "ablation";
    ArmOutcome row;
    row.label = "imuda";
    row.seeds = {1, 2};
    row.source_acc = {1.0, 0.875};
    row.target_acc = {0.75, 0.625};
    row.median_source_acc = 0.9375;
    row.median_target_acc = 0.6875;
    table.rows = {row};

    const auto csv = table_csv(table);
    CHECK(csv ==
          "label,median_source_acc,median_target_acc,"
          "seed0,source_acc0,target_acc0,seed1,source_acc1,target_acc1\n"
          "imuda,0.9375,0.6875,1,1,0.75,2,0.875,0.625\n");

    const auto j = table_to_json(table);
    CHECK(j["kind"] == "ablation");
    CHECK(j["rows"][0]["label"] == "imuda");
    CHECK(j["rows"][0]["runs"][1]["seed"] == 2);
    CHECK(j["rows"][0]["runs"][1]["target_acc"] == 0.625);
}

TEST_CASE("text files round-trip and missing files fail to parse", "[report]") {
    const auto path =
        (std::filesystem::temp_directory_path() / "imuda-test-report.txt").string();
    write_text_file(path, "alpha\nbeta\n");
    CHECK(read_text_file(path) == "alpha\nbeta\n");
    std::remove(path.c_str());
    CHECK_THROWS_AS(read_text_file(path), ParseError);
}

// [DERIVED] reference FNV-1a 64 values.
TEST_CASE("digests are stable", "[report]") {
    CHECK(digest_hex("") == "cbf29ce484222325");
    CHECK(digest_hex("abc") == digest_hex("abc"));
    CHECK(digest_hex("abc") != digest_hex("abd"));
}
