#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "imuda/experiment.hpp"

using namespace imuda;

namespace {

ScenarioSpec small_blobs() {
    ScenarioSpec spec;
    spec.kind = "blobs";
    spec.train_n = 60;
    spec.test_n = 40;
    spec.rotation_deg = 30.0;
    return spec;
}

AdaptConfig small_config() {
    AdaptConfig cfg;
    cfg.batch_size = 8;
    cfg.projections = 16;
    cfg.iterations = 60;
    cfg.pretrain_epochs = 30;
    cfg.tau = 0.8;
    return cfg;
}

bool tables_equal(const ComparisonTable& a, const ComparisonTable& b) {
    if (a.kind != b.kind || a.rows.size() != b.rows.size()) return false;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        const auto& ra = a.rows[i];
        const auto& rb = b.rows[i];
        if (ra.label != rb.label || ra.seeds != rb.seeds) return false;
        if (ra.source_acc != rb.source_acc || ra.target_acc != rb.target_acc) return false;
        if (ra.median_source_acc != rb.median_source_acc) return false;
        if (ra.median_target_acc != rb.median_target_acc) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("scenario construction is deterministic and transductive", "[experiment]") {
    ScenarioSpec spec;
    spec.train_n = 200;
    spec.test_n = 100;
    const auto a = make_scenario(spec, 42);
    const auto b = make_scenario(spec, 42);
    CHECK(a.source_train.features == b.source_train.features);
    CHECK(a.target.features == b.target.features);

    CHECK(a.source_train.size() == 200);
    CHECK(a.source_test.size() == 100);
    CHECK(a.target.size() == 200);
    // The unlabeled view and the evaluation view cover the same points.
    CHECK(a.target.features == a.target_eval.features);
    CHECK(a.target_eval.class_count == 2);

    const auto c = make_scenario(spec, 43);
    CHECK_FALSE(a.source_train.features == c.source_train.features);
}

TEST_CASE("target rotation moves the shifted domain away from the source", "[experiment]") {
    ScenarioSpec spec;
    spec.train_n = 200;
    spec.test_n = 100;
    spec.rotation_deg = 0.0;
    const auto flat = make_scenario(spec, 7);
    spec.rotation_deg = 35.0;
    const auto rotated = make_scenario(spec, 7);
    // Same base draw, so the only difference is the rotation.
    CHECK(flat.source_train.features == rotated.source_train.features);
    CHECK_FALSE(flat.target.features == rotated.target.features);
}

TEST_CASE("unknown scenarios are rejected with the valid list", "[experiment]") {
    ScenarioSpec spec;
    spec.kind = "office-31";
    try {
        make_scenario(spec, 1);
        FAIL("expected ValueError");
    } catch (const ValueError& e) {
        CHECK(std::string(e.what()).find("two-moons") != std::string::npos);
        CHECK(std::string(e.what()).find("blobs") != std::string::npos);
    }
}

TEST_CASE("median of odd and even counts", "[experiment]") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK(median({5.0}) == 5.0);
    CHECK_THROWS_AS(median({}), ValueError);
}

TEST_CASE("arm names and masks", "[experiment]") {
    for (const auto arm : default_arms()) CHECK(arm_from_name(arm_name(arm)) == arm);
    CHECK_THROWS_AS(arm_from_name("dropout"), ValueError);

    const auto full = arm_mask(Arm::imuda);
    CHECK((full.term1 && full.term2 && full.term3 && full.term4));
    CHECK_FALSE(arm_mask(Arm::drop_term3).term3);
    CHECK(arm_mask(Arm::drop_term3).term4);
    CHECK_FALSE(arm_mask(Arm::drop_term4).term4);
    CHECK(arm_mask(Arm::drop_term4).term3);
    CHECK_THROWS_AS(arm_mask(Arm::source_only), ValueError);
}

TEST_CASE("ablation emits one row per arm in declared order", "[experiment][slow]") {
    const auto table = run_ablation(small_blobs(), small_config(), {1, 2});
    REQUIRE(table.rows.size() == 5);
    CHECK(table.kind == "ablation");
    CHECK(table.rows[0].label == "source_only");
    CHECK(table.rows[1].label == "baseline_eq1");
    CHECK(table.rows[2].label == "imuda");
    CHECK(table.rows[3].label == "drop_term3");
    CHECK(table.rows[4].label == "drop_term4");
    for (const auto& row : table.rows) {
        REQUIRE(row.seeds.size() == 2);
        REQUIRE(row.target_acc.size() == 2);
        for (const auto acc : row.target_acc) {
            CHECK(acc >= 0.0);
            CHECK(acc <= 1.0);
        }
        CHECK(row.median_target_acc == 0.5 * (row.target_acc[0] + row.target_acc[1]));
    }
}

TEST_CASE("ablation results do not depend on the worker count", "[experiment][slow]") {
    const auto spec = small_blobs();
    const auto cfg = small_config();
    const auto serial = run_ablation(spec, cfg, {1, 2, 3}, default_arms(), 1);
    const auto pooled = run_ablation(spec, cfg, {1, 2, 3}, default_arms(), 3);
    CHECK(tables_equal(serial, pooled));
}

TEST_CASE("ablation rejects empty inputs", "[experiment]") {
    CHECK_THROWS_AS(run_ablation(small_blobs(), small_config(), {}), ValueError);
    CHECK_THROWS_AS(run_ablation(small_blobs(), small_config(), {1}, {}), ValueError);
}

TEST_CASE("sweep validates its arguments", "[experiment]") {
    CHECK_THROWS_AS(sweep("dropout", {0.1, 0.2}, small_blobs(), small_config(), {1}),
                    ValueError);
    CHECK_THROWS_AS(sweep("tau", {0.5}, small_blobs(), small_config(), {1}), ValueError);
    CHECK_THROWS_AS(sweep("tau", {0.5, 0.9}, small_blobs(), small_config(), {}), ValueError);
    // Values must still satisfy the config invariants.
    CHECK_THROWS_AS(sweep("tau", {0.5, 1.5}, small_blobs(), small_config(), {1}), ValueError);
}

TEST_CASE("tau sweep emits one row per value", "[experiment][slow]") {
    const auto table = sweep("tau", {0.5, 0.9}, small_blobs(), small_config(), {1});
    CHECK(table.kind == "sweep-tau");
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].label == "0.5");
    CHECK(table.rows[1].label == "0.9");
    for (const auto& row : table.rows) {
        CHECK(row.target_acc.size() == 1);
        CHECK(std::isfinite(row.median_target_acc));
    }
}

TEST_CASE("lambda sweep labels carry the swept values", "[experiment][slow]") {
    const auto table = sweep("lambda", {1e-3, 1e-2}, small_blobs(), small_config(), {1});
    CHECK(table.kind == "sweep-lambda");
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].label == "0.001");
    CHECK(table.rows[1].label == "0.01");
}
