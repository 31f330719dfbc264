#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "imuda/data.hpp"

using namespace imuda;

namespace {

// Adaptation must only ever see the feature view; the unlabeled type cannot
// even name a label field.
template <typename T>
concept HasLabels = requires(T t) { t.labels; };
static_assert(HasLabels<LabeledDataset>);
static_assert(!HasLabels<UnlabeledDataset>);

std::string temp_path(const std::string& stem) {
    return std::string("/tmp/imuda-test-") + stem;
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("noiseless moons lie on their half-circles", "[data]") {
    Rng rng(1);
    const auto ds = gen_two_moons(40, 0.0, rng);
    REQUIRE(ds.size() == 40);
    REQUIRE(ds.class_count == 2);
    for (std::size_t i = 0; i < 20; ++i) {
        REQUIRE(argmax_row(ds.labels.row(i)) == 0);
        const double x = ds.features(i, 0), y = ds.features(i, 1);
        REQUIRE_THAT(x * x + y * y, Catch::Matchers::WithinAbs(1.0, 1e-12));
        REQUIRE(y >= -1e-12);
    }
    for (std::size_t i = 20; i < 40; ++i) REQUIRE(argmax_row(ds.labels.row(i)) == 1);
}

TEST_CASE("moons are balanced and seeded", "[data]") {
    Rng r1(7), r2(7), r3(8);
    const auto a = gen_two_moons(1000, 0.1, r1);
    const auto b = gen_two_moons(1000, 0.1, r2);
    const auto c = gen_two_moons(1000, 0.1, r3);
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (argmax_row(a.labels.row(i)) == 0) ++zeros;
    REQUIRE(zeros == 500);
    REQUIRE(a.features == b.features);
    REQUIRE_FALSE(a.features == c.features);

    REQUIRE_THROWS_AS(gen_two_moons(11, 0.1, r1), ValueError);
    REQUIRE_THROWS_AS(gen_two_moons(2, 0.1, r1), ValueError);
    REQUIRE_THROWS_AS(gen_two_moons(10, -0.1, r1), ValueError);
}

TEST_CASE("blobs with zero spread sit on their centers", "[data]") {
    const auto centers = Matrix::from_rows({{0.0, 0.0}, {5.0, 5.0}, {-5.0, 5.0}});
    Rng rng(2);
    const auto ds = gen_blobs(3, 100, centers, 0.0, rng);
    REQUIRE(ds.size() == 300);
    REQUIRE(ds.class_count == 3);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::size_t j = argmax_row(ds.labels.row(i));
        REQUIRE(ds.features(i, 0) == centers(j, 0));
        REQUIRE(ds.features(i, 1) == centers(j, 1));
    }
    std::vector<std::size_t> counts(3, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) ++counts[argmax_row(ds.labels.row(i))];
    REQUIRE(counts == std::vector<std::size_t>{100, 100, 100});

    const auto dup = Matrix::from_rows({{1.0, 1.0}, {1.0, 1.0}});
    REQUIRE_THROWS_AS(gen_blobs(2, 10, dup, 0.1, rng), ValueError);
    REQUIRE_THROWS_AS(gen_blobs(1, 10, centers, 0.1, rng), ValueError);
}

TEST_CASE("identity shift changes nothing", "[data]") {
    Rng rng(3);
    const auto base = gen_two_moons(100, 0.1, rng);
    Rng shift_rng(4);
    const auto shifted = apply_shift(base, DomainShiftSpec{}, shift_rng);
    REQUIRE(shifted.unlabeled.features == base.features);
    REQUIRE(shifted.evaluation.features == base.features);
    REQUIRE(shifted.evaluation.labels == base.labels);
    REQUIRE(shifted.unlabeled.name == "two-moons-shifted");
}

TEST_CASE("half-turn rotation negates a unit point", "[data]") {
    LabeledDataset base;
    base.features = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    base.labels = one_hot({0, 1}, 2);
    base.class_count = 2;
    base.name = "points";
    DomainShiftSpec spec;
    spec.rotation = 3.14159265358979323846;
    Rng rng(5);
    const auto shifted = apply_shift(base, spec, rng);
    REQUIRE_THAT(shifted.unlabeled.features(0, 0), Catch::Matchers::WithinAbs(-1.0, 1e-12));
    REQUIRE_THAT(shifted.unlabeled.features(0, 1), Catch::Matchers::WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(shifted.unlabeled.features(1, 0), Catch::Matchers::WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(shifted.unlabeled.features(1, 1), Catch::Matchers::WithinAbs(-1.0, 1e-12));
}

TEST_CASE("shift composes scale, translation, and noise", "[data]") {
    LabeledDataset base;
    base.features = Matrix::from_rows({{2.0, -1.0}});
    base.labels = one_hot({0}, 1);
    base.class_count = 1;
    base.name = "point";
    DomainShiftSpec spec;
    spec.scale = {2.0, 3.0};
    spec.translation = {1.0, -1.0};
    Rng rng(6);
    const auto shifted = apply_shift(base, spec, rng);
    REQUIRE(shifted.unlabeled.features(0, 0) == 5.0);
    REQUIRE(shifted.unlabeled.features(0, 1) == -4.0);

    DomainShiftSpec bad_rot;
    bad_rot.rotation = 0.1;
    LabeledDataset base3;
    base3.features = Matrix(2, 3);
    base3.labels = one_hot({0, 0}, 1);
    base3.class_count = 1;
    Rng r2(7);
    REQUIRE_THROWS_AS(apply_shift(base3, bad_rot, r2), ValueError);

    DomainShiftSpec bad_scale;
    bad_scale.scale = {1.0, 0.0};
    REQUIRE_THROWS_AS(apply_shift(base, bad_scale, r2), ValueError);
    DomainShiftSpec bad_t;
    bad_t.translation = {1.0};
    REQUIRE_THROWS_AS(apply_shift(base, bad_t, r2), DimensionError);
}

TEST_CASE("idx fixture loads with scaled pixels", "[data]") {
    const auto img_path = temp_path("images.idx");
    write_bytes(img_path, {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,
                           0, 255, 128, 64, 1, 2, 3, 4});
    const auto feats = load_idx_features(img_path);
    REQUIRE(feats.rows() == 2);
    REQUIRE(feats.cols() == 4);
    REQUIRE(feats(0, 0) == 0.0);
    REQUIRE(feats(0, 1) == 1.0);
    REQUIRE(feats(0, 2) == 128.0 / 255.0);
    REQUIRE(feats(0, 3) == 64.0 / 255.0);
    REQUIRE(feats(1, 0) == 1.0 / 255.0);

    const auto lbl_path = temp_path("labels.idx");
    write_bytes(lbl_path, {0, 0, 8, 1, 0, 0, 0, 2, 1, 0});
    const auto labels = load_idx_labels(lbl_path);
    REQUIRE(labels == std::vector<std::size_t>{1, 0});

    const auto ds = load_idx(img_path, lbl_path, "fixture");
    REQUIRE(ds.size() == 2);
    REQUIRE(ds.class_count == 2);
    REQUIRE(ds.labels(0, 1) == 1.0);
    REQUIRE(ds.labels(1, 0) == 1.0);

    const auto again = load_idx_features(img_path);
    REQUIRE(again == feats);
}

TEST_CASE("idx parser reports byte offsets", "[data]") {
    const auto p = temp_path("bad.idx");

    write_bytes(p, {});
    try {
        load_idx_features(p);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        REQUIRE(e.byte_offset == 0);
    }

    write_bytes(p, {7, 0, 8, 1, 0, 0, 0, 1, 9});
    try {
        load_idx_features(p);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        REQUIRE(e.byte_offset == 0);
    }

    write_bytes(p, {0, 0, 8, 1, 0, 0, 0, 5, 1, 2});
    try {
        load_idx_features(p);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        REQUIRE(e.byte_offset == 10);
    }

    write_bytes(p, {0, 0, 8, 1, 0, 0, 0, 1, 1, 2});
    REQUIRE_THROWS_AS(load_idx_features(p), ParseError);

    write_bytes(p, {0, 0, 9, 1, 0, 0, 0, 1, 1});
    try {
        load_idx_features(p);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        REQUIRE(e.byte_offset == 2);
    }
}

TEST_CASE("subsampling picks distinct seeded indices", "[data]") {
    Rng r1(9), r2(9);
    const auto a = subsample_indices(100, 20, r1);
    const auto b = subsample_indices(100, 20, r2);
    REQUIRE(a == b);
    REQUIRE(a.size() == 20);
    const std::set<std::size_t> uniq(a.begin(), a.end());
    REQUIRE(uniq.size() == 20);
    for (std::size_t i : a) REQUIRE(i < 100);
    REQUIRE_THROWS_AS(subsample_indices(5, 6, r1), ValueError);
}

TEST_CASE("gather_rows selects in order", "[data]") {
    const auto m = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}});
    const std::vector<std::size_t> idx{2, 0};
    const auto g = gather_rows(m, idx);
    REQUIRE(g == Matrix::from_rows({{5.0, 6.0}, {1.0, 2.0}}));
    const std::vector<std::size_t> bad{3};
    REQUIRE_THROWS_AS(gather_rows(m, bad), ValueError);
}

TEST_CASE("normalization standardizes and clamps", "[data]") {
    Rng rng(10);
    Matrix feats(500, 3);
    for (std::size_t i = 0; i < 500; ++i) {
        feats(i, 0) = 5.0 + 2.0 * rng.gaussian();
        feats(i, 1) = -3.0 + 0.5 * rng.gaussian();
        feats(i, 2) = 7.5;
    }
    const auto [normed, stats] = normalize(feats);
    REQUIRE(stats.clamped == std::vector<std::size_t>{2});
    for (std::size_t i = 0; i < 500; ++i) REQUIRE(normed(i, 2) == 0.0);

    const auto restats = compute_norm_stats(normed);
    REQUIRE_THAT(restats.mean[0], Catch::Matchers::WithinAbs(0.0, 1e-10));
    REQUIRE_THAT(restats.mean[1], Catch::Matchers::WithinAbs(0.0, 1e-10));
    REQUIRE_THAT(restats.stddev[0], Catch::Matchers::WithinAbs(1.0, 1e-10));
    REQUIRE_THAT(restats.stddev[1], Catch::Matchers::WithinAbs(1.0, 1e-10));
}

TEST_CASE("target normalized with source stats differs from self-normalization", "[data]") {
    Rng rng(11);
    Matrix source(200, 2), target(200, 2);
    for (std::size_t i = 0; i < 200; ++i) {
        source(i, 0) = rng.gaussian();
        source(i, 1) = rng.gaussian();
        target(i, 0) = 3.0 + 2.0 * rng.gaussian();
        target(i, 1) = -1.0 + 0.5 * rng.gaussian();
    }
    const auto src_stats = compute_norm_stats(source);
    const auto with_source = apply_norm(target, src_stats);
    const auto [with_own, own_stats] = normalize(target);
    REQUIRE_FALSE(with_source == with_own);
    const auto check = compute_norm_stats(with_source);
    REQUIRE(std::abs(check.mean[0]) > 0.5);
}

TEST_CASE("csv export writes header and rows", "[data]") {
    LabeledDataset ds;
    ds.features = Matrix::from_rows({{0.5, -1.25}, {2.0, 3.0}});
    ds.labels = one_hot({1, 0}, 2);
    ds.class_count = 2;
    ds.name = "tiny";
    std::ostringstream out;
    export_csv(ds, out);
    REQUIRE(out.str() == "f0,f1,label\n0.5,-1.25,1\n2,3,0\n");
}

TEST_CASE("batch stream cycles with reshuffles", "[data]") {
    BatchStream stream(10, 5, Rng(12));
    const auto b1 = stream.next();
    const auto b2 = stream.next();
    std::set<std::size_t> epoch(b1.begin(), b1.end());
    epoch.insert(b2.begin(), b2.end());
    REQUIRE(epoch.size() == 10);

    BatchStream same(10, 5, Rng(12));
    REQUIRE(same.next() == b1);
    REQUIRE(same.next() == b2);

    BatchStream ragged(10, 4, Rng(13));
    for (int i = 0; i < 20; ++i) {
        const auto batch = ragged.next();
        REQUIRE(batch.size() == 4);
        const std::set<std::size_t> uniq(batch.begin(), batch.end());
        REQUIRE(uniq.size() == 4);
        for (std::size_t v : batch) REQUIRE(v < 10);
    }

    REQUIRE_THROWS_AS(BatchStream(4, 5, Rng(1)), ValueError);
    REQUIRE_THROWS_AS(BatchStream(4, 0, Rng(1)), ValueError);
}
