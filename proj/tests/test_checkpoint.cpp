#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "imuda/adam.hpp"
#include "imuda/checkpoint.hpp"
#include "imuda/gmm.hpp"
#include "imuda/net.hpp"
#include "imuda/pseudo.hpp"
#include "support/oracles.hpp"

using namespace imuda;

namespace {

std::string temp_path(const std::string& stem) {
    const auto dir = std::filesystem::temp_directory_path();
    return (dir / ("imuda-test-" + stem + ".json")).string();
}

struct FileGuard {
    std::string path;
    ~FileGuard() { std::remove(path.c_str()); }
};

NetworkParams trained_params(std::uint64_t seed) {
    NetSpec spec;
    spec.encoder_dims = {3, 5, 4};
    spec.classes = 3;
    auto params = init_network(spec, seed);
    // A few optimizer steps so biases and moments leave their zero init.
    Rng rng(seed + 1);
    auto adam = AdamState::init(params);
    for (int step = 0; step < 3; ++step) {
        const auto x = oracle::random_batch(rng, 6, 3);
        StackCache enc_cache, cls_cache;
        const auto z = forward_encoder(params, x, &enc_cache);
        const auto probs = forward_classifier(params, z, &cls_cache);
        Matrix labels(6, 3);
        for (std::size_t i = 0; i < 6; ++i) labels(i, i % 3) = 1.0;
        auto cls = backward_classifier(params, cls_cache,
                                       cross_entropy_logit_grad(probs, labels));
        auto grads = GradientSet::zeros_like(params);
        grads.accumulate_classifier(cls.layers);
        grads.accumulate_encoder(
            backward_encoder(params, enc_cache, std::move(cls.grad_embeddings)));
        adam_step(params, grads, adam);
    }
    return params;
}

bool same_stack(const std::vector<Layer>& a, const std::vector<Layer>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i].w == b[i].w) || a[i].b != b[i].b || a[i].act != b[i].act) return false;
    return true;
}

}  // namespace

TEST_CASE("network round-trip restores every parameter bit", "[checkpoint]") {
    const auto params = trained_params(7);
    FileGuard file{temp_path("net-roundtrip")};
    save_network(params, file.path);
    const auto loaded = load_network(file.path);
    CHECK(same_stack(params.encoder, loaded.encoder));
    CHECK(same_stack(params.classifier, loaded.classifier));
}

TEST_CASE("gmm round-trip restores moments and refactors identically", "[checkpoint]") {
    Rng rng(11);
    const auto z = oracle::random_batch(rng, 40, 3);
    std::vector<std::size_t> hot(40);
    for (std::size_t i = 0; i < 40; ++i) hot[i] = i % 2;
    const auto gmm = estimate_map(z, one_hot(hot, 2));

    FileGuard file{temp_path("gmm-roundtrip")};
    save_gmm(gmm, file.path);
    const auto loaded = load_gmm(file.path);
    REQUIRE(loaded.k() == gmm.k());
    CHECK(loaded.eps == gmm.eps);
    for (std::size_t j = 0; j < gmm.k(); ++j) {
        CHECK(loaded.components[j].weight == gmm.components[j].weight);
        CHECK(loaded.components[j].mean == gmm.components[j].mean);
        CHECK(loaded.components[j].cov == gmm.components[j].cov);
        // Factor is recomputed on load; identical covariance bits must give
        // identical factor bits.
        CHECK(loaded.components[j].chol == gmm.components[j].chol);
    }
}

TEST_CASE("pseudo round-trip restores samples, labels, and bookkeeping", "[checkpoint]") {
    PseudoDataset ds;
    ds.samples = Matrix::from_rows({{0.25, -1.5}, {3.0, 0.125}, {-0.75, 2.0}});
    std::vector<std::size_t> hot{1, 0, 1};
    ds.labels = one_hot(hot, 2);
    ds.confidences = {0.97, 0.99, 0.955};
    ds.component_indices = {1, 0, 1};
    ds.per_class_accepted = {1, 2};
    ds.acceptance_rate = 0.6;
    ds.tau = 0.95;

    FileGuard file{temp_path("pseudo-roundtrip")};
    save_pseudo(ds, file.path);
    const auto loaded = load_pseudo(file.path);
    CHECK(loaded.samples == ds.samples);
    CHECK(loaded.labels == ds.labels);
    CHECK(loaded.confidences == ds.confidences);
    CHECK(loaded.component_indices == ds.component_indices);
    CHECK(loaded.per_class_accepted == ds.per_class_accepted);
    CHECK(loaded.acceptance_rate == ds.acceptance_rate);
    CHECK(loaded.tau == ds.tau);
}

TEST_CASE("loading a file of the wrong kind is rejected", "[checkpoint]") {
    const auto params = trained_params(9);
    FileGuard file{temp_path("wrong-kind")};
    save_network(params, file.path);
    CHECK_THROWS_AS(load_gmm(file.path), ParseError);
    CHECK_THROWS_AS(load_pseudo(file.path), ParseError);
}

TEST_CASE("unknown format version is rejected", "[checkpoint]") {
    FileGuard file{temp_path("bad-version")};
    {
        std::ofstream out(file.path);
        out << R"({"format_version": 99, "kind": "network", "payload": {}})" << "\n";
    }
    CHECK_THROWS_AS(load_network(file.path), ParseError);
}

TEST_CASE("malformed json reports a byte offset", "[checkpoint]") {
    FileGuard file{temp_path("malformed")};
    {
        std::ofstream out(file.path);
        out << R"({"format_version": 1, "kind": "network", )" << "\n";
    }
    try {
        load_network(file.path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.byte_offset > 0);
    }
}

TEST_CASE("missing file is a parse error", "[checkpoint]") {
    CHECK_THROWS_AS(load_network(temp_path("does-not-exist")), ParseError);
}

TEST_CASE("non-finite parameters refuse to serialize", "[checkpoint]") {
    auto params = trained_params(13);
    params.encoder[0].w(0, 0) = std::numeric_limits<double>::quiet_NaN();
    FileGuard file{temp_path("nan-save")};
    CHECK_THROWS_AS(save_network(params, file.path), ValueError);
}
