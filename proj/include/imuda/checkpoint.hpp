#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "imuda/error.hpp"
#include "imuda/gmm.hpp"
#include "imuda/net.hpp"
#include "imuda/pseudo.hpp"

namespace imuda {

// Checkpoints are JSON with a format-version field and a kind tag. Doubles
// serialize with shortest round-trip precision, so save/load is bit-exact.
inline constexpr int checkpoint_format_version = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.size())
        throw ParseError("checkpoint: matrix data length " + std::to_string(data.size()) +
                         " does not match " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()), 0);
    m.data() = data;
    return m;
}

inline std::string act_to_tag(Activation a) {
    return a == Activation::tanh_fn ? "tanh" : "linear";
}

inline Activation act_from_tag(const std::string& tag) {
    if (tag == "tanh") return Activation::tanh_fn;
    if (tag == "linear") return Activation::linear;
    throw ParseError("checkpoint: unknown activation tag '" + tag + "'", 0);
}

inline nlohmann::json stack_to_json(const std::vector<Layer>& stack) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& layer : stack)
        out.push_back({{"w", matrix_to_json(layer.w)},
                       {"b", layer.b},
                       {"act", act_to_tag(layer.act)}});
    return out;
}

inline std::vector<Layer> stack_from_json(const nlohmann::json& j) {
    std::vector<Layer> stack;
    for (const auto& lj : j) {
        Layer layer;
        layer.w = matrix_from_json(lj.at("w"));
        layer.b = lj.at("b").get<std::vector<double>>();
        if (layer.b.size() != layer.w.cols())
            throw ParseError("checkpoint: bias size does not match weight cols", 0);
        layer.act = act_from_tag(lj.at("act").get<std::string>());
        stack.push_back(std::move(layer));
    }
    return stack;
}

inline nlohmann::json load_container(const std::string& path, const std::string& kind) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path, 0);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": " + e.what(), e.byte);
    }
    try {
        if (j.at("format_version").get<int>() != checkpoint_format_version)
            throw ParseError(path + ": unsupported format version", 0);
        if (j.at("kind").get<std::string>() != kind)
            throw ParseError(path + ": expected kind '" + kind + "', got '" +
                             j.at("kind").get<std::string>() + "'", 0);
        return j.at("payload");
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what(), 0);
    }
}

inline void save_container(const std::string& path, const std::string& kind,
                           nlohmann::json payload) {
    nlohmann::json j{{"format_version", checkpoint_format_version},
                     {"kind", kind},
                     {"payload", std::move(payload)}};
    std::ofstream out(path);
    if (!out) throw ValueError("cannot write " + path);
    out << j.dump(2) << "\n";
}

template <typename Fn>
inline auto rethrow_as_parse(const std::string& path, Fn&& fn) {
    try {
        return fn();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what(), 0);
    }
}

}  // namespace detail

inline void save_network(const NetworkParams& params, const std::string& path) {
    for (const auto& stack : {&params.encoder, &params.classifier})
        for (const auto& layer : *stack)
            if (!layer.w.all_finite())
                throw ValueError("save_network: non-finite parameter");
    detail::save_container(path, "network",
                           {{"encoder", detail::stack_to_json(params.encoder)},
                            {"classifier", detail::stack_to_json(params.classifier)}});
}

inline NetworkParams load_network(const std::string& path) {
    const auto payload = detail::load_container(path, "network");
    return detail::rethrow_as_parse(path, [&] {
        NetworkParams p;
        p.encoder = detail::stack_from_json(payload.at("encoder"));
        p.classifier = detail::stack_from_json(payload.at("classifier"));
        if (p.encoder.empty() || p.classifier.empty())
            throw ParseError(path + ": empty layer stack", 0);
        for (std::size_t i = 0; i + 1 < p.encoder.size(); ++i)
            if (p.encoder[i].out_dim() != p.encoder[i + 1].in_dim())
                throw ParseError(path + ": encoder layer shapes do not compose", 0);
        if (p.encoder.back().out_dim() != p.classifier.front().in_dim())
            throw ParseError(path + ": classifier input does not match embedding dim", 0);
        return p;
    });
}

// The Cholesky factor is recomputed on load; same covariance bits give the
// same factor bits.
inline void save_gmm(const GmmModel& gmm, const std::string& path) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : gmm.components)
        comps.push_back({{"weight", c.weight},
                         {"mean", c.mean},
                         {"cov", detail::matrix_to_json(c.cov)}});
    detail::save_container(path, "gmm", {{"eps", gmm.eps}, {"components", std::move(comps)}});
}

inline GmmModel load_gmm(const std::string& path) {
    const auto payload = detail::load_container(path, "gmm");
    return detail::rethrow_as_parse(path, [&] {
        GmmModel gmm;
        gmm.eps = payload.at("eps").get<double>();
        for (const auto& cj : payload.at("components")) {
            GmmComponent c;
            c.weight = cj.at("weight").get<double>();
            c.mean = cj.at("mean").get<std::vector<double>>();
            c.cov = detail::matrix_from_json(cj.at("cov"));
            if (c.cov.rows() != c.mean.size())
                throw ParseError(path + ": covariance does not match mean dim", 0);
            c.chol = cholesky(c.cov);
            gmm.components.push_back(std::move(c));
        }
        if (gmm.components.empty()) throw ParseError(path + ": no components", 0);
        return gmm;
    });
}

inline void save_pseudo(const PseudoDataset& ds, const std::string& path) {
    std::vector<std::size_t> hot(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) hot[i] = argmax_row(ds.labels.row(i));
    detail::save_container(path, "pseudo",
                           {{"samples", detail::matrix_to_json(ds.samples)},
                            {"labels", hot},
                            {"class_count", ds.labels.cols()},
                            {"confidences", ds.confidences},
                            {"component_indices", ds.component_indices},
                            {"per_class_accepted", ds.per_class_accepted},
                            {"acceptance_rate", ds.acceptance_rate},
                            {"tau", ds.tau}});
}

inline PseudoDataset load_pseudo(const std::string& path) {
    const auto payload = detail::load_container(path, "pseudo");
    return detail::rethrow_as_parse(path, [&] {
        PseudoDataset ds;
        ds.samples = detail::matrix_from_json(payload.at("samples"));
        const auto hot = payload.at("labels").get<std::vector<std::size_t>>();
        ds.labels = one_hot(hot, payload.at("class_count").get<std::size_t>());
        ds.confidences = payload.at("confidences").get<std::vector<double>>();
        ds.component_indices = payload.at("component_indices").get<std::vector<std::size_t>>();
        ds.per_class_accepted = payload.at("per_class_accepted").get<std::vector<std::size_t>>();
        ds.acceptance_rate = payload.at("acceptance_rate").get<double>();
        ds.tau = payload.at("tau").get<double>();
        if (ds.labels.rows() != ds.samples.rows() ||
            ds.confidences.size() != ds.samples.rows())
            throw ParseError(path + ": pseudo record lengths disagree", 0);
        return ds;
    });
}

}  // namespace imuda
