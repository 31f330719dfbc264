#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "imuda/error.hpp"
#include "imuda/gmm.hpp"
#include "imuda/net.hpp"

namespace imuda {

// Confident pseudo-dataset in embedding space: GMM draws the frozen
// classifier labels with confidence strictly above tau.
struct PseudoDataset {
    Matrix samples;                                // N_p x F
    Matrix labels;                                 // N_p x k, one-hot
    std::vector<double> confidences;               // max softmax prob per sample
    std::vector<std::size_t> component_indices;    // generating component, diagnostics only
    std::vector<std::size_t> per_class_accepted;   // accepted count per label class
    double acceptance_rate = 0.0;
    double tau = 0.0;

    std::size_t size() const { return samples.rows(); }
};

// Rejection-samples the GMM through the classifier until target_count samples
// pass the confidence filter or max_draws attempts are spent. Draw order is
// the acceptance order, so the result is fully determined by the seed.
inline PseudoDataset generate_pseudo(const GmmModel& gmm, const NetworkParams& params,
                                     double tau, std::size_t target_count,
                                     std::size_t max_draws, Rng& rng) {
    if (!(tau > 0.0 && tau < 1.0))
        throw ValueError("generate_pseudo: tau must lie strictly inside (0,1)");
    if (target_count == 0) throw ValueError("generate_pseudo: target_count must be positive");
    if (max_draws == 0) throw ValueError("generate_pseudo: max_draws must be positive");
    if (gmm.dim() != params.embedding_dim())
        throw DimensionError("generate_pseudo: model dim " + std::to_string(gmm.dim()) +
                             " does not match classifier input dim " +
                             std::to_string(params.embedding_dim()));

    const std::size_t f = gmm.dim();
    const std::size_t k = params.class_count();

    std::vector<double> accepted_samples;
    std::vector<std::size_t> accepted_labels;
    std::vector<double> confidences;
    std::vector<std::size_t> components;
    std::vector<std::size_t> per_class(k, 0);

    std::size_t attempted = 0;
    while (attempted < max_draws && accepted_labels.size() < target_count) {
        auto [z, comp] = sample(gmm, rng, 1);
        ++attempted;
        const auto probs = forward_classifier(params, z);
        const auto row = probs.row(0);
        const std::size_t label = argmax_row(row);
        const double conf = row[label];
        if (conf > tau) {
            accepted_samples.insert(accepted_samples.end(), z.row(0).begin(), z.row(0).end());
            accepted_labels.push_back(label);
            confidences.push_back(conf);
            components.push_back(comp[0]);
            ++per_class[label];
        }
    }

    const std::size_t accepted = accepted_labels.size();
    const double rate = static_cast<double>(accepted) / static_cast<double>(attempted);
    if (accepted < std::max<std::size_t>(1, target_count / 10))
        throw ConfidenceError(
            "generate_pseudo: only " + std::to_string(accepted) + " of " +
                std::to_string(attempted) + " draws cleared confidence " + std::to_string(tau),
            rate, per_class);

    PseudoDataset out;
    out.samples = Matrix(accepted, f);
    std::copy(accepted_samples.begin(), accepted_samples.end(), out.samples.data().begin());
    out.labels = one_hot(accepted_labels, k);
    out.confidences = std::move(confidences);
    out.component_indices = std::move(components);
    out.per_class_accepted = std::move(per_class);
    out.acceptance_rate = rate;
    out.tau = tau;
    return out;
}

}  // namespace imuda
