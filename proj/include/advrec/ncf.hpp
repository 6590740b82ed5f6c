#pragma once

#include <vector>

#include "advrec/interactions.hpp"

namespace advrec {

struct NcfConfig {
    std::size_t factors = 256;
    std::size_t mlp_hidden = 128;
    std::size_t epochs = 20;
    double lr = 1e-3;
    std::size_t batch_size = 1024;
    std::size_t negatives = 4;
    double init_std = 0.1;

    void validate() const;
};

/// NeuMF: a GMF branch (p_u o q_i) and a one-hidden-layer MLP branch over
/// [p_u; q_i] with separate embeddings, fused by a linear output unit.
struct NcfModel {
    Matrix Pg, Qg;  // GMF embeddings
    Matrix Pm, Qm;  // MLP embeddings
    Matrix W1;      // hidden x 2K, acting on [pm_u; qm_i]
    Vector b1;
    Vector h;       // output weights over [gmf (K); hidden]
    double b = 0.0;

    double score(std::size_t user, ItemId item) const;
    Matrix score_rows(std::size_t first, std::size_t count) const;
};

struct NcfSample {
    std::uint32_t user;
    ItemId item;
    double label;
};

/// Mean binary cross-entropy over the samples; fills a dense gradient with
/// the model's shapes when `grad` is set.
double ncf_batch_loss(const NcfModel& model, const std::vector<NcfSample>& batch, NcfModel* grad);

NcfModel ncf_init(std::size_t n_users, std::size_t n_items, const NcfConfig& cfg, std::uint64_t seed);

/// Minibatch Adam on BCE with `negatives` uniformly drawn unobserved items per positive.
NcfModel ncf_train(const InteractionMatrix& x, const NcfConfig& cfg, std::uint64_t seed);

}  // namespace advrec
