#pragma once

#include <vector>

#include "advrec/interactions.hpp"

namespace advrec {

struct MultVaeConfig {
    std::size_t hidden = 512;
    std::size_t latent = 256;
    std::size_t epochs = 50;
    double lr = 1e-3;
    std::size_t batch_size = 500;
    double beta_max = 0.2;
    /// beta rises linearly from 0 to beta_max over this fraction of all updates.
    double anneal_fraction = 0.5;
    double dropout = 0.5;
    double init_std = 0.01;

    void validate() const;
};

/// Encoder x -> tanh(W0 x + b0) -> (mu, logvar); decoder z -> tanh(Wd1 z + bd1) -> logits.
struct MultVaeModel {
    Matrix W0, Wmu, Wlv, Wd1, Wd2;  // out x in
    Vector b0, bmu, blv, bd1, bd2;

    /// Posterior means for the given (L2-normalized) user rows.
    Matrix encode_mean(const InteractionMatrix& x, std::size_t first, std::size_t count) const;
    /// Decoder logits at the posterior mean.
    Matrix score_rows(const InteractionMatrix& x, std::size_t first, std::size_t count) const;
};

/// KL(N(mu, exp(logvar)) || N(0, I)) summed over dimensions.
double gaussian_kl(const Vector& mu, const Vector& logvar);

struct MultVaeLoss {
    double nll = 0.0;  // mean multinomial negative log-likelihood
    double kl = 0.0;   // mean KL
};

/// Mean loss nll + beta * kl on a batch of rows with fixed reparameterization
/// noise `eps` (rows x latent) and no dropout. Fills gradients when `grad` is set.
MultVaeLoss multvae_batch_loss(const MultVaeModel& model, const Matrix& rows, const Matrix& eps,
                               double beta, MultVaeModel* grad);

MultVaeModel multvae_init(std::size_t n_items, const MultVaeConfig& cfg, std::uint64_t seed);

MultVaeModel multvae_train(const InteractionMatrix& x, const MultVaeConfig& cfg, std::uint64_t seed);

}  // namespace advrec
