#pragma once

#include "advrec/interactions.hpp"

namespace advrec {

struct CmlConfig {
    std::size_t factors = 256;
    double margin = 10.0;
    std::size_t epochs = 20;
    double lr = 1e-3;
    std::size_t batch_size = 1024;
    std::size_t negatives = 4;
    double init_std = 0.1;

    void validate() const;
};

/// User and item points in a shared metric space, each kept inside the unit ball.
struct CmlModel {
    Matrix U;
    Matrix V;

    /// Negative squared euclidean distance for rows [first, first + count).
    Matrix score_rows(std::size_t first, std::size_t count) const;
};

/// max(0, margin + |u - v_pos|^2 - |u - v_neg|^2).
double cml_hinge(const Vector& u, const Vector& v_pos, const Vector& v_neg, double margin);

/// Minibatch Adam on the hinge loss with uniformly sampled negatives; every
/// touched row is projected back onto the unit ball after each step.
CmlModel cml_train(const InteractionMatrix& x, const CmlConfig& cfg, std::uint64_t seed);

}  // namespace advrec
