#pragma once

#include "advrec/diffkit.hpp"

namespace advrec {

/// A training objective that also produces ranking scores for normal users,
/// so an adversarial loss can be evaluated and pulled back.
class SurrogateModel : public TrainingObjective {
public:
    virtual std::size_t n_users() const = 0;

    /// Seeded N(0, init_std^2) parameters.
    virtual Vector init_params(std::uint64_t seed) const = 0;

    /// Scores for normal users, n_users x n_items.
    virtual Matrix predict(const Vector& theta, const Matrix& fake) const = 0;

    /// Pulls dL/dR back to the parameters and, if the model's predictions read
    /// the fake block, to the fake block (added into *fake_grad).
    virtual void predict_vjp(const Vector& theta, const Matrix& fake, const Matrix& dscores,
                             Vector& theta_grad, Matrix* fake_grad) const = 0;

    /// Whether predictions depend directly on the fake block (non-zero partial).
    virtual bool predictions_read_fake() const = 0;
};

}  // namespace advrec
