#pragma once

#include <utility>
#include <vector>

#include "advrec/interactions.hpp"
#include "advrec/objective.hpp"
#include "advrec/surrogate.hpp"

namespace advrec {

struct WrmfConfig {
    std::size_t factors = 16;
    double l2 = 1.0;
    double w_pos = 20.0;
    double w_neg = 1.0;
    double init_std = 0.1;
    /// Fake entries at or above this value get w_pos; the weight is piecewise
    /// constant in the fake data and is not differentiated.
    double positive_threshold = 0.5;

    void validate() const;
};

/// Normal-user (P), fake-user (F) and item (Q) factor tables.
struct WrmfParams {
    Matrix P;
    Matrix F;
    Matrix Q;

    Vector pack() const;
    static WrmfParams unpack(const Vector& theta, std::size_t n_users, std::size_t n_fake,
                             std::size_t n_items, std::size_t factors);
};

/// Weighted squared error over normal and fake entries plus
/// l2 * (|P|^2 + |F|^2 + |Q|^2). Missing normal entries are handled through
/// the factor Gramians, so cost is O(nnz K + (U + I) K^2 + V I K).
class WrmfObjective final : public SurrogateModel {
public:
    WrmfObjective(const InteractionMatrix& normal, std::size_t n_fake, WrmfConfig cfg);

    std::size_t num_params() const override;
    std::size_t n_users() const override { return normal_.n_users(); }
    std::size_t n_fake() const override { return n_fake_; }
    std::size_t n_items() const override { return normal_.n_items(); }
    const WrmfConfig& config() const { return cfg_; }

    double loss(const Vector& theta, const Matrix& fake, Vector* grad) const override;
    bool has_second_order() const override { return true; }
    void second_order(const Vector& theta, const Matrix& fake, const Vector& v, Vector& hv,
                      Matrix& fake_pullback) const override;

    Vector init_params(std::uint64_t seed) const override;
    Matrix predict(const Vector& theta, const Matrix& fake) const override;
    void predict_vjp(const Vector& theta, const Matrix& fake, const Matrix& dscores,
                     Vector& theta_grad, Matrix* fake_grad) const override;
    bool predictions_read_fake() const override { return false; }

    WrmfParams unpack(const Vector& theta) const;
    /// Per-entry weights for the fake block.
    Matrix fake_weights(const Matrix& fake) const;

private:
    InteractionMatrix normal_;
    std::size_t n_fake_;
    WrmfConfig cfg_;
};

double wrmf_loss(const WrmfParams& params, const InteractionMatrix& normal, const Matrix& fake,
                 const WrmfConfig& cfg);

struct WrmfTrainResult {
    WrmfParams params;
    Trajectory trajectory;
};

/// Full-batch gradient training (SGD or Adam) from a seeded init, recording
/// the last `window` + 1 states.
WrmfTrainResult train_wrmf_sgd(const InteractionMatrix& normal, const Matrix& fake,
                               const WrmfConfig& cfg, const InnerOptimizerConfig& opt,
                               std::size_t steps, std::uint64_t seed, std::size_t window = 0);

struct AlsConfig {
    std::size_t sweeps = 10;
    double tol = 1e-6;
};

struct AlsResult {
    WrmfParams params;
    /// Loss at initialization followed by the loss after each sweep.
    std::vector<double> losses;
};

/// Alternating closed-form ridge solves for user rows (P, F) then item rows (Q).
AlsResult train_wrmf_als(const InteractionMatrix& normal, const Matrix& fake, const WrmfConfig& cfg,
                         const AlsConfig& als, std::uint64_t seed);

/// Closed-form user rows for fixed Q: returns {P, F}.
std::pair<Matrix, Matrix> solve_user_factors(const Matrix& Q, const InteractionMatrix& normal,
                                             const Matrix& fake, const WrmfConfig& cfg);

/// Closed-form item rows for fixed P and F:
///   q_i = ([P;F]^T W_i [P;F] + l2 I)^-1 [P;F]^T W_i [x_i; xhat_i].
Matrix solve_item_factors(const Matrix& P, const Matrix& F, const InteractionMatrix& normal,
                          const Matrix& fake, const WrmfConfig& cfg);

/// dL_adv/d fake through the closed-form item solve with P and F held
/// constant (R = P Q(fake)^T).
Matrix als_adv_partial(const WrmfParams& params, const InteractionMatrix& normal, const Matrix& fake,
                       const WrmfConfig& cfg, const AdvObjective& objective);

}  // namespace advrec
