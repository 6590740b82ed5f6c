#pragma once

#include <vector>

#include "advrec/interactions.hpp"
#include "advrec/surrogate.hpp"

namespace advrec {

struct ItemAeConfig {
    /// Hidden widths between the (n_users + n_fake)-wide input and output.
    std::vector<std::size_t> hidden{64, 32, 64};
    double l2 = 1e-3;
    double w_pos = 20.0;
    double w_neg = 1.0;
    double init_std = 0.1;
    double positive_threshold = 0.5;

    void validate() const;
};

/// Dense layers W_l (out x in) and biases b_l. Hidden layers use tanh, the
/// last layer is linear.
struct ItemAeParams {
    std::vector<Matrix> W;
    std::vector<Vector> b;

    Vector pack() const;
    static ItemAeParams unpack(const Vector& theta, const std::vector<std::size_t>& layer_sizes);
    std::vector<std::size_t> layer_sizes() const;
};

/// Reconstruction r+ of one item column x+ = [x_i; xhat_i].
Vector itemae_forward(const ItemAeParams& params, const Vector& x_plus);

/// Item-based autoencoder over columns of [X; Xhat]. Training loss is the
/// weighted squared reconstruction error plus l2 * sum |W_l|^2 (biases are
/// not penalized). Scores for normal users are the first n_users rows of the
/// reconstruction, so they read the fake block directly.
class ItemAeObjective final : public SurrogateModel {
public:
    ItemAeObjective(const InteractionMatrix& normal, std::size_t n_fake, ItemAeConfig cfg);

    std::size_t num_params() const override;
    std::size_t n_users() const override { return normal_.rows(); }
    std::size_t n_fake() const override { return n_fake_; }
    std::size_t n_items() const override { return normal_.cols(); }
    const ItemAeConfig& config() const { return cfg_; }
    const std::vector<std::size_t>& layer_sizes() const { return sizes_; }

    double loss(const Vector& theta, const Matrix& fake, Vector* grad) const override;
    bool has_second_order() const override { return true; }
    void second_order(const Vector& theta, const Matrix& fake, const Vector& v, Vector& hv,
                      Matrix& fake_pullback) const override;

    Vector init_params(std::uint64_t seed) const override;
    Matrix predict(const Vector& theta, const Matrix& fake) const override;
    void predict_vjp(const Vector& theta, const Matrix& fake, const Matrix& dscores,
                     Vector& theta_grad, Matrix* fake_grad) const override;
    bool predictions_read_fake() const override { return true; }

    /// dL_train / d fake at theta.
    Matrix fake_gradient(const Vector& theta, const Matrix& fake) const;

private:
    Matrix stacked(const Matrix& fake) const;
    Matrix weights(const Matrix& input) const;

    Matrix normal_;  // dense 0/1 normal-user rows
    std::size_t n_fake_;
    ItemAeConfig cfg_;
    std::vector<std::size_t> sizes_;
};

struct ItemAeTrainResult {
    ItemAeParams params;
    Trajectory trajectory;
};

ItemAeTrainResult train_itemae(const InteractionMatrix& normal, const Matrix& fake,
                               const ItemAeConfig& cfg, const InnerOptimizerConfig& opt,
                               std::size_t steps, std::uint64_t seed, std::size_t window = 0);

}  // namespace advrec
