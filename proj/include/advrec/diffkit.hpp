#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "advrec/common.hpp"

namespace advrec {

/// Full-batch training objective of a surrogate model whose parameters are
/// packed in one flat vector. Normal-user data is bound at construction; the
/// continuous fake block (n_fake x n_items) is passed to every call.
class TrainingObjective {
public:
    virtual ~TrainingObjective() = default;

    virtual std::size_t num_params() const = 0;
    virtual std::size_t n_fake() const = 0;
    virtual std::size_t n_items() const = 0;

    /// Training loss at theta; writes the parameter gradient when `grad` is set.
    virtual double loss(const Vector& theta, const Matrix& fake, Vector* grad) const = 0;

    virtual bool has_second_order() const { return false; }

    /// Second-order products for direction v:
    ///   hv = (d^2 L / d theta^2) v
    ///   fake_pullback += (d grad_theta L / d fake)^T v
    /// Throws CapabilityError unless has_second_order().
    virtual void second_order(const Vector& theta, const Matrix& fake, const Vector& v, Vector& hv,
                              Matrix& fake_pullback) const;
};

enum class OptimizerKind { sgd, adam };

struct InnerOptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Treat sqrt(v_hat) + eps as a constant when differentiating Adam.
    bool frozen_denominator = false;

    void validate() const;
};

/// Parameters plus optimizer moments after `step` updates.
struct OptimizerState {
    Vector theta;
    Vector m;  // empty for SGD
    Vector s;  // empty for SGD
    long step = 0;

    std::size_t memory_bytes() const;
};

OptimizerState initial_state(const InnerOptimizerConfig& cfg, Vector theta0);

/// Applies one update in place. Returns the training loss at the pre-update
/// parameters; throws NumericalError on non-finite loss or parameters.
double optimizer_step(const TrainingObjective& objective, const InnerOptimizerConfig& cfg,
                      OptimizerState& state, const Matrix& fake);

/// Cotangent of a full optimizer state (parameters and moments).
struct StateCotangent {
    Vector theta;
    Vector m;
    Vector s;
};

/// Pullbacks of v through theta' = theta - lr * grad L(theta, fake):
/// returns (v . d theta'/d theta, v . d theta'/d fake).
std::pair<Vector, Matrix> sgd_transition_vjps(const TrainingObjective& objective, double lr,
                                              const Vector& theta, const Matrix& fake,
                                              const Vector& v);

/// Pullbacks through one Adam update including the moment recursions and
/// bias correction (or with a frozen denominator when configured).
std::pair<StateCotangent, Matrix> adam_transition_vjps(const TrainingObjective& objective,
                                                       const InnerOptimizerConfig& cfg,
                                                       const OptimizerState& before,
                                                       const Matrix& fake,
                                                       const StateCotangent& after);

/// Parameter snapshots of an inner training run. Only the last `window` + 1
/// states are retained, so memory is proportional to window * |theta|.
class Trajectory {
public:
    Trajectory(InnerOptimizerConfig cfg, std::size_t window);

    void push(OptimizerState state);

    const InnerOptimizerConfig& optimizer() const { return cfg_; }
    std::size_t window() const { return window_; }
    std::size_t total_steps() const { return total_steps_; }
    const std::deque<OptimizerState>& snapshots() const { return snapshots_; }
    const OptimizerState& final_state() const { return snapshots_.back(); }
    /// Training loss before each recorded step (all L steps, not just the window).
    const std::vector<double>& losses() const { return losses_; }
    void add_loss(double loss) { losses_.push_back(loss); }
    std::size_t memory_bytes() const;

private:
    InnerOptimizerConfig cfg_;
    std::size_t window_;
    std::size_t total_steps_ = 0;
    bool started_ = false;
    std::deque<OptimizerState> snapshots_;
    std::vector<double> losses_;
};

/// Runs `steps` optimizer updates from `start`, keeping the last `window` + 1 states.
Trajectory record_inner_training(const TrainingObjective& objective, const InnerOptimizerConfig& cfg,
                                 OptimizerState start, const Matrix& fake, std::size_t steps,
                                 std::size_t window);

struct UnrolledGradient {
    Matrix fake_grad;
    std::size_t terms = 0;  // number of transitions backpropagated
};

/// Reverse accumulation of dL_adv/d fake over the last `unroll` transitions
/// (defaults to the whole recorded window). `final_grad` is dL_adv/d theta at
/// the final parameters; moments carry zero cotangent at the end.
/// Throws ConfigError when `unroll` exceeds the recorded window.
UnrolledGradient unrolled_gradient(const TrainingObjective& objective, const Trajectory& traj,
                                   const Matrix& fake, const Vector& final_grad,
                                   std::optional<std::size_t> unroll = std::nullopt);

/// Debug dump: "ADVTRAJ1", u64 count, u64 n_params, u64 has_moments, then per
/// snapshot i64 step followed by theta (and m, s) as little-endian float64.
void dump_trajectory(const Trajectory& traj, const std::string& path);

}  // namespace advrec
