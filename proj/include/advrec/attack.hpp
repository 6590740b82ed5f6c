#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "advrec/diffkit.hpp"
#include "advrec/interactions.hpp"
#include "advrec/itemae.hpp"
#include "advrec/objective.hpp"
#include "advrec/wrmf.hpp"

namespace advrec {

enum class BlockPhase { continuous, binarized };

/// Fake-user x item block. Continuous entries lie in [0, 1]; binarized
/// entries are exactly 0 or 1.
struct FakeProfileBlock {
    Matrix values;
    BlockPhase phase = BlockPhase::continuous;

    std::size_t n_fake() const { return static_cast<std::size_t>(values.rows()); }
    /// Binarized block as interaction rows (entries >= 0.5).
    InteractionMatrix to_interactions() const;
};

/// Entry >= rho becomes 1, otherwise 0.
Matrix project(const Matrix& values, double rho);

enum class GradientMode { exact, truncated, partial_only, partial_plus_truncated };

GradientMode parse_gradient_mode(const std::string& name);
std::string gradient_mode_name(GradientMode mode);

enum class InitScheme { uniform, sampled_from_normal_users, targets_preset };

InitScheme parse_init_scheme(const std::string& name);
std::string init_scheme_name(InitScheme scheme);

/// Continuous starting block.
///   uniform:                   U(0, eps0) entries
///   sampled_from_normal_users: copies of randomly chosen normal rows
///   targets_preset:            U(0, eps0) with target columns set to 1
FakeProfileBlock initialize_fake_block(const InteractionMatrix& normal, std::size_t n_fake,
                                       InitScheme scheme, const std::vector<ItemId>& targets,
                                       double eps0, std::uint64_t seed);

/// Each row clicks every target plus `n_filler` distinct uniformly random
/// non-target items.
FakeProfileBlock rand_filter_attack(const std::vector<ItemId>& targets, std::size_t n_fake,
                                    std::size_t n_filler, std::size_t n_items, std::uint64_t seed);

enum class SurrogateKind { wrmf_sgd, wrmf_als, itemae };

SurrogateKind parse_surrogate_kind(const std::string& name);
std::string surrogate_kind_name(SurrogateKind kind);

struct SurrogateSpec {
    SurrogateKind kind = SurrogateKind::wrmf_sgd;
    WrmfConfig wrmf;
    AlsConfig als;
    ItemAeConfig itemae;
};

/// Differentiable surrogate for the gradient-trained kinds (not wrmf_als).
std::unique_ptr<SurrogateModel> make_surrogate(const SurrogateSpec& spec,
                                               const InteractionMatrix& normal, std::size_t n_fake);

struct AttackConfig {
    std::size_t n_fake = 100;
    std::size_t outer_iters = 50;   // T
    std::size_t inner_steps = 100;  // L
    double outer_lr = 1.0;          // eta
    InnerOptimizerConfig inner;     // alpha = inner.lr
    std::size_t window = 100;       // tau, used by the truncated modes
    double rho = 0.2;
    GradientMode mode = GradientMode::exact;
    /// Re-initialize theta (same seed) at every outer iteration.
    bool reset_inner = true;
    /// Keep the block continuous (clipped to [0, 1]) and binarize only at the end.
    bool relax = false;
    InitScheme init = InitScheme::uniform;
    double init_eps = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Rejects surrogate and gradient-mode pairs that cannot produce a gradient.
void check_attack_capability(const SurrogateSpec& surrogate, const AttackConfig& cfg);

struct AdversarialGradient {
    double adv_loss = 0.0;
    Matrix grad;
    OptimizerState final_state;
    std::size_t unrolled_terms = 0;
};

/// One evaluation of L_adv and its gradient w.r.t. the fake block: trains the
/// surrogate from `start` on (normal, fake), then combines the direct partial
/// term and the unrolled term as selected by cfg.mode.
AdversarialGradient adversarial_gradient(const SurrogateModel& surrogate, const AdvObjective& objective,
                                         const AttackConfig& cfg, const Matrix& fake,
                                         const OptimizerState& start);

/// ALS variant: trains WRMF by ALS and returns the closed-form partial.
AdversarialGradient als_adversarial_gradient(const InteractionMatrix& normal,
                                             const SurrogateSpec& spec,
                                             const AdvObjective& objective, const Matrix& fake,
                                             std::uint64_t seed);

struct AttackResult {
    FakeProfileBlock block;  // binarized
    /// L_adv at the surrogate trained on the block before each update.
    std::vector<double> loss_before;
    /// L_adv at the surrogate retrained on the updated block.
    std::vector<double> loss_after;
    std::vector<double> grad_norm;
};

using AttackProgress = std::function<void(std::size_t iter, double loss_before)>;

/// Outer projected-gradient loop over the fake block.
AttackResult learn_fake_users(const InteractionMatrix& normal, const SurrogateSpec& surrogate,
                              const AdvObjective& objective, const AttackConfig& cfg,
                              const AttackProgress& progress = {});

struct RhoCandidate {
    double rho = 0.0;
    double final_loss = 0.0;
    AttackResult result;
};

/// Runs one attack per rho (up to `jobs` concurrently) and orders the
/// candidates by final L_adv, lowest first.
std::vector<RhoCandidate> grid_search_rho(const InteractionMatrix& normal,
                                          const SurrogateSpec& surrogate,
                                          const AdvObjective& objective, const AttackConfig& cfg,
                                          const std::vector<double>& rhos, std::size_t jobs = 1);

}  // namespace advrec
