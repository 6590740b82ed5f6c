#include "advrec/attack.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

namespace advrec {

namespace {

constexpr std::uint64_t kInnerSeedOffset = 1;
constexpr std::uint64_t kInitSeedOffset = 2;

bool uses_partial(GradientMode mode) {
    return mode != GradientMode::truncated;
}

std::size_t unroll_length(const AttackConfig& cfg) {
    switch (cfg.mode) {
        case GradientMode::exact: return cfg.inner_steps;
        case GradientMode::truncated:
        case GradientMode::partial_plus_truncated: return cfg.window;
        case GradientMode::partial_only: return 0;
    }
    return 0;
}

}  // namespace

InteractionMatrix FakeProfileBlock::to_interactions() const {
    return InteractionMatrix::from_dense(values, 0.5);
}

Matrix project(const Matrix& values, double rho) {
    return (values.array() >= rho).cast<double>().matrix();
}

GradientMode parse_gradient_mode(const std::string& name) {
    if (name == "exact") return GradientMode::exact;
    if (name == "truncated") return GradientMode::truncated;
    if (name == "partial_only") return GradientMode::partial_only;
    if (name == "partial_plus_truncated") return GradientMode::partial_plus_truncated;
    throw ConfigError("unknown gradient mode '" + name + "'");
}

std::string gradient_mode_name(GradientMode mode) {
    switch (mode) {
        case GradientMode::exact: return "exact";
        case GradientMode::truncated: return "truncated";
        case GradientMode::partial_only: return "partial_only";
        case GradientMode::partial_plus_truncated: return "partial_plus_truncated";
    }
    return "?";
}

InitScheme parse_init_scheme(const std::string& name) {
    if (name == "uniform") return InitScheme::uniform;
    if (name == "sampled_from_normal_users") return InitScheme::sampled_from_normal_users;
    if (name == "targets_preset") return InitScheme::targets_preset;
    throw ConfigError("unknown init scheme '" + name + "'");
}

std::string init_scheme_name(InitScheme scheme) {
    switch (scheme) {
        case InitScheme::uniform: return "uniform";
        case InitScheme::sampled_from_normal_users: return "sampled_from_normal_users";
        case InitScheme::targets_preset: return "targets_preset";
    }
    return "?";
}

SurrogateKind parse_surrogate_kind(const std::string& name) {
    if (name == "wrmf_sgd") return SurrogateKind::wrmf_sgd;
    if (name == "wrmf_als") return SurrogateKind::wrmf_als;
    if (name == "itemae") return SurrogateKind::itemae;
    throw ConfigError("unknown surrogate '" + name + "'");
}

std::string surrogate_kind_name(SurrogateKind kind) {
    switch (kind) {
        case SurrogateKind::wrmf_sgd: return "wrmf_sgd";
        case SurrogateKind::wrmf_als: return "wrmf_als";
        case SurrogateKind::itemae: return "itemae";
    }
    return "?";
}

FakeProfileBlock initialize_fake_block(const InteractionMatrix& normal, std::size_t n_fake,
                                       InitScheme scheme, const std::vector<ItemId>& targets,
                                       double eps0, std::uint64_t seed) {
    if (!(eps0 >= 0.0 && eps0 <= 1.0)) throw ConfigError("init_eps must lie in [0, 1]");
    const auto n_items = static_cast<Eigen::Index>(normal.n_items());
    Rng rng(seed);
    FakeProfileBlock block;
    block.values = Matrix::Zero(static_cast<Eigen::Index>(n_fake), n_items);
    if (scheme == InitScheme::sampled_from_normal_users) {
        if (normal.n_users() == 0) throw ConfigError("no normal users to sample from");
        std::vector<std::size_t> users(normal.n_users());
        std::iota(users.begin(), users.end(), std::size_t{0});
        std::shuffle(users.begin(), users.end(), rng);
        for (std::size_t v = 0; v < n_fake; ++v) {
            for (ItemId i : normal.row(users[v % users.size()])) block.values(v, i) = 1.0;
        }
        return block;
    }
    std::uniform_real_distribution<double> unif(0.0, eps0);
    for (Eigen::Index k = 0; k < block.values.size(); ++k) block.values.data()[k] = unif(rng);
    if (scheme == InitScheme::targets_preset) {
        for (ItemId t : targets) {
            if (t >= normal.n_items()) throw ConfigError("target item out of range");
            block.values.col(t).setOnes();
        }
    }
    return block;
}

FakeProfileBlock rand_filter_attack(const std::vector<ItemId>& targets, std::size_t n_fake,
                                    std::size_t n_filler, std::size_t n_items, std::uint64_t seed) {
    std::vector<char> is_target(n_items, 0);
    for (ItemId t : targets) {
        if (t >= n_items) throw ConfigError("target item out of range");
        is_target[t] = 1;
    }
    std::vector<ItemId> pool;
    for (std::size_t i = 0; i < n_items; ++i) {
        if (!is_target[i]) pool.push_back(static_cast<ItemId>(i));
    }
    if (n_filler > pool.size()) throw ConfigError("n_filler exceeds the number of non-target items");
    FakeProfileBlock block;
    block.phase = BlockPhase::binarized;
    block.values = Matrix::Zero(static_cast<Eigen::Index>(n_fake), static_cast<Eigen::Index>(n_items));
    for (std::size_t v = 0; v < n_fake; ++v) {
        for (ItemId t : targets) block.values(v, t) = 1.0;
        for (ItemId i : sample_items(pool, n_filler, derive_seed(seed, v))) block.values(v, i) = 1.0;
    }
    return block;
}

std::unique_ptr<SurrogateModel> make_surrogate(const SurrogateSpec& spec,
                                               const InteractionMatrix& normal, std::size_t n_fake) {
    switch (spec.kind) {
        case SurrogateKind::wrmf_sgd: return std::make_unique<WrmfObjective>(normal, n_fake, spec.wrmf);
        case SurrogateKind::itemae: return std::make_unique<ItemAeObjective>(normal, n_fake, spec.itemae);
        case SurrogateKind::wrmf_als: break;
    }
    throw CapabilityError("the ALS surrogate is not trained by gradient steps");
}

void AttackConfig::validate() const {
    if (n_fake == 0) throw ConfigError("attack: n_fake must be >= 1");
    if (outer_iters == 0) throw ConfigError("attack: outer_iters must be >= 1");
    if (inner_steps == 0) throw ConfigError("attack: inner_steps must be >= 1");
    if (window > inner_steps) throw ConfigError("attack: window must not exceed inner_steps");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("attack: rho must lie in (0, 1)");
    if (!(outer_lr >= 0.0) || !std::isfinite(outer_lr)) throw ConfigError("attack: outer_lr must be >= 0");
    if (!(init_eps >= 0.0 && init_eps <= 1.0)) throw ConfigError("attack: init_eps must lie in [0, 1]");
    inner.validate();
}

void check_attack_capability(const SurrogateSpec& surrogate, const AttackConfig& cfg) {
    if (surrogate.kind == SurrogateKind::wrmf_als && cfg.mode != GradientMode::partial_only) {
        throw CapabilityError("the ALS surrogate supports only gradient_mode=partial_only");
    }
    if (surrogate.kind == SurrogateKind::wrmf_sgd && cfg.mode == GradientMode::partial_only) {
        throw CapabilityError(
            "partial_only with wrmf_sgd: predictions R = P Q^T do not read the fake block, so "
            "dL_adv/dXhat = 0 and the attack cannot proceed");
    }
}

AdversarialGradient adversarial_gradient(const SurrogateModel& surrogate, const AdvObjective& objective,
                                         const AttackConfig& cfg, const Matrix& fake,
                                         const OptimizerState& start) {
    if (cfg.mode == GradientMode::partial_only && !surrogate.predictions_read_fake()) {
        throw CapabilityError(
            "partial_only: this surrogate's predictions do not read the fake block, so the "
            "direct partial dL_adv/dXhat is identically zero");
    }
    const std::size_t unroll = unroll_length(cfg);
    auto traj = record_inner_training(surrogate, cfg.inner, start, fake, cfg.inner_steps, unroll);
    const Vector& theta = traj.final_state().theta;

    AdversarialGradient out;
    Matrix dscores;
    out.adv_loss = objective.value(surrogate.predict(theta, fake), &dscores);
    Vector theta_grad;
    out.grad = Matrix::Zero(fake.rows(), fake.cols());
    surrogate.predict_vjp(theta, fake, dscores, theta_grad,
                          uses_partial(cfg.mode) ? &out.grad : nullptr);
    if (unroll > 0) {
        auto unrolled = unrolled_gradient(surrogate, traj, fake, theta_grad, unroll);
        out.grad += unrolled.fake_grad;
        out.unrolled_terms = unrolled.terms;
    }
    out.final_state = traj.final_state();
    return out;
}

AdversarialGradient als_adversarial_gradient(const InteractionMatrix& normal,
                                             const SurrogateSpec& spec,
                                             const AdvObjective& objective, const Matrix& fake,
                                             std::uint64_t seed) {
    const auto als = train_wrmf_als(normal, fake, spec.wrmf, spec.als, seed);
    AdversarialGradient out;
    out.adv_loss = objective.value(als.params.P * als.params.Q.transpose());
    out.grad = als_adv_partial(als.params, normal, fake, spec.wrmf, objective);
    return out;
}

AttackResult learn_fake_users(const InteractionMatrix& normal, const SurrogateSpec& surrogate,
                              const AdvObjective& objective, const AttackConfig& cfg,
                              const AttackProgress& progress) {
    cfg.validate();
    objective.validate(normal.n_items());
    check_attack_capability(surrogate, cfg);
    const bool als = surrogate.kind == SurrogateKind::wrmf_als;

    const std::uint64_t inner_seed = derive_seed(cfg.seed, kInnerSeedOffset);
    auto block = initialize_fake_block(normal, cfg.n_fake, cfg.init, objective.targets, cfg.init_eps,
                                       derive_seed(cfg.seed, kInitSeedOffset));
    Matrix fake = std::move(block.values);

    std::unique_ptr<SurrogateModel> model;
    OptimizerState start;
    if (!als) {
        model = make_surrogate(surrogate, normal, cfg.n_fake);
        start = initial_state(cfg.inner, model->init_params(inner_seed));
    }
    auto evaluate = [&](const Matrix& f) {
        if (als) return als_adversarial_gradient(normal, surrogate, objective, f, inner_seed);
        return adversarial_gradient(*model, objective, cfg, f, start);
    };

    AttackResult result;
    AdversarialGradient current = evaluate(fake);
    for (std::size_t t = 0; t < cfg.outer_iters; ++t) {
        result.loss_before.push_back(current.adv_loss);
        result.grad_norm.push_back(current.grad.norm());
        if (progress) progress(t, current.adv_loss);
        if (!cfg.reset_inner && !als) start = current.final_state;

        fake -= cfg.outer_lr * current.grad;
        fake = cfg.relax ? Matrix(fake.cwiseMax(0.0).cwiseMin(1.0)) : project(fake, cfg.rho);

        current = evaluate(fake);
        result.loss_after.push_back(current.adv_loss);
    }
    result.block.values = cfg.relax ? project(fake, cfg.rho) : std::move(fake);
    result.block.phase = BlockPhase::binarized;
    return result;
}

std::vector<RhoCandidate> grid_search_rho(const InteractionMatrix& normal,
                                          const SurrogateSpec& surrogate,
                                          const AdvObjective& objective, const AttackConfig& cfg,
                                          const std::vector<double>& rhos, std::size_t jobs) {
    if (rhos.empty()) throw ConfigError("grid_search_rho: empty rho grid");
    for (double rho : rhos) {
        auto c = cfg;
        c.rho = rho;
        c.validate();
    }
    jobs = std::max<std::size_t>(1, jobs);
    std::vector<RhoCandidate> out(rhos.size());
    for (std::size_t first = 0; first < rhos.size(); first += jobs) {
        std::vector<std::future<void>> running;
        for (std::size_t k = first; k < std::min(rhos.size(), first + jobs); ++k) {
            running.push_back(std::async(std::launch::async, [&, k] {
                auto c = cfg;
                c.rho = rhos[k];
                out[k].rho = rhos[k];
                out[k].result = learn_fake_users(normal, surrogate, objective, c);
                out[k].final_loss = out[k].result.loss_after.back();
            }));
        }
        for (auto& f : running) f.get();
    }
    std::stable_sort(out.begin(), out.end(), [](const RhoCandidate& a, const RhoCandidate& b) {
        return a.final_loss < b.final_loss;
    });
    return out;
}

}  // namespace advrec
