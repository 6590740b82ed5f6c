#include "advrec/diffkit.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace advrec {

void TrainingObjective::second_order(const Vector&, const Matrix&, const Vector&, Vector&,
                                     Matrix&) const {
    throw CapabilityError("training objective does not provide second-order products");
}

void InnerOptimizerConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("inner learning rate must be > 0");
    if (kind == OptimizerKind::adam) {
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw ConfigError("adam betas must be in [0, 1)");
        }
        if (!(eps > 0.0)) throw ConfigError("adam eps must be > 0");
    }
}

std::size_t OptimizerState::memory_bytes() const {
    return sizeof(double) * static_cast<std::size_t>(theta.size() + m.size() + s.size());
}

OptimizerState initial_state(const InnerOptimizerConfig& cfg, Vector theta0) {
    OptimizerState st;
    st.theta = std::move(theta0);
    if (cfg.kind == OptimizerKind::adam) {
        st.m = Vector::Zero(st.theta.size());
        st.s = Vector::Zero(st.theta.size());
    }
    return st;
}

double optimizer_step(const TrainingObjective& objective, const InnerOptimizerConfig& cfg,
                      OptimizerState& state, const Matrix& fake) {
    Vector g;
    const double loss = objective.loss(state.theta, fake, &g);
    if (!std::isfinite(loss) || !g.allFinite()) {
        throw NumericalError("inner training diverged: non-finite loss", state.step);
    }
    if (cfg.kind == OptimizerKind::sgd) {
        state.theta.noalias() -= cfg.lr * g;
    } else {
        const long t = state.step + 1;
        state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
        state.s = cfg.beta2 * state.s + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        state.theta.array() -=
            cfg.lr * (state.m.array() / c1) / ((state.s.array() / c2).sqrt() + cfg.eps);
    }
    ++state.step;
    if (!state.theta.allFinite()) {
        throw NumericalError("inner training diverged: non-finite parameters", state.step);
    }
    return loss;
}

std::pair<Vector, Matrix> sgd_transition_vjps(const TrainingObjective& objective, double lr,
                                              const Vector& theta, const Matrix& fake,
                                              const Vector& v) {
    Vector hv;
    Matrix mixed = Matrix::Zero(fake.rows(), fake.cols());
    objective.second_order(theta, fake, v, hv, mixed);
    return {v - lr * hv, -lr * mixed};
}

std::pair<StateCotangent, Matrix> adam_transition_vjps(const TrainingObjective& objective,
                                                       const InnerOptimizerConfig& cfg,
                                                       const OptimizerState& before,
                                                       const Matrix& fake,
                                                       const StateCotangent& after) {
    const Eigen::Index n = before.theta.size();
    Vector g;
    objective.loss(before.theta, fake, &g);

    const double t = static_cast<double>(before.step + 1);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    const Vector m_new = cfg.beta1 * before.m + (1.0 - cfg.beta1) * g;
    const Vector s_new = cfg.beta2 * before.s + (1.0 - cfg.beta2) * g.cwiseProduct(g);

    Vector am = after.m.size() ? after.m : Vector::Zero(n);
    Vector as = after.s.size() ? after.s : Vector::Zero(n);
    Vector ag(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double s_hat = s_new[k] / c2;
        const double root = std::sqrt(s_hat);
        const double denom = root + cfg.eps;
        const double m_hat = m_new[k] / c1;
        const double a_theta = after.theta[k];
        am[k] -= cfg.lr / (c1 * denom) * a_theta;
        if (cfg.frozen_denominator) {
            as[k] = 0.0;
            ag[k] = (1.0 - cfg.beta1) * am[k];
        } else {
            // d/ds' of -lr * m_hat / (sqrt(s'/c2) + eps); the s_hat == 0 case has g == 0.
            if (root > 0.0) as[k] += cfg.lr * m_hat / (denom * denom * 2.0 * root * c2) * a_theta;
            ag[k] = (1.0 - cfg.beta1) * am[k] + 2.0 * (1.0 - cfg.beta2) * g[k] * as[k];
        }
    }

    Vector hv;
    Matrix fake_grad = Matrix::Zero(fake.rows(), fake.cols());
    objective.second_order(before.theta, fake, ag, hv, fake_grad);

    StateCotangent prev;
    prev.theta = after.theta + hv;
    prev.m = cfg.beta1 * am;
    prev.s = cfg.frozen_denominator ? Vector::Zero(n) : Vector(cfg.beta2 * as);
    return {std::move(prev), std::move(fake_grad)};
}

Trajectory::Trajectory(InnerOptimizerConfig cfg, std::size_t window)
    : cfg_(cfg), window_(window) {}

void Trajectory::push(OptimizerState state) {
    if (started_) ++total_steps_;
    started_ = true;
    snapshots_.push_back(std::move(state));
    while (snapshots_.size() > window_ + 1) snapshots_.pop_front();
}

std::size_t Trajectory::memory_bytes() const {
    std::size_t total = 0;
    for (const auto& s : snapshots_) total += s.memory_bytes();
    return total;
}

Trajectory record_inner_training(const TrainingObjective& objective, const InnerOptimizerConfig& cfg,
                                 OptimizerState start, const Matrix& fake, std::size_t steps,
                                 std::size_t window) {
    cfg.validate();
    if (window > steps) throw ConfigError("unroll window exceeds the number of inner steps");
    Trajectory traj(cfg, window);
    OptimizerState cur = std::move(start);
    for (std::size_t l = 0; l < steps; ++l) {
        OptimizerState next = cur;
        traj.add_loss(optimizer_step(objective, cfg, next, fake));
        traj.push(std::move(cur));
        cur = std::move(next);
    }
    traj.push(std::move(cur));
    return traj;
}

UnrolledGradient unrolled_gradient(const TrainingObjective& objective, const Trajectory& traj,
                                   const Matrix& fake, const Vector& final_grad,
                                   std::optional<std::size_t> unroll) {
    const auto& snaps = traj.snapshots();
    const std::size_t available = snaps.size() - 1;
    const std::size_t terms = unroll.value_or(available);
    if (terms > available) {
        throw ConfigError("unroll of " + std::to_string(terms) + " steps exceeds recorded window of " +
                          std::to_string(available));
    }
    UnrolledGradient out;
    out.fake_grad = Matrix::Zero(fake.rows(), fake.cols());
    out.terms = terms;
    if (terms == 0) return out;
    if (!objective.has_second_order()) {
        throw CapabilityError("unrolled gradient requires second-order products");
    }

    const auto& cfg = traj.optimizer();
    StateCotangent cot;
    cot.theta = final_grad;
    for (std::size_t j = snaps.size() - 1; j + terms >= snaps.size(); --j) {
        const OptimizerState& before = snaps[j - 1];
        if (cfg.kind == OptimizerKind::sgd) {
            auto [v_prev, fake_part] = sgd_transition_vjps(objective, cfg.lr, before.theta, fake, cot.theta);
            cot.theta = std::move(v_prev);
            out.fake_grad += fake_part;
        } else {
            auto [prev, fake_part] = adam_transition_vjps(objective, cfg, before, fake, cot);
            cot = std::move(prev);
            out.fake_grad += fake_part;
        }
    }
    return out;
}

namespace {

void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_doubles(std::ofstream& out, const Vector& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void dump_trajectory(const Trajectory& traj, const std::string& path) {
    static_assert(std::endian::native == std::endian::little, "dump format assumes little-endian");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write trajectory dump: " + path);
    const auto& snaps = traj.snapshots();
    const bool moments = traj.optimizer().kind == OptimizerKind::adam;
    out.write("ADVTRAJ1", 8);
    write_u64(out, snaps.size());
    write_u64(out, snaps.empty() ? 0 : static_cast<std::uint64_t>(snaps.front().theta.size()));
    write_u64(out, moments ? 1 : 0);
    for (const auto& s : snaps) {
        write_u64(out, static_cast<std::uint64_t>(s.step));
        write_doubles(out, s.theta);
        if (moments) {
            write_doubles(out, s.m);
            write_doubles(out, s.s);
        }
    }
    if (!out) throw IoError("failed writing trajectory dump: " + path);
}

}  // namespace advrec
