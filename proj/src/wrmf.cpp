#include "advrec/wrmf.hpp"

#include <cmath>

namespace advrec {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

struct FactorViews {
    ConstMap P, F, Q;
};

FactorViews views(const Vector& theta, std::size_t n_users, std::size_t n_fake, std::size_t n_items,
                  std::size_t k) {
    const double* base = theta.data();
    const auto U = static_cast<Eigen::Index>(n_users), V = static_cast<Eigen::Index>(n_fake),
               I = static_cast<Eigen::Index>(n_items), K = static_cast<Eigen::Index>(k);
    return {ConstMap(base, U, K), ConstMap(base + U * K, V, K), ConstMap(base + (U + V) * K, I, K)};
}

}  // namespace

void WrmfConfig::validate() const {
    if (factors == 0) throw ConfigError("wrmf: factors must be >= 1");
    if (!(l2 >= 0.0)) throw ConfigError("wrmf: l2 must be >= 0");
    if (!(w_neg > 0.0) || !(w_pos >= w_neg)) throw ConfigError("wrmf: need w_pos >= w_neg > 0");
    if (!(init_std > 0.0)) throw ConfigError("wrmf: init_std must be > 0");
}

Vector WrmfParams::pack() const {
    Vector theta(P.size() + F.size() + Q.size());
    std::copy(P.data(), P.data() + P.size(), theta.data());
    std::copy(F.data(), F.data() + F.size(), theta.data() + P.size());
    std::copy(Q.data(), Q.data() + Q.size(), theta.data() + P.size() + F.size());
    return theta;
}

WrmfParams WrmfParams::unpack(const Vector& theta, std::size_t n_users, std::size_t n_fake,
                              std::size_t n_items, std::size_t factors) {
    if (static_cast<std::size_t>(theta.size()) != (n_users + n_fake + n_items) * factors) {
        throw ConfigError("wrmf: parameter vector has the wrong length");
    }
    auto v = views(theta, n_users, n_fake, n_items, factors);
    return {v.P, v.F, v.Q};
}

WrmfObjective::WrmfObjective(const InteractionMatrix& normal, std::size_t n_fake, WrmfConfig cfg)
    : normal_(normal), n_fake_(n_fake), cfg_(cfg) {
    cfg_.validate();
}

std::size_t WrmfObjective::num_params() const {
    return (n_users() + n_fake_ + n_items()) * cfg_.factors;
}

WrmfParams WrmfObjective::unpack(const Vector& theta) const {
    return WrmfParams::unpack(theta, n_users(), n_fake_, n_items(), cfg_.factors);
}

Matrix WrmfObjective::fake_weights(const Matrix& fake) const {
    return (fake.array() >= cfg_.positive_threshold)
        .select(Matrix::Constant(fake.rows(), fake.cols(), cfg_.w_pos),
                Matrix::Constant(fake.rows(), fake.cols(), cfg_.w_neg));
}

Vector WrmfObjective::init_params(std::uint64_t seed) const {
    Rng rng(seed);
    Matrix theta(static_cast<Eigen::Index>(num_params()), 1);
    fill_normal(theta, cfg_.init_std, rng);
    return theta.col(0);
}

double WrmfObjective::loss(const Vector& theta, const Matrix& fake, Vector* grad) const {
    const std::size_t K = cfg_.factors;
    auto [P, F, Q] = views(theta, n_users(), n_fake_, n_items(), K);
    const double wp = cfg_.w_pos, wn = cfg_.w_neg, lambda = cfg_.l2;

    const Matrix PtP = P.transpose() * P;
    const Matrix QtQ = Q.transpose() * Q;
    // sum over all cells of w_neg * r^2 = w_neg * tr(PtP QtQ); observed cells are corrected below.
    double total = wn * PtP.cwiseProduct(QtQ).sum();

    Matrix SQ, StP;
    if (grad) {
        SQ = Matrix::Zero(P.rows(), K);
        StP = Matrix::Zero(Q.rows(), K);
    }
    for (std::size_t u = 0; u < normal_.n_users(); ++u) {
        const auto pu = P.row(u);
        for (ItemId i : normal_.row(u)) {
            const double r = pu.dot(Q.row(i));
            total += wp * (1.0 - r) * (1.0 - r) - wn * r * r;
            if (grad) {
                const double s = (wp - wn) * r - wp;
                SQ.row(u) += s * Q.row(i);
                StP.row(i) += s * pu;
            }
        }
    }

    const Matrix wf = fake_weights(fake);
    const Matrix fake_err = wf.cwiseProduct(F * Q.transpose() - fake);
    total += fake_err.cwiseProduct(F * Q.transpose() - fake).sum();
    total += lambda * (P.squaredNorm() + F.squaredNorm() + Q.squaredNorm());

    if (grad) {
        grad->resize(theta.size());
        auto g = views(*grad, n_users(), n_fake_, n_items(), K);
        MutMap gP(const_cast<double*>(g.P.data()), P.rows(), K);
        MutMap gF(const_cast<double*>(g.F.data()), F.rows(), K);
        MutMap gQ(const_cast<double*>(g.Q.data()), Q.rows(), K);
        gP.noalias() = 2.0 * (wn * P * QtQ + SQ) + 2.0 * lambda * P;
        gF.noalias() = 2.0 * fake_err * Q + 2.0 * lambda * F;
        gQ.noalias() = 2.0 * (wn * Q * PtP + StP) + 2.0 * fake_err.transpose() * F + 2.0 * lambda * Q;
    }
    return total;
}

void WrmfObjective::second_order(const Vector& theta, const Matrix& fake, const Vector& v,
                                 Vector& hv, Matrix& fake_pullback) const {
    const std::size_t K = cfg_.factors;
    auto [P, F, Q] = views(theta, n_users(), n_fake_, n_items(), K);
    auto [dP, dF, dQ] = views(v, n_users(), n_fake_, n_items(), K);
    const double wp = cfg_.w_pos, wn = cfg_.w_neg, lambda = cfg_.l2;

    const Matrix PtP = P.transpose() * P;
    const Matrix QtQ = Q.transpose() * Q;

    // Observed-cell corrections: S = (wp-wn) r - wp, D = (wp-wn) dr.
    Matrix DQ = Matrix::Zero(P.rows(), K), SdQ = Matrix::Zero(P.rows(), K);
    Matrix DtP = Matrix::Zero(Q.rows(), K), StdP = Matrix::Zero(Q.rows(), K);
    for (std::size_t u = 0; u < normal_.n_users(); ++u) {
        const auto pu = P.row(u);
        const auto dpu = dP.row(u);
        for (ItemId i : normal_.row(u)) {
            const auto qi = Q.row(i);
            const auto dqi = dQ.row(i);
            const double r = pu.dot(qi);
            const double dr = dpu.dot(qi) + pu.dot(dqi);
            const double s = (wp - wn) * r - wp;
            const double d = (wp - wn) * dr;
            DQ.row(u) += d * qi;
            SdQ.row(u) += s * dqi;
            DtP.row(i) += d * pu;
            StdP.row(i) += s * dpu;
        }
    }

    const Matrix wf = fake_weights(fake);
    const Matrix fake_err = wf.cwiseProduct(F * Q.transpose() - fake);
    const Matrix dfake_err = wf.cwiseProduct(dF * Q.transpose() + F * dQ.transpose());

    hv.resize(theta.size());
    auto h = views(hv, n_users(), n_fake_, n_items(), K);
    MutMap hP(const_cast<double*>(h.P.data()), P.rows(), K);
    MutMap hF(const_cast<double*>(h.F.data()), F.rows(), K);
    MutMap hQ(const_cast<double*>(h.Q.data()), Q.rows(), K);

    const Matrix dQtQ_sym = dQ.transpose() * Q + Q.transpose() * dQ;
    const Matrix dPtP_sym = dP.transpose() * P + P.transpose() * dP;
    hP.noalias() = 2.0 * (wn * (dP * QtQ + P * dQtQ_sym) + DQ + SdQ) + 2.0 * lambda * dP;
    hF.noalias() = 2.0 * (dfake_err * Q + fake_err * dQ) + 2.0 * lambda * dF;
    hQ.noalias() = 2.0 * (wn * (Q * dPtP_sym + dQ * PtP) + DtP + StdP) +
                   2.0 * (dfake_err.transpose() * F + fake_err.transpose() * dF) + 2.0 * lambda * dQ;

    // d(grad_F, grad_Q)/d fake pulled back along (dF, dQ) is -2 W o (dF Q^T + F dQ^T).
    fake_pullback.noalias() -= 2.0 * dfake_err;
}

Matrix WrmfObjective::predict(const Vector& theta, const Matrix&) const {
    auto v = views(theta, n_users(), n_fake_, n_items(), cfg_.factors);
    return v.P * v.Q.transpose();
}

void WrmfObjective::predict_vjp(const Vector& theta, const Matrix&, const Matrix& dscores,
                                Vector& theta_grad, Matrix*) const {
    const std::size_t K = cfg_.factors;
    auto v = views(theta, n_users(), n_fake_, n_items(), K);
    theta_grad = Vector::Zero(theta.size());
    auto g = views(theta_grad, n_users(), n_fake_, n_items(), K);
    MutMap gP(const_cast<double*>(g.P.data()), v.P.rows(), K);
    MutMap gQ(const_cast<double*>(g.Q.data()), v.Q.rows(), K);
    gP.noalias() = dscores * v.Q;
    gQ.noalias() = dscores.transpose() * v.P;
    // Scores are P Q^T only: the fake block is never read here.
}

double wrmf_loss(const WrmfParams& params, const InteractionMatrix& normal, const Matrix& fake,
                 const WrmfConfig& cfg) {
    WrmfObjective objective(normal, params.F.rows(), cfg);
    return objective.loss(params.pack(), fake, nullptr);
}

WrmfTrainResult train_wrmf_sgd(const InteractionMatrix& normal, const Matrix& fake,
                               const WrmfConfig& cfg, const InnerOptimizerConfig& opt,
                               std::size_t steps, std::uint64_t seed, std::size_t window) {
    WrmfObjective objective(normal, fake.rows(), cfg);
    auto traj = record_inner_training(objective, opt, initial_state(opt, objective.init_params(seed)),
                                      fake, steps, window);
    auto params = objective.unpack(traj.final_state().theta);
    return {std::move(params), std::move(traj)};
}

namespace {

Vector solve_spd(const Matrix& M, const Vector& b) {
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) {
        throw ConfigError("wrmf als: singular normal matrix (use l2 > 0)");
    }
    Vector x = llt.solve(b);
    if (!x.allFinite()) throw ConfigError("wrmf als: singular normal matrix (use l2 > 0)");
    return x;
}

Matrix positive_mask(const Matrix& fake, double threshold) {
    return (fake.array() >= threshold).cast<double>().matrix();
}

}  // namespace

std::pair<Matrix, Matrix> solve_user_factors(const Matrix& Q, const InteractionMatrix& normal,
                                             const Matrix& fake, const WrmfConfig& cfg) {
    const Eigen::Index K = Q.cols();
    const double wp = cfg.w_pos, wn = cfg.w_neg;
    const Eigen::MatrixXd base =
        wn * (Q.transpose() * Q) + cfg.l2 * Eigen::MatrixXd::Identity(K, K);

    Matrix P(normal.n_users(), K);
    for (std::size_t u = 0; u < normal.n_users(); ++u) {
        Eigen::MatrixXd M = base;
        Vector b = Vector::Zero(K);
        for (ItemId i : normal.row(u)) {
            const Vector q = Q.row(i).transpose();
            M.noalias() += (wp - wn) * q * q.transpose();
            b += wp * q;
        }
        P.row(u) = solve_spd(M, b).transpose();
    }

    const Matrix mask = positive_mask(fake, cfg.positive_threshold);
    const Matrix weighted = (wn + (wp - wn) * mask.array()).matrix().cwiseProduct(fake);
    const Matrix B = weighted * Q;  // row v: Q^T W_v xhat_v
    Matrix F(fake.rows(), K);
    for (Eigen::Index v = 0; v < fake.rows(); ++v) {
        Eigen::MatrixXd M = base;
        for (Eigen::Index i = 0; i < fake.cols(); ++i) {
            if (mask(v, i) > 0.0) M.noalias() += (wp - wn) * Q.row(i).transpose() * Q.row(i);
        }
        F.row(v) = solve_spd(M, B.row(v).transpose()).transpose();
    }
    return {std::move(P), std::move(F)};
}

namespace {

/// Builds the item-side normal matrices [P;F]^T W_i [P;F] + l2 I lazily.
class ItemSystem {
public:
    ItemSystem(const Matrix& P, const Matrix& F, const InteractionMatrix& normal, const Matrix& fake,
               const WrmfConfig& cfg)
        : P_(P), F_(F), fake_(fake), cfg_(cfg), columns_(normal.columns()),
          mask_(positive_mask(fake, cfg.positive_threshold)) {
        const Eigen::Index K = P.cols();
        base_ = cfg.w_neg * (P.transpose() * P + F.transpose() * F) +
                cfg.l2 * Eigen::MatrixXd::Identity(K, K);
    }

    Eigen::MatrixXd normal_matrix(Eigen::Index i) const {
        const double extra = cfg_.w_pos - cfg_.w_neg;
        Eigen::MatrixXd M = base_;
        for (auto u : columns_[i]) M.noalias() += extra * P_.row(u).transpose() * P_.row(u);
        for (Eigen::Index v = 0; v < F_.rows(); ++v) {
            if (mask_(v, i) > 0.0) M.noalias() += extra * F_.row(v).transpose() * F_.row(v);
        }
        return M;
    }

    Vector rhs(Eigen::Index i) const {
        Vector b = Vector::Zero(P_.cols());
        for (auto u : columns_[i]) b += cfg_.w_pos * P_.row(u).transpose();
        for (Eigen::Index v = 0; v < F_.rows(); ++v) {
            const double w = mask_(v, i) > 0.0 ? cfg_.w_pos : cfg_.w_neg;
            b += w * fake_(v, i) * F_.row(v).transpose();
        }
        return b;
    }

    double weight(Eigen::Index v, Eigen::Index i) const {
        return mask_(v, i) > 0.0 ? cfg_.w_pos : cfg_.w_neg;
    }

private:
    const Matrix& P_;
    const Matrix& F_;
    const Matrix& fake_;
    const WrmfConfig& cfg_;
    std::vector<std::vector<std::uint32_t>> columns_;
    Matrix mask_;
    Eigen::MatrixXd base_;
};

}  // namespace

Matrix solve_item_factors(const Matrix& P, const Matrix& F, const InteractionMatrix& normal,
                          const Matrix& fake, const WrmfConfig& cfg) {
    ItemSystem sys(P, F, normal, fake, cfg);
    Matrix Q(normal.n_items(), P.cols());
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
        Q.row(i) = solve_spd(sys.normal_matrix(i), sys.rhs(i)).transpose();
    }
    return Q;
}

AlsResult train_wrmf_als(const InteractionMatrix& normal, const Matrix& fake, const WrmfConfig& cfg,
                         const AlsConfig& als, std::uint64_t seed) {
    cfg.validate();
    WrmfObjective objective(normal, fake.rows(), cfg);
    AlsResult out;
    out.params = objective.unpack(objective.init_params(seed));
    out.losses.push_back(wrmf_loss(out.params, normal, fake, cfg));
    for (std::size_t sweep = 0; sweep < als.sweeps; ++sweep) {
        auto [P, F] = solve_user_factors(out.params.Q, normal, fake, cfg);
        out.params.P = std::move(P);
        out.params.F = std::move(F);
        out.params.Q = solve_item_factors(out.params.P, out.params.F, normal, fake, cfg);
        const double loss = wrmf_loss(out.params, normal, fake, cfg);
        if (!std::isfinite(loss)) {
            throw NumericalError("wrmf als diverged", static_cast<long>(sweep));
        }
        const double prev = out.losses.back();
        out.losses.push_back(loss);
        if (std::abs(prev - loss) <= als.tol * std::max(std::abs(prev), 1e-300)) break;
    }
    return out;
}

Matrix als_adv_partial(const WrmfParams& params, const InteractionMatrix& normal, const Matrix& fake,
                       const WrmfConfig& cfg, const AdvObjective& objective) {
    const Matrix scores = params.P * params.Q.transpose();
    Matrix dscores;
    objective.value(scores, &dscores);
    const Matrix dQ = dscores.transpose() * params.P;  // dL/dQ, one row per item

    ItemSystem sys(params.P, params.F, normal, fake, cfg);
    Matrix out = Matrix::Zero(fake.rows(), fake.cols());
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
        // q_i = M_i^-1 (... + sum_v w_vi xhat_vi f_v)  =>  dL/dxhat_vi = w_vi f_v . M_i^-1 dL/dq_i
        const Vector y = solve_spd(sys.normal_matrix(i), dQ.row(i).transpose());
        const Vector fy = params.F * y;
        for (Eigen::Index v = 0; v < out.rows(); ++v) out(v, i) = sys.weight(v, i) * fy[v];
    }
    return out;
}

}  // namespace advrec
