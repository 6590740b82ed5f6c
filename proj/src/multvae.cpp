#include "advrec/multvae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adam_rows.hpp"

namespace advrec {

namespace {

Matrix affine(const Matrix& in, const Matrix& W, const Vector& b) {
    Matrix out = in * W.transpose();
    out.rowwise() += b.transpose();
    return out;
}

Matrix normalize_rows(const Matrix& x) {
    Matrix out = x;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double n = out.row(r).norm();
        if (n > 0.0) out.row(r) /= n;
    }
    return out;
}

Matrix dense_rows(const InteractionMatrix& x, const std::vector<std::size_t>& users) {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(users.size()),
                              static_cast<Eigen::Index>(x.n_items()));
    for (std::size_t r = 0; r < users.size(); ++r) {
        for (ItemId i : x.row(users[r])) out(static_cast<Eigen::Index>(r), i) = 1.0;
    }
    return out;
}

/// `input` is the encoder input (normalized, possibly dropped out); `target`
/// the raw click rows used by the likelihood.
MultVaeLoss forward_backward(const MultVaeModel& m, const Matrix& input, const Matrix& target,
                             const Matrix& eps, double beta, MultVaeModel* g) {
    const double inv_b = 1.0 / static_cast<double>(input.rows());
    const Matrix h1 = affine(input, m.W0, m.b0).array().tanh().matrix();
    const Matrix mu = affine(h1, m.Wmu, m.bmu);
    const Matrix lv = affine(h1, m.Wlv, m.blv);
    const Matrix sigma = (0.5 * lv.array()).exp().matrix();
    const Matrix z = mu + eps.cwiseProduct(sigma);
    const Matrix h2 = affine(z, m.Wd1, m.bd1).array().tanh().matrix();
    const Matrix logits = affine(h2, m.Wd2, m.bd2);

    MultVaeLoss loss;
    Matrix dlogits(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        const auto ex = (logits.row(r).array() - mx).exp();
        const double log_z = mx + std::log(ex.sum());
        const double n_clicks = target.row(r).sum();
        loss.nll += n_clicks * log_z - target.row(r).dot(logits.row(r));
        if (g) dlogits.row(r) = (n_clicks * ex / ex.sum()).matrix() - target.row(r);
    }
    loss.nll *= inv_b;
    loss.kl = 0.5 * (-lv.array() + lv.array().exp() + mu.array().square() - 1.0).sum() * inv_b;
    if (!g) return loss;

    dlogits *= inv_b;
    g->Wd2.noalias() = dlogits.transpose() * h2;
    g->bd2 = dlogits.colwise().sum().transpose();
    const Matrix da2 = (dlogits * m.Wd2).cwiseProduct((1.0 - h2.array().square()).matrix());
    g->Wd1.noalias() = da2.transpose() * z;
    g->bd1 = da2.colwise().sum().transpose();
    const Matrix dz = da2 * m.Wd1;
    const Matrix dmu = dz + (beta * inv_b) * mu;
    const Matrix dlv = (0.5 * dz.array() * eps.array() * sigma.array() +
                        (0.5 * beta * inv_b) * (lv.array().exp() - 1.0))
                           .matrix();
    g->Wmu.noalias() = dmu.transpose() * h1;
    g->bmu = dmu.colwise().sum().transpose();
    g->Wlv.noalias() = dlv.transpose() * h1;
    g->blv = dlv.colwise().sum().transpose();
    const Matrix da1 =
        (dmu * m.Wmu + dlv * m.Wlv).cwiseProduct((1.0 - h1.array().square()).matrix());
    g->W0.noalias() = da1.transpose() * input;
    g->b0 = da1.colwise().sum().transpose();
    return loss;
}

}  // namespace

void MultVaeConfig::validate() const {
    if (hidden == 0 || latent == 0) throw ConfigError("multvae: layer widths must be >= 1");
    if (epochs == 0) throw ConfigError("multvae: epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("multvae: lr must be > 0");
    if (batch_size == 0) throw ConfigError("multvae: batch_size must be >= 1");
    if (!(beta_max >= 0.0)) throw ConfigError("multvae: beta_max must be >= 0");
    if (!(anneal_fraction >= 0.0 && anneal_fraction <= 1.0)) {
        throw ConfigError("multvae: anneal_fraction must lie in [0, 1]");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("multvae: dropout must lie in [0, 1)");
    if (!(init_std > 0.0)) throw ConfigError("multvae: init_std must be > 0");
}

double gaussian_kl(const Vector& mu, const Vector& logvar) {
    return 0.5 * (-logvar.array() + logvar.array().exp() + mu.array().square() - 1.0).sum();
}

Matrix MultVaeModel::encode_mean(const InteractionMatrix& x, std::size_t first, std::size_t count) const {
    std::vector<std::size_t> users(count);
    std::iota(users.begin(), users.end(), first);
    const Matrix h1 = affine(normalize_rows(dense_rows(x, users)), W0, b0).array().tanh().matrix();
    return affine(h1, Wmu, bmu);
}

Matrix MultVaeModel::score_rows(const InteractionMatrix& x, std::size_t first, std::size_t count) const {
    const Matrix h2 = affine(encode_mean(x, first, count), Wd1, bd1).array().tanh().matrix();
    return affine(h2, Wd2, bd2);
}

MultVaeLoss multvae_batch_loss(const MultVaeModel& model, const Matrix& rows, const Matrix& eps,
                               double beta, MultVaeModel* grad) {
    return forward_backward(model, normalize_rows(rows), rows, eps, beta, grad);
}

MultVaeModel multvae_init(std::size_t n_items, const MultVaeConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const auto I = static_cast<Eigen::Index>(n_items);
    const auto H = static_cast<Eigen::Index>(cfg.hidden);
    const auto Z = static_cast<Eigen::Index>(cfg.latent);
    MultVaeModel m;
    m.W0.resize(H, I);
    m.Wmu.resize(Z, H);
    m.Wlv.resize(Z, H);
    m.Wd1.resize(H, Z);
    m.Wd2.resize(I, H);
    for (Matrix* w : {&m.W0, &m.Wmu, &m.Wlv, &m.Wd1, &m.Wd2}) fill_normal(*w, cfg.init_std, rng);
    m.b0 = Vector::Zero(H);
    m.bmu = Vector::Zero(Z);
    m.blv = Vector::Zero(Z);
    m.bd1 = Vector::Zero(H);
    m.bd2 = Vector::Zero(I);
    return m;
}

MultVaeModel multvae_train(const InteractionMatrix& x, const MultVaeConfig& cfg, std::uint64_t seed) {
    MultVaeModel m = multvae_init(x.n_items(), cfg, seed);
    Rng rng(derive_seed(seed, 1));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution keep(1.0 - cfg.dropout);

    std::vector<detail::AdamTable> opt;
    std::vector<Matrix*> weights{&m.W0, &m.Wmu, &m.Wlv, &m.Wd1, &m.Wd2};
    std::vector<Vector*> biases{&m.b0, &m.bmu, &m.blv, &m.bd1, &m.bd2};
    for (auto* w : weights) opt.emplace_back(w->rows(), w->cols(), cfg.lr);
    for (auto* b : biases) opt.emplace_back(1, b->size(), cfg.lr);

    const std::size_t n_users = x.n_users();
    const std::size_t per_epoch = (n_users + cfg.batch_size - 1) / cfg.batch_size;
    const double anneal_steps = cfg.anneal_fraction * static_cast<double>(per_epoch * cfg.epochs);
    std::vector<std::size_t> order(n_users);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t update = 0;
    MultVaeModel g;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n_users; start += cfg.batch_size) {
            const std::size_t end = std::min(n_users, start + cfg.batch_size);
            std::vector<std::size_t> users(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            const Matrix target = dense_rows(x, users);
            Matrix input = normalize_rows(target);
            if (cfg.dropout > 0.0) {
                const double scale = 1.0 / (1.0 - cfg.dropout);
                for (Eigen::Index k = 0; k < input.size(); ++k) {
                    input.data()[k] = keep(rng) ? input.data()[k] * scale : 0.0;
                }
            }
            Matrix eps(input.rows(), static_cast<Eigen::Index>(cfg.latent));
            for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = normal(rng);
            const double beta =
                anneal_steps > 0.0
                    ? cfg.beta_max * std::min(1.0, static_cast<double>(update) / anneal_steps)
                    : cfg.beta_max;
            const auto loss = forward_backward(m, input, target, eps, beta, &g);
            if (!std::isfinite(loss.nll + loss.kl)) {
                throw NumericalError("multvae diverged", static_cast<long>(epoch));
            }
            std::vector<Matrix*> gw{&g.W0, &g.Wmu, &g.Wlv, &g.Wd1, &g.Wd2};
            std::vector<Vector*> gb{&g.b0, &g.bmu, &g.blv, &g.bd1, &g.bd2};
            for (std::size_t k = 0; k < weights.size(); ++k) opt[k].update(*weights[k], *gw[k]);
            for (std::size_t k = 0; k < biases.size(); ++k) {
                opt[weights.size() + k].update(*biases[k], *gb[k]);
            }
            ++update;
        }
    }
    return m;
}

}  // namespace advrec
