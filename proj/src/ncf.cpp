#include "advrec/ncf.hpp"

#include <algorithm>
#include <cmath>

#include "adam_rows.hpp"

namespace advrec {

namespace {

struct BatchGrad {
    Matrix dPg, dQg, dPm, dQm;  // one row per sample
    Matrix dW1;
    Vector db1, dh;
    double db = 0.0;
};

double softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double forward_backward(const NcfModel& m, const std::vector<NcfSample>& batch, BatchGrad* g) {
    const auto B = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index K = m.Pg.cols(), H = m.W1.rows();
    Matrix pg(B, K), qg(B, K), pm(B, K), qm(B, K);
    Vector y(B);
    for (Eigen::Index r = 0; r < B; ++r) {
        const auto& s = batch[static_cast<std::size_t>(r)];
        pg.row(r) = m.Pg.row(s.user);
        qg.row(r) = m.Qg.row(s.item);
        pm.row(r) = m.Pm.row(s.user);
        qm.row(r) = m.Qm.row(s.item);
        y[r] = s.label;
    }
    const auto W1a = m.W1.leftCols(K);
    const auto W1b = m.W1.rightCols(K);
    const Matrix gmf = pg.cwiseProduct(qg);
    Matrix z1 = pm * W1a.transpose() + qm * W1b.transpose();
    z1.rowwise() += m.b1.transpose();
    const Matrix a1 = z1.cwiseMax(0.0);
    const Vector logit = (gmf * m.h.head(K) + a1 * m.h.tail(H)).array() + m.b;

    double total = 0.0;
    for (Eigen::Index r = 0; r < B; ++r) total += softplus(logit[r]) - y[r] * logit[r];
    const double inv_b = 1.0 / static_cast<double>(B);
    if (!g) return total * inv_b;

    const Vector dlogit =
        ((1.0 / (1.0 + (-logit.array()).exp())) - y.array()).matrix() * inv_b;
    g->dh.resize(K + H);
    g->dh.head(K) = gmf.transpose() * dlogit;
    g->dh.tail(H) = a1.transpose() * dlogit;
    g->db = dlogit.sum();
    const Matrix dgmf = dlogit * m.h.head(K).transpose();
    g->dPg = dgmf.cwiseProduct(qg);
    g->dQg = dgmf.cwiseProduct(pg);
    const Matrix dz1 =
        (dlogit * m.h.tail(H).transpose()).cwiseProduct((z1.array() > 0.0).cast<double>().matrix());
    g->dW1.resize(H, 2 * K);
    g->dW1.leftCols(K) = dz1.transpose() * pm;
    g->dW1.rightCols(K) = dz1.transpose() * qm;
    g->db1 = dz1.colwise().sum().transpose();
    g->dPm = dz1 * W1a;
    g->dQm = dz1 * W1b;
    return total * inv_b;
}

}  // namespace

void NcfConfig::validate() const {
    if (factors == 0 || mlp_hidden == 0) throw ConfigError("ncf: factors and mlp_hidden must be >= 1");
    if (epochs == 0) throw ConfigError("ncf: epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("ncf: lr must be > 0");
    if (batch_size == 0) throw ConfigError("ncf: batch_size must be >= 1");
    if (!(init_std > 0.0)) throw ConfigError("ncf: init_std must be > 0");
}

double NcfModel::score(std::size_t user, ItemId item) const {
    const Eigen::Index K = Pg.cols();
    Vector z1 = W1.leftCols(K) * Pm.row(user).transpose() + W1.rightCols(K) * Qm.row(item).transpose() + b1;
    return Pg.row(user).cwiseProduct(Qg.row(item)).dot(h.head(K)) +
           z1.cwiseMax(0.0).dot(h.tail(W1.rows())) + b;
}

Matrix NcfModel::score_rows(std::size_t first, std::size_t count) const {
    const Eigen::Index K = Pg.cols(), H = W1.rows();
    const auto rows = static_cast<Eigen::Index>(count);
    const auto f = static_cast<Eigen::Index>(first);
    Matrix out = (Pg.middleRows(f, rows) * h.head(K).asDiagonal()) * Qg.transpose();
    Matrix a = Pm.middleRows(f, rows) * W1.leftCols(K).transpose();
    a.rowwise() += b1.transpose();
    const Matrix c = Qm * W1.rightCols(K).transpose();  // items x H
    const Vector hm = h.tail(H);
    for (Eigen::Index u = 0; u < rows; ++u) {
        const auto au = a.row(u);
        for (Eigen::Index i = 0; i < c.rows(); ++i) {
            out(u, i) += (au + c.row(i)).cwiseMax(0.0).dot(hm.transpose()) + b;
        }
    }
    return out;
}

double ncf_batch_loss(const NcfModel& model, const std::vector<NcfSample>& batch, NcfModel* grad) {
    if (batch.empty()) return 0.0;
    if (!grad) return forward_backward(model, batch, nullptr);
    BatchGrad g;
    const double loss = forward_backward(model, batch, &g);
    grad->Pg = Matrix::Zero(model.Pg.rows(), model.Pg.cols());
    grad->Qg = Matrix::Zero(model.Qg.rows(), model.Qg.cols());
    grad->Pm = Matrix::Zero(model.Pm.rows(), model.Pm.cols());
    grad->Qm = Matrix::Zero(model.Qm.rows(), model.Qm.cols());
    for (std::size_t r = 0; r < batch.size(); ++r) {
        const auto rr = static_cast<Eigen::Index>(r);
        grad->Pg.row(batch[r].user) += g.dPg.row(rr);
        grad->Qg.row(batch[r].item) += g.dQg.row(rr);
        grad->Pm.row(batch[r].user) += g.dPm.row(rr);
        grad->Qm.row(batch[r].item) += g.dQm.row(rr);
    }
    grad->W1 = g.dW1;
    grad->b1 = g.db1;
    grad->h = g.dh;
    grad->b = g.db;
    return loss;
}

NcfModel ncf_init(std::size_t n_users, std::size_t n_items, const NcfConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const auto K = static_cast<Eigen::Index>(cfg.factors);
    const auto H = static_cast<Eigen::Index>(cfg.mlp_hidden);
    const auto U = static_cast<Eigen::Index>(n_users), I = static_cast<Eigen::Index>(n_items);
    NcfModel m;
    m.Pg.resize(U, K);
    m.Qg.resize(I, K);
    m.Pm.resize(U, K);
    m.Qm.resize(I, K);
    m.W1.resize(H, 2 * K);
    Matrix hv(K + H, 1);
    for (Matrix* t : {&m.Pg, &m.Qg, &m.Pm, &m.Qm, &m.W1, &hv}) fill_normal(*t, cfg.init_std, rng);
    m.h = hv.col(0);
    m.b1 = Vector::Zero(H);
    return m;
}

NcfModel ncf_train(const InteractionMatrix& x, const NcfConfig& cfg, std::uint64_t seed) {
    NcfModel m = ncf_init(x.n_users(), x.n_items(), cfg, seed);
    Rng rng(derive_seed(seed, 1));
    const auto K = m.Pg.cols();
    detail::AdamTable aPg(m.Pg.rows(), K, cfg.lr), aQg(m.Qg.rows(), K, cfg.lr);
    detail::AdamTable aPm(m.Pm.rows(), K, cfg.lr), aQm(m.Qm.rows(), K, cfg.lr);
    detail::AdamTable aW1(m.W1.rows(), m.W1.cols(), cfg.lr), ab1(1, m.b1.size(), cfg.lr);
    detail::AdamTable ah(1, m.h.size(), cfg.lr), ab(1, 1, cfg.lr);

    Matrix gPg = Matrix::Zero(m.Pg.rows(), K), gQg = Matrix::Zero(m.Qg.rows(), K);
    Matrix gPm = Matrix::Zero(m.Pm.rows(), K), gQm = Matrix::Zero(m.Qm.rows(), K);
    std::vector<char> user_seen(x.n_users(), 0), item_seen(x.n_items(), 0);
    std::vector<std::uint32_t> users, items;

    std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(x.n_items() - 1));
    std::vector<NcfSample> samples;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        samples.clear();
        for (std::size_t u = 0; u < x.n_users(); ++u) {
            const auto row = x.row(u);
            for (ItemId i : row) {
                samples.push_back({static_cast<std::uint32_t>(u), i, 1.0});
                for (std::size_t n = 0; n < cfg.negatives; ++n) {
                    ItemId j = pick(rng);
                    for (int tries = 0; tries < 20 && std::binary_search(row.begin(), row.end(), j); ++tries) {
                        j = pick(rng);
                    }
                    samples.push_back({static_cast<std::uint32_t>(u), j, 0.0});
                }
            }
        }
        std::shuffle(samples.begin(), samples.end(), rng);

        std::vector<NcfSample> batch;
        for (std::size_t start = 0; start < samples.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(samples.size(), start + cfg.batch_size);
            batch.assign(samples.begin() + static_cast<std::ptrdiff_t>(start),
                         samples.begin() + static_cast<std::ptrdiff_t>(end));
            BatchGrad g;
            const double loss = forward_backward(m, batch, &g);
            if (!std::isfinite(loss)) throw NumericalError("ncf diverged", static_cast<long>(epoch));

            users.clear();
            items.clear();
            for (std::size_t r = 0; r < batch.size(); ++r) {
                const auto rr = static_cast<Eigen::Index>(r);
                const auto u = batch[r].user;
                const auto i = batch[r].item;
                if (!user_seen[u]) { user_seen[u] = 1; users.push_back(u); }
                if (!item_seen[i]) { item_seen[i] = 1; items.push_back(i); }
                gPg.row(u) += g.dPg.row(rr);
                gPm.row(u) += g.dPm.row(rr);
                gQg.row(i) += g.dQg.row(rr);
                gQm.row(i) += g.dQm.row(rr);
            }
            for (auto u : users) {
                aPg.update_row(m.Pg.row(u), u, gPg.row(u));
                aPm.update_row(m.Pm.row(u), u, gPm.row(u));
                gPg.row(u).setZero();
                gPm.row(u).setZero();
                user_seen[u] = 0;
            }
            for (auto i : items) {
                aQg.update_row(m.Qg.row(i), i, gQg.row(i));
                aQm.update_row(m.Qm.row(i), i, gQm.row(i));
                gQg.row(i).setZero();
                gQm.row(i).setZero();
                item_seen[i] = 0;
            }
            aW1.update(m.W1, g.dW1);
            ab1.update(m.b1, g.db1);
            ah.update(m.h, g.dh);
            Vector bv = Vector::Constant(1, m.b), gb = Vector::Constant(1, g.db);
            ab.update(bv, gb);
            m.b = bv[0];
        }
    }
    return m;
}

}  // namespace advrec
