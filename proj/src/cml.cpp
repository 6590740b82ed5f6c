#include "advrec/cml.hpp"

#include <algorithm>
#include <cmath>

#include "adam_rows.hpp"

namespace advrec {

namespace {

template <typename Row>
void clip_to_ball(Row&& row) {
    const double n = row.norm();
    if (n > 1.0) row /= n;
}

struct Triple {
    std::uint32_t user;
    ItemId pos;
    ItemId neg;
};

}  // namespace

void CmlConfig::validate() const {
    if (factors == 0) throw ConfigError("cml: factors must be >= 1");
    if (!(margin >= 0.0)) throw ConfigError("cml: margin must be >= 0");
    if (epochs == 0) throw ConfigError("cml: epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("cml: lr must be > 0");
    if (batch_size == 0) throw ConfigError("cml: batch_size must be >= 1");
    if (negatives == 0) throw ConfigError("cml: negatives must be >= 1");
    if (!(init_std > 0.0)) throw ConfigError("cml: init_std must be > 0");
}

Matrix CmlModel::score_rows(std::size_t first, std::size_t count) const {
    const auto rows = static_cast<Eigen::Index>(count);
    const auto u = U.middleRows(static_cast<Eigen::Index>(first), rows);
    Matrix out = 2.0 * u * V.transpose();
    out.colwise() -= u.rowwise().squaredNorm();
    out.rowwise() -= V.rowwise().squaredNorm().transpose();
    return out;
}

double cml_hinge(const Vector& u, const Vector& v_pos, const Vector& v_neg, double margin) {
    return std::max(0.0, margin + (u - v_pos).squaredNorm() - (u - v_neg).squaredNorm());
}

CmlModel cml_train(const InteractionMatrix& x, const CmlConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const auto K = static_cast<Eigen::Index>(cfg.factors);
    Rng rng(seed);
    CmlModel m;
    m.U.resize(static_cast<Eigen::Index>(x.n_users()), K);
    m.V.resize(static_cast<Eigen::Index>(x.n_items()), K);
    fill_normal(m.U, cfg.init_std, rng);
    fill_normal(m.V, cfg.init_std, rng);
    for (Eigen::Index r = 0; r < m.U.rows(); ++r) clip_to_ball(m.U.row(r));
    for (Eigen::Index r = 0; r < m.V.rows(); ++r) clip_to_ball(m.V.row(r));

    detail::AdamTable aU(m.U.rows(), K, cfg.lr), aV(m.V.rows(), K, cfg.lr);
    Matrix gU = Matrix::Zero(m.U.rows(), K), gV = Matrix::Zero(m.V.rows(), K);
    std::vector<char> user_seen(x.n_users(), 0), item_seen(x.n_items(), 0);
    std::vector<std::uint32_t> users, items;
    std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(x.n_items() - 1));

    std::vector<Triple> triples;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        triples.clear();
        for (std::size_t u = 0; u < x.n_users(); ++u) {
            const auto row = x.row(u);
            for (ItemId i : row) {
                for (std::size_t n = 0; n < cfg.negatives; ++n) {
                    ItemId j = pick(rng);
                    for (int tries = 0; tries < 20 && std::binary_search(row.begin(), row.end(), j); ++tries) {
                        j = pick(rng);
                    }
                    triples.push_back({static_cast<std::uint32_t>(u), i, j});
                }
            }
        }
        std::shuffle(triples.begin(), triples.end(), rng);

        for (std::size_t start = 0; start < triples.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(triples.size(), start + cfg.batch_size);
            const double inv_b = 1.0 / static_cast<double>(end - start);
            users.clear();
            items.clear();
            auto touch_item = [&](ItemId i) {
                if (!item_seen[i]) { item_seen[i] = 1; items.push_back(i); }
            };
            for (std::size_t k = start; k < end; ++k) {
                const auto& t = triples[k];
                const auto u = m.U.row(t.user);
                const auto vp = m.V.row(t.pos);
                const auto vn = m.V.row(t.neg);
                const double h = cfg.margin + (u - vp).squaredNorm() - (u - vn).squaredNorm();
                if (!std::isfinite(h)) throw NumericalError("cml diverged", static_cast<long>(epoch));
                if (h <= 0.0) continue;
                if (!user_seen[t.user]) { user_seen[t.user] = 1; users.push_back(t.user); }
                touch_item(t.pos);
                touch_item(t.neg);
                gU.row(t.user) += 2.0 * inv_b * (vn - vp);
                gV.row(t.pos) -= 2.0 * inv_b * (u - vp);
                gV.row(t.neg) += 2.0 * inv_b * (u - vn);
            }
            for (auto u : users) {
                aU.update_row(m.U.row(u), u, gU.row(u));
                clip_to_ball(m.U.row(u));
                gU.row(u).setZero();
                user_seen[u] = 0;
            }
            for (auto i : items) {
                aV.update_row(m.V.row(i), i, gV.row(i));
                clip_to_ball(m.V.row(i));
                gV.row(i).setZero();
                item_seen[i] = 0;
            }
        }
    }
    return m;
}

}  // namespace advrec
