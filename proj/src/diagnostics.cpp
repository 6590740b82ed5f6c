#include "advrec/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace advrec {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::size_t bin_of(const std::vector<double>& edges, double value) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), value);
    const auto b = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - edges.begin() - 1));
    return std::min(b, edges.size() - 2);
}

void normalize(std::vector<double>& mass, const char* group) {
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    if (total <= 0.0) throw DataError(std::string("popularity density: ") + group + " group has no clicks");
    for (double& m : mass) m /= total;
}

double mean_pairwise_distance(const Matrix& coords, std::span<const std::size_t> rows) {
    double sum = 0.0;
    for (std::size_t a = 0; a < rows.size(); ++a) {
        for (std::size_t b = a + 1; b < rows.size(); ++b) {
            sum += (coords.row(static_cast<Eigen::Index>(rows[a])) - coords.row(static_cast<Eigen::Index>(rows[b])))
                       .norm();
        }
    }
    const double pairs = 0.5 * static_cast<double>(rows.size()) * static_cast<double>(rows.size() - 1);
    return sum / pairs;
}

}  // namespace

PopularityDensity popularity_density(const InteractionMatrix& normal, const InteractionMatrix& fake,
                                     std::size_t sample_normal, std::uint64_t seed, std::size_t bins) {
    if (fake.n_users() == 0 || fake.nnz() == 0) throw ConfigError("popularity density: empty fake block");
    if (fake.n_items() != normal.n_items()) throw ConfigError("popularity density: item count mismatch");
    if (bins == 0) throw ConfigError("popularity density: bins must be >= 1");
    if (sample_normal == 0) throw ConfigError("popularity density: sample size must be >= 1");

    std::vector<double> pop(normal.n_items());
    const auto counts = normal.item_counts();
    std::size_t max_count = 1;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        pop[i] = static_cast<double>(std::max<std::size_t>(1, counts[i]));
        max_count = std::max(max_count, counts[i]);
    }

    PopularityDensity d;
    const double top = std::log(static_cast<double>(max_count) + 1.0);
    d.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) {
        d.edges[b] = std::exp(top * static_cast<double>(b) / static_cast<double>(bins));
    }
    d.edges.front() = 1.0;
    d.edges.back() = static_cast<double>(max_count) + 1.0;

    std::vector<std::size_t> users(normal.n_users());
    std::iota(users.begin(), users.end(), std::size_t{0});
    if (sample_normal < users.size()) {
        Rng rng(seed);
        std::shuffle(users.begin(), users.end(), rng);
        users.resize(sample_normal);
        std::sort(users.begin(), users.end());
    }
    d.sampled_users = users;

    d.normal.assign(bins, 0.0);
    d.fake.assign(bins, 0.0);
    for (std::size_t u : users) {
        for (ItemId i : normal.row(u)) d.normal[bin_of(d.edges, pop[i])] += 1.0;
    }
    for (std::size_t u = 0; u < fake.n_users(); ++u) {
        for (ItemId i : fake.row(u)) d.fake[bin_of(d.edges, pop[i])] += 1.0;
    }
    normalize(d.normal, "normal");
    normalize(d.fake, "fake");
    return d;
}

PcaResult pca_project(const Matrix& embeddings, std::size_t dims, double tol) {
    const auto n = embeddings.rows();
    const auto k = embeddings.cols();
    if (n < 2) throw ConfigError("pca: need at least 2 rows");
    if (k < 2) throw ConfigError("pca: need at least 2 columns");
    if (dims == 0 || static_cast<Eigen::Index>(dims) > k) throw ConfigError("pca: dims must lie in [1, K]");
    if (!all_finite(embeddings)) throw NumericalError("pca: non-finite embedding", -1);

    const Eigen::RowVectorXd mean = embeddings.colwise().mean();
    const Matrix centered = embeddings.rowwise() - mean;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    const double trace = cov.trace();
    const auto d = static_cast<Eigen::Index>(dims);

    PcaResult out;
    out.components = Matrix::Zero(k, d);
    out.variances.assign(dims, 0.0);

    if (trace > 0.0) {
        const Eigen::Index block = std::min<Eigen::Index>(k, d + 4);
        Rng rng(0x5eed);
        Matrix start(k, block);
        fill_normal(start, 1.0, rng);
        Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(start).householderQ() *
                            Eigen::MatrixXd::Identity(k, block);
        Eigen::VectorXd ritz = Eigen::VectorXd::Zero(block);
        for (int iter = 0; iter < 5000; ++iter) {
            const Eigen::MatrixXd z = cov * q;
            q = Eigen::HouseholderQR<Eigen::MatrixXd>(z).householderQ() * Eigen::MatrixXd::Identity(k, block);
            const Eigen::MatrixXd small = q.transpose() * cov * q;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(small);
            // Eigen returns ascending eigenvalues.
            q = q * es.eigenvectors().rowwise().reverse();
            ritz = es.eigenvalues().reverse();
            const Eigen::MatrixXd resid = cov * q.leftCols(d) - q.leftCols(d) * ritz.head(d).asDiagonal();
            if (resid.colwise().norm().maxCoeff() <= tol * std::max(ritz(0), 1e-300)) break;
        }
        const double floor = 1e-10 * ritz(0);
        for (Eigen::Index j = 0; j < d; ++j) {
            if (ritz(j) <= floor) {
                out.rank_deficient = true;
                continue;
            }
            Eigen::VectorXd v = q.col(j);
            Eigen::Index arg = 0;
            v.cwiseAbs().maxCoeff(&arg);
            if (v(arg) < 0.0) v = -v;
            out.components.col(j) = v;
            out.variances[static_cast<std::size_t>(j)] = ritz(j);
        }
    } else {
        out.rank_deficient = true;
    }
    if (out.rank_deficient) {
        out.warning = "pca: embeddings have rank below " + std::to_string(dims) + "; trailing axes set to zero";
    }
    out.coords = centered * out.components;
    const double kept = std::accumulate(out.variances.begin(), out.variances.end(), 0.0);
    out.explained_ratio = trace > 0.0 ? kept / trace : 0.0;
    return out;
}

double clusteredness_score(const Matrix& coords, std::span<const std::size_t> fake_rows, std::uint64_t seed,
                           std::size_t resamples) {
    const auto n = static_cast<std::size_t>(coords.rows());
    if (fake_rows.size() < 2) throw ConfigError("clusteredness: need at least 2 fake points");
    if (resamples == 0) throw ConfigError("clusteredness: resamples must be >= 1");
    std::vector<bool> is_fake(n, false);
    for (std::size_t r : fake_rows) {
        if (r >= n) throw ConfigError("clusteredness: fake index out of range");
        if (is_fake[r]) throw ConfigError("clusteredness: duplicate fake index");
        is_fake[r] = true;
    }
    std::vector<std::size_t> normals;
    for (std::size_t r = 0; r < n; ++r) {
        if (!is_fake[r]) normals.push_back(r);
    }
    if (normals.size() < 2) throw ConfigError("clusteredness: fake set must leave at least 2 normal points");

    const std::size_t m = std::min(fake_rows.size(), normals.size());
    double reference = 0.0;
    for (std::size_t s = 0; s < resamples; ++s) {
        auto pool = normals;
        Rng rng(derive_seed(seed, s));
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(m);
        reference += mean_pairwise_distance(coords, pool);
    }
    reference /= static_cast<double>(resamples);
    if (!(reference > 0.0)) throw DataError("clusteredness: normal points have zero spread");
    return mean_pairwise_distance(coords, fake_rows) / reference;
}

void write_density_csv(std::ostream& out, const PopularityDensity& d) {
    out << "bin_low,bin_high,density_normal,density_fake\n";
    for (std::size_t b = 0; b < d.normal.size(); ++b) {
        out << fmt(d.edges[b]) << ',' << fmt(d.edges[b + 1]) << ',' << fmt(d.normal[b]) << ','
            << fmt(d.fake[b]) << '\n';
    }
}

void write_coords_csv(std::ostream& out, const Matrix& coords, std::span<const std::size_t> user_index,
                      const std::vector<bool>& is_fake) {
    if (user_index.size() != static_cast<std::size_t>(coords.rows()) || is_fake.size() != user_index.size()) {
        throw ConfigError("coords csv: row count mismatch");
    }
    out << "user_index,is_fake,x,y\n";
    for (Eigen::Index r = 0; r < coords.rows(); ++r) {
        const double y = coords.cols() > 1 ? coords(r, 1) : 0.0;
        out << user_index[static_cast<std::size_t>(r)] << ',' << (is_fake[static_cast<std::size_t>(r)] ? 1 : 0)
            << ',' << fmt(coords(r, 0)) << ',' << fmt(y) << '\n';
    }
}

}  // namespace advrec
