#include <gtest/gtest.h>

#include "advrec/eval.hpp"
#include "advrec/objective.hpp"
#include "advrec/wrmf.hpp"
#include "test_util.hpp"

using namespace advrec;
using advrec::testutil::central_difference;
using advrec::testutil::max_rel_error;

namespace {

WrmfConfig small_config() {
    WrmfConfig c;
    c.factors = 3;
    c.l2 = 0.1;
    c.w_pos = 5.0;
    c.w_neg = 1.0;
    c.init_std = 0.5;
    return c;
}

// Fake entries kept away from the 0.5 weight switch so finite differences
// never cross it.
Matrix fake_block(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Matrix f = testutil::uniform_matrix(rows, cols, 0.0, 0.4, seed);
    for (Eigen::Index k = 0; k < f.size(); k += 3) f.data()[k] += 0.55;
    return f;
}

double dense_loss(const WrmfParams& p, const InteractionMatrix& x, const Matrix& fake, const WrmfConfig& c) {
    double total = 0.0;
    const Matrix xd = x.to_dense();
    for (Eigen::Index u = 0; u < xd.rows(); ++u) {
        for (Eigen::Index i = 0; i < xd.cols(); ++i) {
            const double w = xd(u, i) > 0.5 ? c.w_pos : c.w_neg;
            const double e = xd(u, i) - p.P.row(u).dot(p.Q.row(i));
            total += w * e * e;
        }
    }
    for (Eigen::Index v = 0; v < fake.rows(); ++v) {
        for (Eigen::Index i = 0; i < fake.cols(); ++i) {
            const double w = fake(v, i) >= 0.5 ? c.w_pos : c.w_neg;
            const double e = fake(v, i) - p.F.row(v).dot(p.Q.row(i));
            total += w * e * e;
        }
    }
    return total + c.l2 * (p.P.squaredNorm() + p.F.squaredNorm() + p.Q.squaredNorm());
}

}  // namespace

TEST(Wrmf, LossMatchesDenseFormula) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto x = testutil::random_interactions(6, 5, 0.4, seed);
        const auto cfg = small_config();
        const WrmfObjective obj(x, 2, cfg);
        const Vector theta = obj.init_params(seed + 100);
        const Matrix fake = fake_block(2, 5, seed + 200);
        EXPECT_NEAR(obj.loss(theta, fake, nullptr), dense_loss(obj.unpack(theta), x, fake, cfg), 1e-10);
        EXPECT_NEAR(wrmf_loss(obj.unpack(theta), x, fake, cfg), dense_loss(obj.unpack(theta), x, fake, cfg), 1e-10);
    }
}

TEST(Wrmf, PackUnpackRoundTrip) {
    const auto x = testutil::random_interactions(4, 6, 0.5, 1);
    const WrmfObjective obj(x, 3, small_config());
    const Vector theta = obj.init_params(2);
    EXPECT_EQ(obj.unpack(theta).pack(), theta);
    EXPECT_EQ(obj.num_params(), (4u + 3u + 6u) * 3u);
}

TEST(Wrmf, GradientAndSecondOrderMatchFiniteDifferences) {
    const auto x = testutil::random_interactions(5, 4, 0.5, 3);
    const WrmfObjective obj(x, 2, small_config());
    const Vector theta = obj.init_params(4);
    const Matrix fake = fake_block(2, 4, 5);
    Vector grad;
    obj.loss(theta, fake, &grad);
    const Vector fd = central_difference([&](const Vector& t) { return obj.loss(t, fake, nullptr); }, theta, 1e-6);
    EXPECT_LT(max_rel_error(grad, fd), 1e-6);

    const Vector v = testutil::uniform_vector(theta.size(), -1, 1, 6);
    Vector hv;
    Matrix pullback = Matrix::Zero(2, 4);
    obj.second_order(theta, fake, v, hv, pullback);
    auto grad_dot_v = [&](const Vector& t, const Matrix& f) {
        Vector g;
        obj.loss(t, f, &g);
        return g.dot(v);
    };
    const Vector fd_hv = central_difference([&](const Vector& t) { return grad_dot_v(t, fake); }, theta, 1e-5);
    const Matrix fd_pb = central_difference([&](const Matrix& f) { return grad_dot_v(theta, f); }, fake, 1e-5);
    EXPECT_LT(max_rel_error(hv, fd_hv), 1e-6);
    EXPECT_LT(max_rel_error(pullback, fd_pb), 1e-6);
}

TEST(Wrmf, PredictVjpLeavesFakeUntouched) {
    const auto x = testutil::random_interactions(4, 5, 0.5, 7);
    const WrmfObjective obj(x, 2, small_config());
    const Vector theta = obj.init_params(8);
    const Matrix fake = fake_block(2, 5, 9);
    const Matrix dR = testutil::uniform_matrix(4, 5, -1, 1, 10);
    Vector tg;
    Matrix fg = Matrix::Zero(2, 5);
    obj.predict_vjp(theta, fake, dR, tg, &fg);
    EXPECT_EQ(fg.norm(), 0.0);
    const Vector fd = central_difference(
        [&](const Vector& t) { return obj.predict(t, fake).cwiseProduct(dR).sum(); }, theta, 1e-6);
    EXPECT_LT(max_rel_error(tg, fd), 1e-7);
}

TEST(Wrmf, AlsItemSolveMatchesDenseNormalEquations) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto x = testutil::random_interactions(7, 6, 0.4, seed);
        const auto cfg = small_config();
        const Matrix P = testutil::uniform_matrix(7, 3, -1, 1, seed + 1);
        const Matrix F = testutil::uniform_matrix(2, 3, -1, 1, seed + 2);
        const Matrix fake = fake_block(2, 6, seed + 3);
        const Matrix Q = solve_item_factors(P, F, x, fake, cfg);

        Matrix Y(9, 3);
        Y << P, F;
        const Matrix xd = x.to_dense();
        for (Eigen::Index i = 0; i < 6; ++i) {
            Eigen::VectorXd w(9), target(9);
            for (Eigen::Index r = 0; r < 7; ++r) {
                target(r) = xd(r, i);
                w(r) = xd(r, i) > 0.5 ? cfg.w_pos : cfg.w_neg;
            }
            for (Eigen::Index r = 0; r < 2; ++r) {
                target(7 + r) = fake(r, i);
                w(7 + r) = fake(r, i) >= 0.5 ? cfg.w_pos : cfg.w_neg;
            }
            const Eigen::MatrixXd A = Y.transpose() * w.asDiagonal() * Y + cfg.l2 * Eigen::MatrixXd::Identity(3, 3);
            const Eigen::VectorXd b = Y.transpose() * w.asDiagonal() * target;
            const Eigen::VectorXd q = A.colPivHouseholderQr().solve(b);
            EXPECT_LT((Q.row(i).transpose() - q).cwiseAbs().maxCoeff(), 1e-8);
        }
    }
}

TEST(Wrmf, AlsUserSolveMatchesDenseNormalEquations) {
    const auto x = testutil::random_interactions(5, 6, 0.4, 21);
    const auto cfg = small_config();
    const Matrix Q = testutil::uniform_matrix(6, 3, -1, 1, 22);
    const Matrix fake = fake_block(2, 6, 23);
    const auto [P, F] = solve_user_factors(Q, x, fake, cfg);
    const Matrix xd = x.to_dense();
    auto check = [&](const Eigen::VectorXd& row, const Eigen::VectorXd& w, const Eigen::RowVectorXd& got) {
        const Eigen::MatrixXd A = Q.transpose() * w.asDiagonal() * Q + cfg.l2 * Eigen::MatrixXd::Identity(3, 3);
        const Eigen::VectorXd p = A.colPivHouseholderQr().solve(Q.transpose() * w.asDiagonal() * row);
        EXPECT_LT((got.transpose() - p).cwiseAbs().maxCoeff(), 1e-8);
    };
    for (Eigen::Index u = 0; u < 5; ++u) {
        const Eigen::VectorXd row = xd.row(u).transpose();
        const Eigen::VectorXd w = (row.array() > 0.5).select(cfg.w_pos, Eigen::VectorXd::Constant(6, cfg.w_neg));
        check(row, w, P.row(u));
    }
    for (Eigen::Index v = 0; v < 2; ++v) {
        const Eigen::VectorXd row = fake.row(v).transpose();
        const Eigen::VectorXd w = (row.array() >= 0.5).select(cfg.w_pos, Eigen::VectorXd::Constant(6, cfg.w_neg));
        check(row, w, F.row(v));
    }
}

TEST(Wrmf, AlsSweepsNeverIncreaseLoss) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto x = testutil::random_interactions(12, 9, 0.3, seed);
        const Matrix fake = fake_block(3, 9, seed + 50);
        AlsConfig als;
        als.sweeps = 8;
        als.tol = 0.0;
        const auto r = train_wrmf_als(x, fake, small_config(), als, seed);
        ASSERT_EQ(r.losses.size(), 9u);
        for (std::size_t s = 1; s < r.losses.size(); ++s) EXPECT_LE(r.losses[s], r.losses[s - 1] + 1e-9);
    }
}

TEST(Wrmf, AlsPartialMatchesFiniteDifferenceThroughItemSolve) {
    const auto x = testutil::random_interactions(6, 5, 0.4, 31);
    const auto cfg = small_config();
    const Matrix fake = fake_block(2, 5, 32);
    AlsConfig als;
    als.sweeps = 3;
    const auto params = train_wrmf_als(x, fake, cfg, als, 33).params;
    const AdvObjective objective{AdvKind::promote_ce, {1, 3}};
    const Matrix got = als_adv_partial(params, x, fake, cfg, objective);
    const Matrix fd = central_difference(
        [&](const Matrix& f) {
            const Matrix Q = solve_item_factors(params.P, params.F, x, f, cfg);
            return objective.value(params.P * Q.transpose());
        },
        fake, 1e-6);
    EXPECT_LT(max_rel_error(got, fd), 1e-5);
}

TEST(Wrmf, SingularAlsSystemIsReported) {
    WrmfConfig cfg = small_config();
    cfg.l2 = 0.0;
    const Matrix P = Matrix::Zero(2, 3);
    const InteractionMatrix x(2, {{0}, {1}});
    EXPECT_THROW(solve_item_factors(P, Matrix::Zero(0, 3), x, Matrix::Zero(0, 2), cfg), ConfigError);
}

TEST(Wrmf, ConfigValidation) {
    WrmfConfig c;
    c.factors = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = WrmfConfig{};
    c.w_pos = 0.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = WrmfConfig{};
    c.l2 = -1.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Wrmf, ToySurrogateRecommendsHeldOutItems) {
    SyntheticSpec spec;
    spec.seed = 1;
    spec.min_interactions = 2;
    const auto normal = generate_synthetic(spec).slice_rows(0, 900);
    const auto split = leave_one_out(normal, 2);
    WrmfConfig cfg;  // K = 16, w_pos = 20, w_neg = 1
    InnerOptimizerConfig opt;
    opt.lr = 0.03;
    const auto r = train_wrmf_sgd(split.train, Matrix::Zero(0, 300), cfg, opt, 100, 3);
    const double hr = hit_ratio_at_k(Matrix(r.params.P * r.params.Q.transpose()), split.test, 10, split.train);
    EXPECT_GT(hr, 0.35);
    EXPECT_LT(r.trajectory.losses().back(), r.trajectory.losses().front());
}
