// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "advrec/attack.hpp"
#include "advrec/cli.hpp"
#include "advrec/eval.hpp"
#include "advrec/io.hpp"
#include "advrec/itemcf.hpp"
#include "advrec/victims.hpp"
#include "advrec/wrmf.hpp"
#include "test_util.hpp"

using namespace advrec;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// Continuous fake entries kept clear of the 0.5 weight switch.
Matrix fake_block(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Matrix f = testutil::uniform_matrix(rows, cols, 0.0, 0.8, seed);
    for (Eigen::Index k = 0; k < f.size(); ++k) {
        if (f.data()[k] >= 0.4) f.data()[k] += 0.2;
    }
    return f;
}

// ---------------------------------------------------------------------------
// 1. Unrolled gradient vs central finite differences.

Outcome gradient_exactness() {
    Stopwatch clock;
    std::size_t checked = 0;
    double worst = 0.0;
    bool ok = true;
    for (std::size_t trial = 0; trial < 60; ++trial) {
        const std::size_t users = 3 + trial % 6, fakes = 1 + trial % 2, items = 3 + trial % 4;
        const std::size_t factors = 1 + trial % 3, steps = 1 + trial % 5;
        const auto normal = testutil::random_interactions(users, items, 0.4, 200 + trial);
        const AdvObjective objective{AdvKind::promote_ce, {static_cast<ItemId>(trial % items)}};
        SurrogateSpec spec;
        spec.wrmf.factors = factors;
        spec.wrmf.l2 = 0.1;
        spec.wrmf.w_pos = 5.0;
        spec.wrmf.init_std = 0.5;
        const auto surrogate = make_surrogate(spec, normal, fakes);
        const Matrix fake = fake_block(fakes, items, 300 + trial);
        for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
            AttackConfig cfg;
            cfg.n_fake = fakes;
            cfg.inner_steps = steps;
            cfg.window = steps;
            cfg.mode = GradientMode::exact;
            cfg.inner.kind = kind;
            cfg.inner.lr = kind == OptimizerKind::sgd ? 0.02 : 0.05;
            const auto start = initial_state(cfg.inner, surrogate->init_params(400 + trial));
            const Matrix grad = adversarial_gradient(*surrogate, objective, cfg, fake, start).grad;
            const Matrix fd = testutil::central_difference(
                [&](const Matrix& f) { return adversarial_gradient(*surrogate, objective, cfg, f, start).adv_loss; },
                fake, 1e-6);
            for (Eigen::Index k = 0; k < fd.size(); ++k) {
                const double err = std::abs(grad.data()[k] - fd.data()[k]);
                const double allowed = std::max(1e-3 * std::abs(fd.data()[k]), 1e-6);
                worst = std::max(worst, err / allowed);
                ok = ok && err <= allowed;
                ++checked;
            }
        }
    }
    const double secs = clock.seconds();
    return {ok && secs < 10.0, std::to_string(checked) + " entries, worst err/allowed " + fmt(worst) + ", " +
                                   fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Gradient-mode nesting.

Outcome approximation_nesting() {
    double worst_wrmf = 0.0, worst_itemae = 0.0;
    bool zero_window_equal = true;
    for (std::uint64_t trial = 0; trial < 6; ++trial) {
        const auto normal = testutil::random_interactions(7, 6, 0.4, 500 + trial);
        const AdvObjective objective{AdvKind::promote_ce, {static_cast<ItemId>(trial % 6)}};
        const Matrix fake = fake_block(2, 6, 600 + trial);
        AttackConfig cfg;
        cfg.n_fake = 2;
        cfg.inner_steps = 4 + trial % 3;
        cfg.window = cfg.inner_steps;
        cfg.inner.lr = 0.05;

        SurrogateSpec wrmf;
        wrmf.wrmf.factors = 3;
        wrmf.wrmf.l2 = 0.1;
        wrmf.wrmf.init_std = 0.5;
        const auto ws = make_surrogate(wrmf, normal, 2);
        const auto wstart = initial_state(cfg.inner, ws->init_params(700 + trial));
        cfg.mode = GradientMode::exact;
        const Matrix exact = adversarial_gradient(*ws, objective, cfg, fake, wstart).grad;
        cfg.mode = GradientMode::truncated;
        const Matrix trunc = adversarial_gradient(*ws, objective, cfg, fake, wstart).grad;
        worst_wrmf = std::max(worst_wrmf, (exact - trunc).cwiseAbs().maxCoeff());

        // ItemAE scores read the fake block, so its exact gradient carries the
        // direct partial on top of the full unroll.
        SurrogateSpec ae;
        ae.kind = SurrogateKind::itemae;
        ae.itemae.hidden = {3};
        ae.itemae.init_std = 0.4;
        const auto as = make_surrogate(ae, normal, 2);
        const auto astart = initial_state(cfg.inner, as->init_params(800 + trial));
        cfg.mode = GradientMode::exact;
        const Matrix ae_exact = adversarial_gradient(*as, objective, cfg, fake, astart).grad;
        cfg.mode = GradientMode::partial_plus_truncated;
        const Matrix ae_full = adversarial_gradient(*as, objective, cfg, fake, astart).grad;
        worst_itemae = std::max(worst_itemae, (ae_exact - ae_full).cwiseAbs().maxCoeff());

        cfg.mode = GradientMode::partial_only;
        const Matrix partial = adversarial_gradient(*as, objective, cfg, fake, astart).grad;
        cfg.mode = GradientMode::partial_plus_truncated;
        cfg.window = 0;
        const Matrix zero = adversarial_gradient(*as, objective, cfg, fake, astart).grad;
        zero_window_equal = zero_window_equal && partial == zero && partial.norm() > 0.0;
    }
    const bool ok = worst_wrmf <= 1e-10 && worst_itemae <= 1e-10 && zero_window_equal;
    return {ok, "WRMF truncated(tau=L) vs exact " + fmt(worst_wrmf) + ", ItemAE partial+truncated(tau=L) vs exact " +
                    fmt(worst_itemae) + ", tau=0 equals partial_only: " + (zero_window_equal ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 3. ALS solves and monotone sweeps.

double dense_wrmf_loss(const WrmfParams& p, const InteractionMatrix& x, const Matrix& fake, const WrmfConfig& c) {
    const Matrix xd = x.to_dense();
    double total = 0.0;
    for (Eigen::Index u = 0; u < xd.rows(); ++u) {
        for (Eigen::Index i = 0; i < xd.cols(); ++i) {
            const double e = xd(u, i) - p.P.row(u).dot(p.Q.row(i));
            total += (xd(u, i) > 0.5 ? c.w_pos : c.w_neg) * e * e;
        }
    }
    for (Eigen::Index v = 0; v < fake.rows(); ++v) {
        for (Eigen::Index i = 0; i < fake.cols(); ++i) {
            const double e = fake(v, i) - p.F.row(v).dot(p.Q.row(i));
            total += (fake(v, i) >= 0.5 ? c.w_pos : c.w_neg) * e * e;
        }
    }
    return total + c.l2 * (p.P.squaredNorm() + p.F.squaredNorm() + p.Q.squaredNorm());
}

Outcome als_correctness() {
    WrmfConfig cfg;
    cfg.factors = 3;
    cfg.l2 = 0.1;
    cfg.w_pos = 20.0;
    cfg.init_std = 0.5;
    double worst_solve = 0.0;
    for (std::uint64_t trial = 0; trial < 30; ++trial) {
        const std::size_t users = 4 + trial % 8, items = 3 + trial % 7;
        const auto x = testutil::random_interactions(users, items, 0.35, 900 + trial);
        const Matrix P = testutil::uniform_matrix(users, 3, -1, 1, 1000 + trial);
        const Matrix F = testutil::uniform_matrix(2, 3, -1, 1, 1100 + trial);
        const Matrix fake = fake_block(2, items, 1200 + trial);
        const Matrix Q = solve_item_factors(P, F, x, fake, cfg);
        Matrix Y(static_cast<Eigen::Index>(users + 2), 3);
        Y << P, F;
        const Matrix xd = x.to_dense();
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(items); ++i) {
            Vector w(Y.rows()), target(Y.rows());
            for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(users); ++r) {
                target(r) = xd(r, i);
                w(r) = xd(r, i) > 0.5 ? cfg.w_pos : cfg.w_neg;
            }
            for (Eigen::Index r = 0; r < 2; ++r) {
                target(users + r) = fake(r, i);
                w(users + r) = fake(r, i) >= 0.5 ? cfg.w_pos : cfg.w_neg;
            }
            const Matrix A = Y.transpose() * w.asDiagonal() * Y + cfg.l2 * Matrix::Identity(3, 3);
            const Vector q = A.colPivHouseholderQr().solve(Y.transpose() * w.asDiagonal() * target);
            worst_solve = std::max(worst_solve, (Q.row(i).transpose() - q).cwiseAbs().maxCoeff());
        }
    }

    double worst_rise = -1e300, worst_loss_gap = 0.0;
    for (std::uint64_t trial = 0; trial < 30; ++trial) {
        const auto x = testutil::random_interactions(15, 10, 0.3, 1300 + trial);
        const Matrix fake = fake_block(3, 10, 1400 + trial);
        AlsConfig als;
        als.sweeps = 10;
        als.tol = 0.0;
        const auto r = train_wrmf_als(x, fake, cfg, als, trial);
        for (std::size_t s = 1; s < r.losses.size(); ++s) {
            worst_rise = std::max(worst_rise, r.losses[s] - r.losses[s - 1]);
        }
        const double dense = dense_wrmf_loss(r.params, x, fake, cfg);
        worst_loss_gap = std::max(worst_loss_gap, std::abs(dense - r.losses.back()) / dense);
    }
    const bool ok = worst_solve <= 1e-8 && worst_rise <= 1e-9 && worst_loss_gap <= 1e-10;
    return {ok, "item solve max diff " + fmt(worst_solve) + ", largest sweep change " + fmt(worst_rise) +
                    ", reported vs dense loss rel gap " + fmt(worst_loss_gap)};
}

// ---------------------------------------------------------------------------
// 4 and 5. Toy experiment and unroll ablation.

struct ToyResult {
    double target_pre = 0.0, target_post = 0.0, test_pre = 0.0, test_post = 0.0, seconds = 0.0;
};

ToyResult toy_attack(std::uint64_t seed, std::size_t tau) {
    Stopwatch clock;
    SyntheticSpec spec;
    spec.seed = seed;
    spec.min_interactions = 2;  // leave-one-out needs a training click to remain
    const auto normal = generate_synthetic(spec).slice_rows(0, spec.n_users);
    const auto split = leave_one_out(normal, seed + 100);
    const auto targets = sample_target_set(split.train, PopularityBucket::lower_torso, 1, seed + 7);

    SurrogateSpec surrogate;
    surrogate.wrmf.factors = 16;
    surrogate.wrmf.w_pos = 20.0;
    surrogate.wrmf.w_neg = 1.0;
    surrogate.wrmf.l2 = 1.0;
    AttackConfig cfg;
    cfg.n_fake = spec.n_fake;
    cfg.outer_iters = 50;
    cfg.inner_steps = 100;
    cfg.outer_lr = 3.0;
    cfg.inner.lr = 0.03;
    cfg.rho = 0.2;
    cfg.init = InitScheme::sampled_from_normal_users;
    cfg.window = tau;
    cfg.mode = tau == cfg.inner_steps ? GradientMode::exact : GradientMode::truncated;
    cfg.seed = seed;
    const auto result = learn_fake_users(split.train, surrogate, AdvObjective{AdvKind::promote_ce, targets}, cfg);

    // WRMF retrained from the surrogate's init on clean and poisoned data.
    const Matrix none = Matrix::Zero(0, static_cast<Eigen::Index>(normal.n_items()));
    const auto clean = train_wrmf_sgd(split.train, none, surrogate.wrmf, cfg.inner, cfg.inner_steps,
                                      derive_seed(seed, 1));
    const auto poisoned = train_wrmf_sgd(split.train, result.block.values, surrogate.wrmf, cfg.inner,
                                         cfg.inner_steps, derive_seed(seed, 1));
    const Matrix before = clean.params.P * clean.params.Q.transpose();
    const Matrix after = poisoned.params.P * poisoned.params.Q.transpose();
    ToyResult r;
    r.target_pre = hit_ratio_at_k(before, targets, 10, split.train);
    r.target_post = hit_ratio_at_k(after, targets, 10, split.train);
    r.test_pre = hit_ratio_at_k(before, split.test, 10, split.train);
    r.test_post = hit_ratio_at_k(after, split.test, 10, split.train);
    r.seconds = clock.seconds();
    return r;
}

const std::vector<std::uint64_t> kToySeeds{1, 2, 3, 4, 5};
std::map<std::size_t, std::vector<ToyResult>> toy_cache;

const std::vector<ToyResult>& toy_runs(std::size_t tau) {
    auto it = toy_cache.find(tau);
    if (it != toy_cache.end()) return it->second;
    std::vector<ToyResult> runs;
    for (auto seed : kToySeeds) runs.push_back(toy_attack(seed, tau));
    return toy_cache[tau] = runs;
}

std::vector<double> field(const std::vector<ToyResult>& runs, double ToyResult::*member) {
    std::vector<double> out;
    for (const auto& r : runs) out.push_back(r.*member);
    return out;
}

Outcome toy_reproduction() {
    const auto& runs = toy_runs(100);
    const double post = mean(field(runs, &ToyResult::target_post));
    const double pre = mean(field(runs, &ToyResult::target_pre));
    const double test_change = mean(field(runs, &ToyResult::test_post)) - mean(field(runs, &ToyResult::test_pre));
    const double secs = std::accumulate(runs.begin(), runs.end(), 0.0,
                                        [](double s, const ToyResult& r) { return s + r.seconds; });
    const bool ok = post >= 0.35 && pre <= 0.05 && std::abs(test_change) < 0.05 && secs <= 900.0;
    return {ok, "target HR@10 " + fmt(pre) + " -> " + fmt(post) + ", test HR@10 change " + fmt(test_change) + ", " +
                    fmt(secs, 4) + " s"};
}

Outcome unroll_ablation() {
    const std::vector<std::size_t> windows{0, 5, 25, 100};
    std::vector<double> hr;
    for (auto tau : windows) hr.push_back(mean(field(toy_runs(tau), &ToyResult::target_post)));
    std::size_t violations = 0;
    for (std::size_t j = 1; j < hr.size(); ++j) violations += hr[j] < hr[j - 1] ? 1 : 0;
    const double ratio = hr[1] / hr[3];
    std::string detail = "HR@10 by tau";
    for (std::size_t j = 0; j < windows.size(); ++j) detail += " " + std::to_string(windows[j]) + ":" + fmt(hr[j]);
    detail += ", tau=5 ratio " + fmt(ratio) + ", order violations " + std::to_string(violations);
    return {ratio >= 0.5 && violations <= 1, detail};
}

// ---------------------------------------------------------------------------
// 6. Top-k metrics against a full stable sort.

std::vector<ItemId> brute_top_k(const Matrix& scores, std::size_t u, const std::vector<ItemId>& masked, std::size_t k) {
    std::vector<ItemId> order;
    for (Eigen::Index i = 0; i < scores.cols(); ++i) {
        if (std::find(masked.begin(), masked.end(), static_cast<ItemId>(i)) == masked.end()) {
            order.push_back(static_cast<ItemId>(i));
        }
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](ItemId a, ItemId b) { return scores(static_cast<Eigen::Index>(u), a) > scores(static_cast<Eigen::Index>(u), b); });
    if (order.size() > k) order.resize(k);
    return order;
}

std::vector<ItemId> row_vector(const InteractionMatrix& m, std::size_t u) {
    return {m.row(u).begin(), m.row(u).end()};
}

double brute_hr(const Matrix& scores, const std::vector<ItemId>& targets, std::size_t k, const InteractionMatrix& mask) {
    double hits = 0.0;
    for (std::size_t u = 0; u < mask.n_users(); ++u) {
        const auto top = brute_top_k(scores, u, row_vector(mask, u), k);
        hits += std::any_of(top.begin(), top.end(),
                            [&](ItemId i) { return std::find(targets.begin(), targets.end(), i) != targets.end(); })
                    ? 1.0
                    : 0.0;
    }
    return hits / static_cast<double>(mask.n_users());
}

double brute_recall(const Matrix& scores, const InteractionMatrix& test, std::size_t k, const InteractionMatrix& mask) {
    double total = 0.0;
    std::size_t users = 0;
    for (std::size_t u = 0; u < mask.n_users(); ++u) {
        const auto held = row_vector(test, u);
        if (held.empty()) continue;
        const auto top = brute_top_k(scores, u, row_vector(mask, u), k);
        std::size_t found = 0;
        for (ItemId i : top) found += std::find(held.begin(), held.end(), i) != held.end() ? 1 : 0;
        total += static_cast<double>(found) / static_cast<double>(std::min(k, held.size()));
        ++users;
    }
    return total / static_cast<double>(users);
}

InteractionMatrix subset_matrix(std::size_t items, unsigned bits) {
    std::vector<ItemId> row;
    for (std::size_t i = 0; i < items; ++i) {
        if (bits & (1u << i)) row.push_back(static_cast<ItemId>(i));
    }
    return InteractionMatrix(items, {row});
}

Outcome metric_oracles() {
    std::size_t cases = 0, mismatches = 0;
    auto check = [&](double got, double expected) {
        ++cases;
        mismatches += got == expected ? 0 : 1;
    };

    // Every single-user instance over 4 items with scores in {0, 1, 2}.
    constexpr std::size_t n = 4;
    for (unsigned code = 0; code < 81; ++code) {
        Matrix scores(1, n);
        for (std::size_t i = 0, c = code; i < n; ++i, c /= 3) scores(0, static_cast<Eigen::Index>(i)) = static_cast<double>(c % 3);
        for (unsigned mask_bits = 0; mask_bits < 16; ++mask_bits) {
            const auto mask = subset_matrix(n, mask_bits);
            for (unsigned target_bits = 1; target_bits < 16; ++target_bits) {
                const auto held = subset_matrix(n, target_bits);
                const auto targets = row_vector(held, 0);
                for (std::size_t k = 1; k <= n; ++k) {
                    check(hit_ratio_at_k(scores, targets, k, mask), brute_hr(scores, targets, k, mask));
                    check(recall_at_k(scores, held, k, mask), brute_recall(scores, held, k, mask));
                }
            }
        }
    }

    // Random tied instances up to 10 x 10.
    Rng rng(1500);
    for (std::uint64_t trial = 0; trial < 2000; ++trial) {
        const std::size_t users = 1 + trial % 10, items = 2 + (trial / 10) % 9;
        Matrix scores(static_cast<Eigen::Index>(users), static_cast<Eigen::Index>(items));
        std::uniform_int_distribution<int> level(0, 3);
        for (Eigen::Index k = 0; k < scores.size(); ++k) scores.data()[k] = level(rng);
        const auto mask = testutil::random_interactions(users, items, 0.3, 1600 + trial);
        const auto test = testutil::random_interactions(users, items, 0.3, 1700 + trial);
        const std::vector<ItemId> targets{static_cast<ItemId>(trial % items)};
        const std::size_t k = 1 + trial % items;
        check(hit_ratio_at_k(scores, targets, k, mask), brute_hr(scores, targets, k, mask));
        if (test.nnz() > 0) check(recall_at_k(scores, test, k, mask), brute_recall(scores, test, k, mask));
    }

    // 100 random 50 x 80 instances.
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Matrix scores = testutil::uniform_matrix(50, 80, 0.0, 1.0, 1800 + trial);
        for (Eigen::Index k = 0; k < scores.size(); k += 7) scores.data()[k] = 0.5;
        const auto mask = testutil::random_interactions(50, 80, 0.1, 1900 + trial);
        const auto test = testutil::random_interactions(50, 80, 0.05, 2000 + trial);
        const std::vector<ItemId> targets{static_cast<ItemId>(trial % 80), static_cast<ItemId>((trial * 7 + 3) % 80)};
        for (std::size_t k : {1, 5, 10, 20, 50}) {
            check(hit_ratio_at_k(scores, targets, k, mask), brute_hr(scores, targets, k, mask));
            check(recall_at_k(scores, test, k, mask), brute_recall(scores, test, k, mask));
        }
    }
    return {mismatches == 0, std::to_string(cases) + " comparisons, " + std::to_string(mismatches) + " mismatches"};
}

// ---------------------------------------------------------------------------
// 7. Toy sparsity.

Outcome synthetic_sparsity() {
    std::string detail = "density";
    bool ok = true;
    for (auto seed : kToySeeds) {
        SyntheticSpec spec;
        spec.seed = seed;
        const double d = generate_synthetic(spec).slice_rows(0, spec.n_users).density();
        ok = ok && std::abs(d - 0.12) <= 0.02;
        detail += " " + fmt(d);
    }
    return {ok, detail};
}

// ---------------------------------------------------------------------------
// 8. ItemCF against set-based Jaccard.

Outcome itemcf_equivalence() {
    std::size_t mismatches = 0, cases = 0;
    for (std::uint64_t trial = 0; trial < 60; ++trial) {
        const std::size_t items = 2 + trial % 29, users = 5 + trial % 20;
        const std::size_t k = 1 + trial % 10;
        const auto x = testutil::random_interactions(users, items, 0.25, 2100 + trial);
        std::vector<std::set<std::size_t>> clickers(items);
        for (std::size_t u = 0; u < users; ++u) {
            for (ItemId i : x.row(u)) clickers[i].insert(u);
        }
        std::vector<std::vector<Neighbor>> expected(items);
        for (std::size_t i = 0; i < items; ++i) {
            for (std::size_t j = 0; j < items; ++j) {
                if (i == j) continue;
                std::set<std::size_t> both, either = clickers[i];
                std::set_intersection(clickers[i].begin(), clickers[i].end(), clickers[j].begin(), clickers[j].end(),
                                      std::inserter(both, both.begin()));
                either.insert(clickers[j].begin(), clickers[j].end());
                if (both.empty()) continue;
                expected[i].push_back({static_cast<ItemId>(j), static_cast<double>(both.size()) /
                                                                   static_cast<double>(either.size())});
            }
            std::stable_sort(expected[i].begin(), expected[i].end(),
                             [](const Neighbor& a, const Neighbor& b) { return a.sim > b.sim; });
            if (expected[i].size() > k) expected[i].resize(k);
        }

        VictimSpec spec;
        spec.kind = VictimKind::itemcf;
        spec.itemcf.neighbors = k;
        const auto victim = train_victim(spec, x);
        const ItemCfTable& table = *itemcf_table(*victim);
        const Matrix scores = victim->scores();
        for (std::size_t i = 0; i < items; ++i) {
            ++cases;
            bool same = table.neighbors[i].size() == expected[i].size();
            for (std::size_t n = 0; same && n < expected[i].size(); ++n) {
                same = table.neighbors[i][n].item == expected[i][n].item && table.neighbors[i][n].sim == expected[i][n].sim;
            }
            mismatches += same ? 0 : 1;
        }
        for (std::size_t u = 0; u < users; ++u) {
            for (std::size_t i = 0; i < items; ++i) {
                double s = 0.0;
                for (ItemId j : x.row(u)) {
                    for (const auto& nb : expected[i]) s += nb.item == j ? nb.sim : 0.0;
                }
                ++cases;
                mismatches += scores(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(i)) == s ? 0 : 1;
            }
        }
    }
    return {mismatches == 0, std::to_string(cases) + " table rows and scores, " + std::to_string(mismatches) +
                                 " mismatches"};
}

// ---------------------------------------------------------------------------
// 9 and 11. Reduced-scale synthetic (2,000 users x 3,000 items, about 2% dense).

SyntheticSpec reduced_spec(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.n_users = 2000;
    spec.n_fake = 20;
    spec.n_items = 3000;
    spec.rank = 20;
    spec.threshold = 9.2;
    spec.min_interactions = 2;
    spec.seed = seed;
    return spec;
}

Outcome baseline_dominance() {
    Stopwatch clock;
    std::size_t wins = 0;
    std::string detail = "HR@50 clean/randfilter/learned:";
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto spec = reduced_spec(seed);
        const auto normal = generate_synthetic(spec).slice_rows(0, spec.n_users);
        const auto split = leave_one_out(normal, seed + 100);
        const auto targets = sample_target_set(split.train, PopularityBucket::upper_torso, 5, seed + 7);
        const std::size_t n_fake = spec.n_users / 100;

        SurrogateSpec surrogate;
        surrogate.wrmf.factors = 16;
        AttackConfig cfg;
        cfg.n_fake = n_fake;
        cfg.outer_iters = 20;
        cfg.inner_steps = 100;
        cfg.window = 10;
        cfg.mode = GradientMode::truncated;
        cfg.outer_lr = 3.0;
        cfg.inner.lr = 0.03;
        cfg.init = InitScheme::sampled_from_normal_users;
        cfg.seed = seed;
        const auto learned = learn_fake_users(split.train, surrogate, AdvObjective{AdvKind::promote_ce, targets}, cfg);

        const std::size_t mean_len = split.train.nnz() / split.train.n_users();
        const auto randfilter = rand_filter_attack(targets, n_fake, mean_len - targets.size(), spec.n_items,
                                                   derive_seed(seed, 3));
        VictimSpec victim;
        victim.kind = VictimKind::wrmf;
        victim.wrmf.model.factors = 64;
        TransferConfig tc;
        tc.n_runs = 1;
        tc.k = 50;
        tc.seed = seed;
        tc.fake_budget = n_fake;
        const auto report = transfer_benchmark(
            split.train, {{"RandFilter", randfilter.to_interactions()}, {"Learned", learned.block.to_interactions()}},
            {victim}, targets, tc);
        std::map<std::string, double> hr;
        for (const auto& row : report.rows) hr[row.attack] = row.mean;
        wins += hr["Learned"] > hr["Clean"] && hr["Learned"] > hr["RandFilter"] ? 1 : 0;
        detail += " " + fmt(hr["Clean"], 3) + "/" + fmt(hr["RandFilter"], 3) + "/" + fmt(hr["Learned"], 3);
    }
    const double secs = clock.seconds();
    detail += ", learned best in " + std::to_string(wins) + "/5, " + fmt(secs, 4) + " s";
    return {wins >= 4 && secs <= 1800.0, detail};
}

// ---------------------------------------------------------------------------
// 10. CLI determinism.

std::map<std::string, std::string> output_files(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (ext == ".csv" || ext == ".json" || (ext == ".txt" && e.path().filename() != "timing.txt")) {
            files[e.path().filename().string()] = read_file(e.path());
        }
    }
    return files;
}

Outcome cli_determinism() {
    const fs::path root = fs::temp_directory_path() / "advrec_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const auto p = [&](const std::string& name) { return (root / name).string(); };
    using Args = std::vector<std::string>;
    const Args data{"--set", "data.path=" + p("data/train.txt")};
    auto with = [](Args a, const Args& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    const Args attack_common = with(data, {"--seed", "2", "--set", "targets.items=3,11", "--set", "attack.n_fake=3",
                                           "--set", "attack.outer_iters=2", "--set", "attack.inner_steps=5", "--set",
                                           "attack.window=5", "--set", "attack.inner_lr=0.05", "--set",
                                           "surrogate.factors=4"});
    const Args victims{"--set", "victim.wrmf.factors=4", "--set", "victim.wrmf.sweeps=2", "--set",
                       "victim.itemae.hidden=8", "--set", "victim.itemae.steps=10", "--set", "victim.ncf.factors=4",
                       "--set", "victim.ncf.mlp_hidden=4", "--set", "victim.ncf.epochs=2", "--set",
                       "victim.multvae.hidden=8", "--set", "victim.multvae.latent=4", "--set", "victim.multvae.epochs=2",
                       "--set", "victim.cml.factors=4", "--set", "victim.cml.epochs=2"};
    const std::vector<std::pair<std::string, Args>> commands{
        {"data", {"synth", "--seed", "4", "--set", "synth.n_users=60", "--set", "synth.n_fake=10", "--set",
                  "synth.n_items=40", "--set", "synth.rank=5", "--set", "synth.min_interactions=2"}},
        {"learned", with({"attack"}, attack_common)},
        {"grid", with(with({"attack"}, attack_common), {"--set", "attack.rho_grid=0.2,0.5"})},
        {"itemae", with(with({"attack"}, attack_common),
                        {"--set", "surrogate.kind=itemae", "--set", "surrogate.hidden=4", "--set",
                         "attack.mode=partial_plus_truncated", "--set", "attack.window=2"})},
        {"als", with(with({"attack"}, attack_common),
                     {"--set", "surrogate.kind=wrmf_als", "--set", "attack.mode=partial_only"})},
        {"randfilter", with(with({"attack"}, attack_common), {"--set", "attack.method=randfilter"})},
        {"transfer",
         with(with(with({"transfer", "--seed", "3"}, data), victims),
              {"--set", "targets.items=3,11", "--set", "attacks.RandFilter=" + p("randfilter/fake.txt"), "--set",
               "attacks.Learned=" + p("learned/fake.txt"), "--set", "transfer.n_runs=2", "--set", "transfer.k=5",
               "--set", "transfer.victims=wrmf,itemae,ncf,multvae,cml,itemcf"})},
        {"sliced", with(with(with({"transfer", "--seed", "5"}, data), victims),
                        {"--set", "transfer.buckets=head,tail", "--set", "transfer.n_targets=2", "--set",
                         "transfer.n_runs=1", "--set", "transfer.k=5", "--set", "attack.n_fake=3", "--set",
                         "attack.outer_iters=2", "--set", "attack.inner_steps=5", "--set", "attack.window=5", "--set",
                         "surrogate.factors=4"})},
        {"diagnose", with(with({"diagnose", "--seed", "1"}, data),
                          {"--set", "diagnose.fake=" + p("randfilter/fake.txt"), "--set", "diagnose.sample_normal=20",
                           "--set", "diagnose.bins=8", "--set", "victim.wrmf.factors=4"})},
    };

    std::size_t compared = 0;
    std::vector<std::string> failures;
    for (const auto& [name, args] : commands) {
        const Args full = with(args, {"--out", p(name)});
        std::map<std::string, std::string> first;
        for (int pass = 0; pass < 2; ++pass) {
            std::ostringstream out, err;
            const int code = run_cli(full, out, err);
            if (code != exit_ok) {
                failures.push_back(name + " exit " + std::to_string(code) + ": " + err.str());
                break;
            }
            auto files = output_files(p(name));
            if (pass == 0) {
                first = std::move(files);
            } else if (files != first) {
                failures.push_back(name + " outputs differ");
            } else {
                compared += files.size();
            }
        }
    }
    fs::remove_all(root);
    std::string detail = std::to_string(commands.size()) + " commands, " + std::to_string(compared) + " files identical";
    for (const auto& f : failures) detail += "; " + f;
    return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// 11. Clean victims beat popularity ranking (and, on request, full-scale Gowalla).

std::vector<VictimSpec> table_victims(std::uint64_t seed) {
    std::vector<VictimSpec> out;
    for (auto kind : {VictimKind::wrmf, VictimKind::itemae, VictimKind::ncf, VictimKind::multvae, VictimKind::cml,
                      VictimKind::itemcf}) {
        VictimSpec v;
        v.kind = kind;
        v.seed = seed;
        out.push_back(v);
    }
    return out;
}

std::string full_scale_check(bool& ok) {
    const char* path = std::getenv("ADVREC_GOWALLA");
    if (path == nullptr) return "full-scale Gowalla check skipped (set ADVREC_GOWALLA to run)";
    const std::map<VictimKind, double> reported{{VictimKind::wrmf, 0.2898}, {VictimKind::itemae, 0.2862},
                                                {VictimKind::ncf, 0.2878},  {VictimKind::multvae, 0.2905},
                                                {VictimKind::cml, 0.2872},  {VictimKind::itemcf, 0.2191}};
    const auto data = load_dataset(path, 15, DatasetFormat::gowalla());
    const auto split = holdout_split(data.matrix, 0.2, 1);
    std::string detail = "Gowalla Recall@50";
    for (const auto& spec : table_victims(1)) {
        const auto victim = train_victim(spec, split.train);
        const double r = recall_at_k([&](std::size_t f, std::size_t c) { return victim->score_rows(f, c); },
                                     split.train.n_users(), split.test, 50, split.train);
        ok = ok && std::abs(r - reported.at(spec.kind)) <= 0.03;
        detail += " " + spec.name() + ":" + fmt(r);
    }
    return detail;
}

Outcome clean_model_quality() {
    const auto spec = reduced_spec(1);
    const auto normal = generate_synthetic(spec).slice_rows(0, spec.n_users);
    const auto split = holdout_split(normal, 0.2, 11);
    const double pop = recall_at_k(popularity_scores(split.train, split.train.n_users()), split.test, 50, split.train);
    bool ok = true;
    std::string detail = "Recall@50 popularity " + fmt(pop);
    for (auto v : table_victims(1)) {
        // Widths scaled down with the data; Mult-VAE sees 4 batches per epoch here.
        v.wrmf.model.factors = 64;
        v.itemae.model.hidden = {64, 32, 64};
        v.ncf.factors = 32;
        v.ncf.mlp_hidden = 32;
        v.multvae.hidden = 128;
        v.multvae.latent = 32;
        v.multvae.lr = 0.01;
        v.cml.factors = 32;
        const auto victim = train_victim(v, split.train);
        const double r = recall_at_k([&](std::size_t f, std::size_t c) { return victim->score_rows(f, c); },
                                     split.train.n_users(), split.test, 50, split.train);
        ok = ok && r > pop;
        detail += ", " + v.name() + " " + fmt(r);
    }
    detail += "; " + full_scale_check(ok);
    return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient exactness", gradient_exactness},   {"approximation nesting", approximation_nesting},
        {"ALS correctness", als_correctness},         {"toy reproduction", toy_reproduction},
        {"unroll ablation", unroll_ablation},         {"metric oracles", metric_oracles},
        {"synthetic sparsity", synthetic_sparsity},   {"ItemCF equivalence", itemcf_equivalence},
        {"baseline dominance", baseline_dominance},   {"CLI determinism", cli_determinism},
        {"clean-model quality", clean_model_quality},
    };
    std::set<std::size_t> selected;
    for (int a = 1; a < argc; ++a) selected.insert(static_cast<std::size_t>(std::atoi(argv[a])));

    bool all = true;
    for (std::size_t c = 0; c < criteria.size(); ++c) {
        if (!selected.empty() && !selected.count(c + 1)) continue;
        Stopwatch clock;
        Outcome outcome;
        try {
            outcome = criteria[c].second();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        all = all && outcome.pass;
        std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << c + 1 << " (" << criteria[c].first
                  << "): " << outcome.detail << " [" << fmt(clock.seconds(), 4) << " s]" << std::endl;
    }
    return all ? 0 : 1;
}
