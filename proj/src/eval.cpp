#include "advrec/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include "json.hpp"

namespace advrec {

namespace {

constexpr std::size_t kBlockRows = 256;

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

template <typename RowFn>
void for_each_ranked_row(const ScoreFn& scores, std::size_t n_users, std::size_t n_items,
                         std::size_t k, const InteractionMatrix& mask, RowFn&& fn) {
    if (k > n_items) throw ConfigError("k exceeds the number of items");
    if (n_users > mask.n_users()) throw ConfigError("score rows exceed the mask's users");
    for (std::size_t first = 0; first < n_users; first += kBlockRows) {
        const std::size_t count = std::min(kBlockRows, n_users - first);
        const Matrix block = scores(first, count);
        for (std::size_t r = 0; r < count; ++r) {
            const auto row = block.row(static_cast<Eigen::Index>(r));
            const std::span<const double> s(row.data(), static_cast<std::size_t>(row.size()));
            fn(first + r, top_k(s, mask.row(first + r), k));
        }
    }
}

ScoreFn matrix_scores(const Matrix& m) {
    return [&m](std::size_t first, std::size_t count) -> Matrix {
        return m.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
    };
}

bool any_in(const std::vector<ItemId>& list, std::span<const ItemId> sorted_targets) {
    for (ItemId i : list) {
        if (std::binary_search(sorted_targets.begin(), sorted_targets.end(), i)) return true;
    }
    return false;
}

}  // namespace

std::vector<ItemId> top_k(std::span<const double> scores, std::span<const ItemId> masked, std::size_t k) {
    std::vector<ItemId> candidates;
    candidates.reserve(scores.size());
    std::size_t m = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        while (m < masked.size() && masked[m] < i) ++m;
        if (m < masked.size() && masked[m] == i) continue;
        candidates.push_back(static_cast<ItemId>(i));
    }
    auto better = [&](ItemId a, ItemId b) {
        return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
    };
    const std::size_t n = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n),
                      candidates.end(), better);
    candidates.resize(n);
    return candidates;
}

double hit_ratio_at_k(const ScoreFn& scores, std::size_t n_users, std::span<const ItemId> targets,
                      std::size_t k, const InteractionMatrix& mask) {
    if (n_users == 0) return 0.0;
    std::vector<ItemId> sorted(targets.begin(), targets.end());
    std::sort(sorted.begin(), sorted.end());
    std::size_t hits = 0;
    for_each_ranked_row(scores, n_users, mask.n_items(), k, mask,
                        [&](std::size_t, const std::vector<ItemId>& top) { hits += any_in(top, sorted); });
    return static_cast<double>(hits) / static_cast<double>(n_users);
}

double hit_ratio_at_k(const Matrix& scores, std::span<const ItemId> targets, std::size_t k,
                      const InteractionMatrix& mask) {
    return hit_ratio_at_k(matrix_scores(scores), static_cast<std::size_t>(scores.rows()), targets, k, mask);
}

double hit_ratio_at_k(const Matrix& scores, const InteractionMatrix& per_user_targets, std::size_t k,
                      const InteractionMatrix& mask) {
    const auto n_users = static_cast<std::size_t>(scores.rows());
    if (n_users == 0) return 0.0;
    std::size_t hits = 0;
    for_each_ranked_row(matrix_scores(scores), n_users, mask.n_items(), k, mask,
                        [&](std::size_t u, const std::vector<ItemId>& top) {
                            hits += any_in(top, per_user_targets.row(u));
                        });
    return static_cast<double>(hits) / static_cast<double>(n_users);
}

double recall_at_k(const ScoreFn& scores, std::size_t n_users, const InteractionMatrix& test,
                   std::size_t k, const InteractionMatrix& mask) {
    double total = 0.0;
    std::size_t counted = 0;
    for_each_ranked_row(scores, n_users, mask.n_items(), k, mask,
                        [&](std::size_t u, const std::vector<ItemId>& top) {
                            const auto truth = test.row(u);
                            if (truth.empty()) return;
                            std::size_t found = 0;
                            for (ItemId i : top) {
                                found += std::binary_search(truth.begin(), truth.end(), i);
                            }
                            total += static_cast<double>(found) /
                                     static_cast<double>(std::min(k, truth.size()));
                            ++counted;
                        });
    return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

double recall_at_k(const Matrix& scores, const InteractionMatrix& test, std::size_t k,
                   const InteractionMatrix& mask) {
    return recall_at_k(matrix_scores(scores), static_cast<std::size_t>(scores.rows()), test, k, mask);
}

Matrix popularity_scores(const InteractionMatrix& train, std::size_t n_users) {
    const auto counts = train.item_counts();
    Matrix out(static_cast<Eigen::Index>(n_users), static_cast<Eigen::Index>(counts.size()));
    for (std::size_t i = 0; i < counts.size(); ++i) {
        out.col(static_cast<Eigen::Index>(i)).setConstant(static_cast<double>(counts[i]));
    }
    return out;
}

void EvalReport::write_csv(std::ostream& out) const {
    out << "attack,victim,bucket,metric,k,mean,std,n_runs,seeds,values,failures\n";
    for (const auto& r : rows) {
        out << r.attack << ',' << r.victim << ',' << r.bucket << ',' << r.metric << ',' << r.k << ','
            << format_double(r.mean) << ',' << (r.std ? format_double(*r.std) : std::string()) << ','
            << r.n_runs << ',';
        for (std::size_t i = 0; i < r.seeds.size(); ++i) out << (i ? ";" : "") << r.seeds[i];
        out << ',';
        for (std::size_t i = 0; i < r.values.size(); ++i) out << (i ? ";" : "") << format_double(r.values[i]);
        out << ',' << r.failures.size() << '\n';
    }
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["targets"] = targets;
    auto& attacks = j["attacks"];
    attacks = nlohmann::ordered_json::object();
    for (const auto& r : rows) {
        nlohmann::ordered_json cell;
        cell["bucket"] = r.bucket;
        cell["metric"] = r.metric;
        cell["k"] = r.k;
        cell["mean"] = r.mean;
        cell["std"] = r.std ? nlohmann::ordered_json(*r.std) : nlohmann::ordered_json(nullptr);
        cell["n_runs"] = r.n_runs;
        cell["seeds"] = r.seeds;
        cell["values"] = r.values;
        cell["failures"] = r.failures;
        attacks[r.attack][r.victim].push_back(std::move(cell));
    }
    return j.dump(2) + "\n";
}

std::uint64_t run_seed(std::uint64_t master, std::size_t run) {
    return derive_seed(master, 1000 + run);
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
}

EvalReport transfer_benchmark(const InteractionMatrix& train, const std::vector<AttackArtifact>& attacks,
                              const std::vector<VictimSpec>& victims, const std::vector<ItemId>& targets,
                              const TransferConfig& cfg) {
    if (victims.empty()) throw ConfigError("transfer: empty victim list");
    if (cfg.n_runs == 0) throw ConfigError("transfer: n_runs must be >= 1");
    if (cfg.k == 0 || cfg.k > train.n_items()) throw ConfigError("transfer: k must lie in [1, n_items]");
    if (targets.empty()) throw ConfigError("transfer: empty target set");
    for (ItemId t : targets) {
        if (t >= train.n_items()) throw ConfigError("transfer: target item out of range");
    }
    for (const auto& v : victims) v.validate();
    for (const auto& a : attacks) {
        if (a.name == "Clean") throw ConfigError("transfer: attack name 'Clean' is reserved");
        if (a.fake.n_items() != train.n_items()) {
            throw ConfigError("transfer: attack '" + a.name + "' has a different item count");
        }
        if (cfg.fake_budget && a.fake.n_users() != *cfg.fake_budget) {
            throw ConfigError("transfer: attack '" + a.name + "' has " + std::to_string(a.fake.n_users()) +
                              " fake rows, expected " + std::to_string(*cfg.fake_budget));
        }
    }

    std::vector<AttackArtifact> all{{"Clean", InteractionMatrix(train.n_items(), {})}};
    all.insert(all.end(), attacks.begin(), attacks.end());

    struct Cell {
        std::optional<double> value;
        std::string error;
    };
    const std::size_t n_cells = all.size() * victims.size() * cfg.n_runs;
    std::vector<Cell> cells(n_cells);
    parallel_for(n_cells, cfg.jobs, [&](std::size_t idx) {
        const std::size_t run = idx % cfg.n_runs;
        const std::size_t v = (idx / cfg.n_runs) % victims.size();
        const std::size_t a = idx / (cfg.n_runs * victims.size());
        try {
            const auto data = train.append_rows(all[a].fake);
            auto spec = victims[v];
            spec.seed = run_seed(cfg.seed, run);
            const auto model = train_victim(spec, data);
            cells[idx].value = hit_ratio_at_k(
                [&](std::size_t first, std::size_t count) { return model->score_rows(first, count); },
                train.n_users(), targets, cfg.k, train);
        } catch (const Error& e) {
            cells[idx].error = e.what();
        }
    });

    EvalReport report;
    report.targets = targets;
    for (std::size_t a = 0; a < all.size(); ++a) {
        for (std::size_t v = 0; v < victims.size(); ++v) {
            EvalRow row;
            row.attack = all[a].name;
            row.victim = victims[v].name();
            row.bucket = cfg.bucket;
            row.k = cfg.k;
            for (std::size_t run = 0; run < cfg.n_runs; ++run) {
                const auto& c = cells[(a * victims.size() + v) * cfg.n_runs + run];
                if (c.value) {
                    row.seeds.push_back(run_seed(cfg.seed, run));
                    row.values.push_back(*c.value);
                } else {
                    row.failures.push_back(c.error);
                }
            }
            row.n_runs = row.values.size();
            if (row.n_runs > 0) {
                double sum = 0.0;
                for (double x : row.values) sum += x;
                row.mean = sum / static_cast<double>(row.n_runs);
            }
            if (row.n_runs >= 2) {
                double ss = 0.0;
                for (double x : row.values) ss += (x - row.mean) * (x - row.mean);
                row.std = std::sqrt(ss / static_cast<double>(row.n_runs - 1));
            }
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

EvalReport popularity_sliced_eval(const InteractionMatrix& train, const AttackFactory& attacks,
                                  const std::vector<VictimSpec>& victims,
                                  const std::vector<PopularityBucket>& buckets, std::size_t n_targets,
                                  const TransferConfig& cfg) {
    if (buckets.empty()) throw ConfigError("sliced eval: no buckets requested");
    EvalReport report;
    for (auto bucket : buckets) {
        const auto targets = sample_target_set(train, bucket, n_targets,
                                               derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(bucket)));
        auto c = cfg;
        c.bucket = bucket_name(bucket);
        auto part = transfer_benchmark(train, attacks(targets, bucket), victims, targets, c);
        report.targets.insert(report.targets.end(), targets.begin(), targets.end());
        for (auto& r : part.rows) report.rows.push_back(std::move(r));
    }
    return report;
}

}  // namespace advrec
