#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advrec/interactions.hpp"
#include "advrec/victims.hpp"

namespace advrec {

/// Indices of the k best items in `scores`, skipping `masked` (sorted), by
/// score descending then item index ascending. Shorter if fewer remain.
std::vector<ItemId> top_k(std::span<const double> scores, std::span<const ItemId> masked, std::size_t k);

/// Fraction of rows of `scores` whose top-k (training items of `mask` removed)
/// contains any of `targets`. Rows beyond mask.n_users() are not allowed.
double hit_ratio_at_k(const Matrix& scores, std::span<const ItemId> targets, std::size_t k,
                      const InteractionMatrix& mask);

/// Same with a per-user target list (e.g. one held-out item per user).
double hit_ratio_at_k(const Matrix& scores, const InteractionMatrix& per_user_targets, std::size_t k,
                      const InteractionMatrix& mask);

/// Mean over users with test items of |top-k intersect test| / min(k, |test|).
double recall_at_k(const Matrix& scores, const InteractionMatrix& test, std::size_t k,
                   const InteractionMatrix& mask);

/// Scores block provider for rows [first, first + count).
using ScoreFn = std::function<Matrix(std::size_t first, std::size_t count)>;

/// Blocked variants for models too large to score in one matrix. Only the
/// first n_users rows are evaluated.
double hit_ratio_at_k(const ScoreFn& scores, std::size_t n_users, std::span<const ItemId> targets,
                      std::size_t k, const InteractionMatrix& mask);
double recall_at_k(const ScoreFn& scores, std::size_t n_users, const InteractionMatrix& test,
                   std::size_t k, const InteractionMatrix& mask);

/// Every user gets the training click counts as scores.
Matrix popularity_scores(const InteractionMatrix& train, std::size_t n_users);

/// A named set of fake rows to append to the training data.
struct AttackArtifact {
    std::string name;
    InteractionMatrix fake;
};

struct EvalRow {
    std::string attack;
    std::string victim;
    std::string bucket = "all";
    std::string metric = "hr";
    std::size_t k = 0;
    double mean = 0.0;
    std::optional<double> std;  // sample std, only when >= 2 successful runs
    std::size_t n_runs = 0;     // successful runs
    std::vector<std::uint64_t> seeds;
    std::vector<double> values;  // per-run cells, in run order
    std::vector<std::string> failures;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::vector<ItemId> targets;

    void write_csv(std::ostream& out) const;
    std::string to_json() const;
};

struct TransferConfig {
    std::size_t n_runs = 4;
    std::size_t k = 50;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    /// When set, every attack must carry exactly this many fake rows.
    std::optional<std::size_t> fake_budget;
    std::string bucket = "all";
};

/// Per-run victim seed derived from the master seed.
std::uint64_t run_seed(std::uint64_t master, std::size_t run);

/// For each (attack, victim, run): append the fake rows, train the victim from
/// scratch and measure target HR@k over normal users. A "Clean" row (no fake
/// rows) comes first. Failed cells are recorded and skipped.
EvalReport transfer_benchmark(const InteractionMatrix& train, const std::vector<AttackArtifact>& attacks,
                              const std::vector<VictimSpec>& victims, const std::vector<ItemId>& targets,
                              const TransferConfig& cfg);

/// Builds the attacks for a target set drawn from a given bucket.
using AttackFactory =
    std::function<std::vector<AttackArtifact>(const std::vector<ItemId>& targets, PopularityBucket)>;

/// Runs transfer_benchmark once per bucket with n_targets items sampled from it.
EvalReport popularity_sliced_eval(const InteractionMatrix& train, const AttackFactory& attacks,
                                  const std::vector<VictimSpec>& victims,
                                  const std::vector<PopularityBucket>& buckets, std::size_t n_targets,
                                  const TransferConfig& cfg);

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace advrec
