#include "advrec/interactions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

namespace advrec {

InteractionMatrix::InteractionMatrix(std::size_t n_items, std::vector<std::vector<ItemId>> rows)
    : n_items_(n_items), rows_(std::move(rows)) {
    for (std::size_t u = 0; u < rows_.size(); ++u) {
        const auto& r = rows_[u];
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (r[j] >= n_items_) {
                throw ConfigError("user " + std::to_string(u) + ": item index " +
                                  std::to_string(r[j]) + " out of range");
            }
            if (j > 0 && r[j - 1] >= r[j]) {
                throw ConfigError("user " + std::to_string(u) + ": row not strictly ascending");
            }
        }
        nnz_ += r.size();
    }
}

InteractionMatrix InteractionMatrix::from_pairs(
    std::size_t n_users, std::size_t n_items,
    const std::vector<std::pair<std::size_t, ItemId>>& pairs) {
    std::vector<std::vector<ItemId>> rows(n_users);
    for (const auto& [u, i] : pairs) {
        if (u >= n_users) {
            throw ConfigError("user index " + std::to_string(u) + " out of range");
        }
        rows[u].push_back(i);
    }
    for (auto& r : rows) {
        std::sort(r.begin(), r.end());
        r.erase(std::unique(r.begin(), r.end()), r.end());
    }
    return InteractionMatrix(n_items, std::move(rows));
}

InteractionMatrix InteractionMatrix::from_dense(const Matrix& values, double threshold) {
    std::vector<std::vector<ItemId>> rows(values.rows());
    for (Eigen::Index u = 0; u < values.rows(); ++u) {
        for (Eigen::Index i = 0; i < values.cols(); ++i) {
            if (values(u, i) >= threshold) rows[u].push_back(static_cast<ItemId>(i));
        }
    }
    return InteractionMatrix(values.cols(), std::move(rows));
}

double InteractionMatrix::density() const {
    const double cells = static_cast<double>(n_users()) * static_cast<double>(n_items_);
    return cells > 0 ? static_cast<double>(nnz_) / cells : 0.0;
}

bool InteractionMatrix::contains(std::size_t user, ItemId item) const {
    const auto& r = rows_[user];
    return std::binary_search(r.begin(), r.end(), item);
}

std::vector<std::size_t> InteractionMatrix::item_counts() const {
    std::vector<std::size_t> counts(n_items_, 0);
    for (const auto& r : rows_) {
        for (ItemId i : r) ++counts[i];
    }
    return counts;
}

std::vector<std::vector<std::uint32_t>> InteractionMatrix::columns() const {
    std::vector<std::vector<std::uint32_t>> cols(n_items_);
    for (std::size_t u = 0; u < rows_.size(); ++u) {
        for (ItemId i : rows_[u]) cols[i].push_back(static_cast<std::uint32_t>(u));
    }
    return cols;
}

Matrix InteractionMatrix::to_dense() const {
    Matrix m = Matrix::Zero(n_users(), n_items_);
    for (std::size_t u = 0; u < rows_.size(); ++u) {
        for (ItemId i : rows_[u]) m(u, i) = 1.0;
    }
    return m;
}

InteractionMatrix InteractionMatrix::append_rows(const InteractionMatrix& extra) const {
    if (extra.n_users() > 0 && extra.n_items() != n_items_) {
        throw ConfigError("append_rows: item universe mismatch");
    }
    auto rows = rows_;
    rows.insert(rows.end(), extra.rows_.begin(), extra.rows_.end());
    return InteractionMatrix(n_items_, std::move(rows));
}

InteractionMatrix InteractionMatrix::slice_rows(std::size_t first, std::size_t count) const {
    if (first + count > rows_.size()) throw ConfigError("slice_rows: out of range");
    std::vector<std::vector<ItemId>> rows(rows_.begin() + first, rows_.begin() + first + count);
    return InteractionMatrix(n_items_, std::move(rows));
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',' || c == ' ' || c == '\t' || c == '\r') {
            if (!cur.empty()) fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) fields.push_back(std::move(cur));
    return fields;
}

}  // namespace

LoadedDataset read_dataset(std::istream& in, std::size_t min_feedback, DatasetFormat format) {
    const std::size_t need = std::max(format.user_column, format.item_column) + 1;
    std::vector<std::pair<std::string, std::string>> raw;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        auto fields = split_fields(line);
        if (fields.size() < need) {
            throw ParseError("expected at least " + std::to_string(need) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        raw.emplace_back(std::move(fields[format.user_column]),
                         std::move(fields[format.item_column]));
    }

    // Provisional dense ids in order of first appearance.
    std::unordered_map<std::string, std::size_t> user_map, item_map;
    std::vector<std::string> user_names, item_names;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(raw.size());
    for (const auto& [u, i] : raw) {
        auto [uit, u_new] = user_map.try_emplace(u, user_names.size());
        if (u_new) user_names.push_back(u);
        auto [iit, i_new] = item_map.try_emplace(i, item_names.size());
        if (i_new) item_names.push_back(i);
        pairs.emplace_back(uit->second, iit->second);
    }
    // Collapse duplicates while keeping the first occurrence order.
    {
        std::unordered_set<std::uint64_t> seen;
        std::vector<std::pair<std::size_t, std::size_t>> dedup;
        dedup.reserve(pairs.size());
        for (const auto& p : pairs) {
            const std::uint64_t key = (static_cast<std::uint64_t>(p.first) << 32) | p.second;
            if (seen.insert(key).second) dedup.push_back(p);
        }
        pairs = std::move(dedup);
    }

    std::vector<bool> user_alive(user_names.size(), true), item_alive(item_names.size(), true);
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<std::size_t> uc(user_names.size(), 0), ic(item_names.size(), 0);
        for (const auto& [u, i] : pairs) {
            if (user_alive[u] && item_alive[i]) {
                ++uc[u];
                ++ic[i];
            }
        }
        for (std::size_t u = 0; u < uc.size(); ++u) {
            if (user_alive[u] && uc[u] < min_feedback) {
                user_alive[u] = false;
                changed = true;
            }
        }
        for (std::size_t i = 0; i < ic.size(); ++i) {
            if (item_alive[i] && ic[i] < min_feedback) {
                item_alive[i] = false;
                changed = true;
            }
        }
    }

    LoadedDataset out;
    std::vector<long> user_index(user_names.size(), -1), item_index(item_names.size(), -1);
    std::vector<std::pair<std::size_t, ItemId>> kept;
    for (const auto& [u, i] : pairs) {
        if (!user_alive[u] || !item_alive[i]) continue;
        if (user_index[u] < 0) {
            user_index[u] = static_cast<long>(out.user_ids.size());
            out.user_ids.push_back(user_names[u]);
        }
        if (item_index[i] < 0) {
            item_index[i] = static_cast<long>(out.item_ids.size());
            out.item_ids.push_back(item_names[i]);
        }
        kept.emplace_back(static_cast<std::size_t>(user_index[u]),
                          static_cast<ItemId>(item_index[i]));
    }
    if (kept.empty()) {
        throw DataError("dataset is empty after filtering with min_feedback=" +
                        std::to_string(min_feedback));
    }
    out.matrix = InteractionMatrix::from_pairs(out.user_ids.size(), out.item_ids.size(), kept);
    return out;
}

LoadedDataset load_dataset(const std::string& path, std::size_t min_feedback, DatasetFormat format) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path);
    return read_dataset(in, min_feedback, format);
}

void write_dataset(std::ostream& out, const InteractionMatrix& m, std::size_t user_offset) {
    for (std::size_t u = 0; u < m.n_users(); ++u) {
        for (ItemId i : m.row(u)) out << (u + user_offset) << ' ' << i << '\n';
    }
}

DatasetSplit holdout_split(const InteractionMatrix& x, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("holdout ratio must be in (0, 1)");
    Rng rng(seed);
    std::vector<std::vector<ItemId>> train(x.n_users()), test(x.n_users());
    for (std::size_t u = 0; u < x.n_users(); ++u) {
        std::vector<ItemId> items(x.row(u).begin(), x.row(u).end());
        const auto n_test = static_cast<std::size_t>(std::floor(ratio * items.size()));
        // Partial Fisher-Yates: the first n_test positions become the test draw.
        for (std::size_t j = 0; j < n_test; ++j) {
            std::uniform_int_distribution<std::size_t> pick(j, items.size() - 1);
            std::swap(items[j], items[pick(rng)]);
        }
        test[u].assign(items.begin(), items.begin() + n_test);
        train[u].assign(items.begin() + n_test, items.end());
        std::sort(test[u].begin(), test[u].end());
        std::sort(train[u].begin(), train[u].end());
    }
    return {InteractionMatrix(x.n_items(), std::move(train)),
            InteractionMatrix(x.n_items(), std::move(test)), seed, ratio, "holdout_per_user"};
}

DatasetSplit leave_one_out(const InteractionMatrix& x, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<ItemId>> train(x.n_users()), test(x.n_users());
    for (std::size_t u = 0; u < x.n_users(); ++u) {
        auto row = x.row(u);
        if (row.size() < 2) {
            throw DataError("leave_one_out: user " + std::to_string(u) + " has " +
                            std::to_string(row.size()) + " interaction(s), need at least 2");
        }
        std::uniform_int_distribution<std::size_t> pick(0, row.size() - 1);
        const std::size_t held = pick(rng);
        for (std::size_t j = 0; j < row.size(); ++j) {
            (j == held ? test[u] : train[u]).push_back(row[j]);
        }
    }
    return {InteractionMatrix(x.n_items(), std::move(train)),
            InteractionMatrix(x.n_items(), std::move(test)), seed, 0.0, "leave_one_out"};
}

void SyntheticSpec::validate() const {
    if (n_users == 0 || n_items == 0) throw ConfigError("synthetic: n_users and n_items must be > 0");
    if (rank == 0) throw ConfigError("synthetic: rank must be >= 1");
    if (rank >= std::min(n_users, n_items)) {
        throw ConfigError("synthetic: rank must be smaller than min(n_users, n_items)");
    }
    if (!std::isfinite(threshold)) throw ConfigError("synthetic: threshold must be finite");
    if (min_interactions > n_items) throw ConfigError("synthetic: min_interactions exceeds n_items");
}

InteractionMatrix generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t d = spec.rank;
    Matrix item_factors(spec.n_items, d);
    for (Eigen::Index k = 0; k < item_factors.size(); ++k) item_factors.data()[k] = normal(rng);

    const std::size_t total = spec.n_users + spec.n_fake;
    std::vector<std::vector<ItemId>> rows(total);
    Vector mu(d);
    constexpr int kMaxResample = 100;
    for (std::size_t u = 0; u < total; ++u) {
        int attempt = 0;
        for (;; ++attempt) {
            for (std::size_t k = 0; k < d; ++k) mu[k] = normal(rng);
            const Vector scores = item_factors * mu;
            rows[u].clear();
            for (std::size_t i = 0; i < spec.n_items; ++i) {
                if (scores[i] >= spec.threshold) rows[u].push_back(static_cast<ItemId>(i));
            }
            if (!rows[u].empty() && rows[u].size() >= spec.min_interactions) break;
            if (attempt + 1 >= kMaxResample) {
                throw DataError("synthetic: user " + std::to_string(u) + " has fewer than " +
                                std::to_string(std::max<std::size_t>(spec.min_interactions, 1)) +
                                " interactions after " +
                                std::to_string(kMaxResample) + " draws; lower the threshold");
            }
        }
    }
    return InteractionMatrix(spec.n_items, std::move(rows));
}

PopularityBucket parse_bucket(const std::string& name) {
    if (name == "head") return PopularityBucket::head;
    if (name == "upper_torso") return PopularityBucket::upper_torso;
    if (name == "lower_torso") return PopularityBucket::lower_torso;
    if (name == "tail") return PopularityBucket::tail;
    throw ConfigError("unknown popularity bucket: " + name);
}

std::string bucket_name(PopularityBucket b) {
    switch (b) {
        case PopularityBucket::head: return "head";
        case PopularityBucket::upper_torso: return "upper_torso";
        case PopularityBucket::lower_torso: return "lower_torso";
        case PopularityBucket::tail: return "tail";
    }
    return "unknown";
}

const std::vector<ItemId>& PopularityBuckets::get(PopularityBucket b) const {
    switch (b) {
        case PopularityBucket::head: return head;
        case PopularityBucket::upper_torso: return upper_torso;
        case PopularityBucket::lower_torso: return lower_torso;
        case PopularityBucket::tail: return tail;
    }
    return tail;
}

PopularityBuckets popularity_buckets(const InteractionMatrix& x) {
    const std::size_t n = x.n_items();
    if (n == 0) throw ConfigError("popularity_buckets: empty item universe");
    const auto counts = x.item_counts();
    std::vector<ItemId> order(n);
    std::iota(order.begin(), order.end(), ItemId{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](ItemId a, ItemId b) { return counts[a] > counts[b]; });
    // Rank cut at the given percentile from the top, rounded to nearest.
    auto cut = [n](std::size_t percent_from_top) { return (n * percent_from_top + 50) / 100; };
    const std::size_t c_head = cut(5), c_upper = cut(25), c_lower = cut(50);
    PopularityBuckets b;
    b.head.assign(order.begin(), order.begin() + c_head);
    b.upper_torso.assign(order.begin() + c_head, order.begin() + c_upper);
    b.lower_torso.assign(order.begin() + c_upper, order.begin() + c_lower);
    b.tail.assign(order.begin() + c_lower, order.end());
    for (auto* v : {&b.head, &b.upper_torso, &b.lower_torso, &b.tail}) std::sort(v->begin(), v->end());
    return b;
}

std::vector<ItemId> sample_items(const std::vector<ItemId>& pool, std::size_t n, std::uint64_t seed) {
    if (n > pool.size()) {
        throw ConfigError("cannot sample " + std::to_string(n) + " items from a pool of " +
                          std::to_string(pool.size()));
    }
    std::vector<ItemId> items = pool;
    Rng rng(seed);
    for (std::size_t j = 0; j < n; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, items.size() - 1);
        std::swap(items[j], items[pick(rng)]);
    }
    items.resize(n);
    std::sort(items.begin(), items.end());
    return items;
}

std::vector<ItemId> sample_target_set(const InteractionMatrix& x, PopularityBucket bucket,
                                      std::size_t n, std::uint64_t seed) {
    return sample_items(popularity_buckets(x).get(bucket), n, seed);
}

}  // namespace advrec
