#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advrec/common.hpp"

namespace advrec {

/// Binary implicit-feedback table stored as per-user sorted item lists.
///
/// Every row is strictly ascending and every item index is below n_items.
/// Values are immutable after construction.
class InteractionMatrix {
public:
    InteractionMatrix() = default;

    /// Rows must already be strictly ascending; throws ConfigError otherwise.
    InteractionMatrix(std::size_t n_items, std::vector<std::vector<ItemId>> rows);

    /// Builds from (user, item) pairs in any order; duplicates collapse.
    static InteractionMatrix from_pairs(std::size_t n_users, std::size_t n_items,
                                        const std::vector<std::pair<std::size_t, ItemId>>& pairs);

    /// Binarizes a dense table: entries >= threshold become interactions.
    static InteractionMatrix from_dense(const Matrix& values, double threshold = 0.5);

    std::size_t n_users() const { return rows_.size(); }
    std::size_t n_items() const { return n_items_; }
    std::size_t nnz() const { return nnz_; }
    double density() const;

    std::span<const ItemId> row(std::size_t user) const { return rows_[user]; }
    const std::vector<std::vector<ItemId>>& rows() const { return rows_; }
    bool contains(std::size_t user, ItemId item) const;

    /// Number of users that interacted with each item.
    std::vector<std::size_t> item_counts() const;
    /// Item-major view: for each item, the ascending list of users.
    std::vector<std::vector<std::uint32_t>> columns() const;

    Matrix to_dense() const;

    /// Rows of `this` followed by rows of `extra` (same item universe).
    InteractionMatrix append_rows(const InteractionMatrix& extra) const;
    InteractionMatrix slice_rows(std::size_t first, std::size_t count) const;

    bool operator==(const InteractionMatrix& other) const = default;

private:
    std::size_t n_items_ = 0;
    std::size_t nnz_ = 0;
    std::vector<std::vector<ItemId>> rows_;
};

/// Column layout for text dataset files (0-based field indices).
struct DatasetFormat {
    std::size_t user_column = 0;
    std::size_t item_column = 1;

    /// Raw Gowalla check-ins: user, time, lat, lon, location.
    static DatasetFormat gowalla() { return {0, 4}; }
};

struct LoadedDataset {
    InteractionMatrix matrix;
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;
};

/// Parses whitespace- or comma-separated interaction lines ('#' comments),
/// then drops users and items with fewer than `min_feedback` interactions
/// until no more can be dropped. Ids are remapped in order of first appearance.
LoadedDataset read_dataset(std::istream& in, std::size_t min_feedback,
                           DatasetFormat format = {});
LoadedDataset load_dataset(const std::string& path, std::size_t min_feedback,
                           DatasetFormat format = {});

/// Writes "user item" lines; user indices are shifted by `user_offset`.
void write_dataset(std::ostream& out, const InteractionMatrix& m, std::size_t user_offset = 0);

struct DatasetSplit {
    InteractionMatrix train;
    InteractionMatrix test;
    std::uint64_t seed = 0;
    double ratio = 0.0;
    std::string scheme;
};

/// Per user, moves floor(ratio * |row|) uniformly chosen interactions to test.
DatasetSplit holdout_split(const InteractionMatrix& x, double ratio, std::uint64_t seed);

/// Moves exactly one uniformly chosen interaction per user to test.
DatasetSplit leave_one_out(const InteractionMatrix& x, std::uint64_t seed);

struct SyntheticSpec {
    std::size_t n_users = 900;
    std::size_t n_fake = 100;
    std::size_t n_items = 300;
    std::size_t rank = 20;
    double threshold = 5.0;
    std::uint64_t seed = 0;
    /// Rows with fewer interactions are redrawn like empty rows.
    std::size_t min_interactions = 1;

    void validate() const;
};

/// Low-rank binarized data: x_ui = 1 iff mu_u . nu_i >= threshold, with mu and
/// nu drawn from N(0, I_rank). Produces n_users + n_fake rows; the trailing
/// n_fake rows are a reserve pool drawn from the same distribution. Users
/// whose row has fewer than min_interactions entries get their factor redrawn
/// (at most 100 times).
InteractionMatrix generate_synthetic(const SyntheticSpec& spec);

enum class PopularityBucket { head, upper_torso, lower_torso, tail };

PopularityBucket parse_bucket(const std::string& name);
std::string bucket_name(PopularityBucket b);

/// Items ranked by click count (descending, ties by ascending index) and
/// sliced at the 95th/75th/50th percentile ranks.
struct PopularityBuckets {
    std::vector<ItemId> head;
    std::vector<ItemId> upper_torso;
    std::vector<ItemId> lower_torso;
    std::vector<ItemId> tail;

    const std::vector<ItemId>& get(PopularityBucket b) const;
};

PopularityBuckets popularity_buckets(const InteractionMatrix& x);

/// n distinct items drawn uniformly from `pool`, returned sorted.
std::vector<ItemId> sample_items(const std::vector<ItemId>& pool, std::size_t n, std::uint64_t seed);

std::vector<ItemId> sample_target_set(const InteractionMatrix& x, PopularityBucket bucket,
                                      std::size_t n, std::uint64_t seed);

}  // namespace advrec
