#pragma once

#include <iosfwd>
#include <vector>

#include "advrec/interactions.hpp"

namespace advrec {

struct ItemCfConfig {
    std::size_t neighbors = 50;

    void validate() const;
};

struct Neighbor {
    ItemId item;
    double sim;
};

/// Per item, its retained neighbors ordered by similarity descending then
/// item index ascending. Only positive similarities are kept.
struct ItemCfTable {
    std::vector<std::vector<Neighbor>> neighbors;
};

double jaccard(std::size_t n_a, std::size_t n_b, std::size_t n_common);

/// Jaccard item-item similarities truncated to the top-k per item (self excluded).
ItemCfTable itemcf_similarity(const InteractionMatrix& x, std::size_t k_neighbors);

/// score(u, i) = sum over j in row(u), in ascending j, of sim(i, j) for j among
/// the retained neighbors of i. Rows [first, first + count).
Matrix itemcf_scores(const ItemCfTable& table, const InteractionMatrix& x, std::size_t first,
                     std::size_t count);

/// Sparse triplets "item neighbor similarity", one per line.
void write_itemcf_triplets(std::ostream& out, const ItemCfTable& table);
ItemCfTable read_itemcf_triplets(std::istream& in, std::size_t n_items);

}  // namespace advrec
