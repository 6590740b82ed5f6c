#include "advrec/itemcf.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

namespace advrec {

void ItemCfConfig::validate() const {
    if (neighbors == 0) throw ConfigError("itemcf: neighbors must be >= 1");
}

double jaccard(std::size_t n_a, std::size_t n_b, std::size_t n_common) {
    const std::size_t uni = n_a + n_b - n_common;
    return uni == 0 ? 0.0 : static_cast<double>(n_common) / static_cast<double>(uni);
}

ItemCfTable itemcf_similarity(const InteractionMatrix& x, std::size_t k_neighbors) {
    const std::size_t n_items = x.n_items();
    const auto counts = x.item_counts();
    const auto columns = x.columns();
    ItemCfTable table;
    table.neighbors.resize(n_items);

    std::vector<std::size_t> common(n_items, 0);
    std::vector<ItemId> touched;
    for (std::size_t i = 0; i < n_items; ++i) {
        touched.clear();
        for (auto u : columns[i]) {
            for (ItemId j : x.row(u)) {
                if (j == i) continue;
                if (common[j]++ == 0) touched.push_back(j);
            }
        }
        auto& out = table.neighbors[i];
        out.reserve(touched.size());
        for (ItemId j : touched) {
            out.push_back({j, jaccard(counts[i], counts[j], common[j])});
            common[j] = 0;
        }
        auto by_rank = [](const Neighbor& a, const Neighbor& b) {
            return a.sim != b.sim ? a.sim > b.sim : a.item < b.item;
        };
        if (out.size() > k_neighbors) {
            std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k_neighbors),
                              out.end(), by_rank);
            out.resize(k_neighbors);
        } else {
            std::sort(out.begin(), out.end(), by_rank);
        }
    }
    return table;
}

Matrix itemcf_scores(const ItemCfTable& table, const InteractionMatrix& x, std::size_t first,
                     std::size_t count) {
    const std::size_t n_items = table.neighbors.size();
    // reverse[j] lists (i, sim) with j among the neighbors of i, i ascending.
    std::vector<std::vector<Neighbor>> reverse(n_items);
    for (std::size_t i = 0; i < n_items; ++i) {
        for (const auto& nb : table.neighbors[i]) {
            reverse[nb.item].push_back({static_cast<ItemId>(i), nb.sim});
        }
    }
    Matrix scores = Matrix::Zero(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(n_items));
    for (std::size_t r = 0; r < count; ++r) {
        auto row = scores.row(static_cast<Eigen::Index>(r));
        for (ItemId j : x.row(first + r)) {
            for (const auto& nb : reverse[j]) row[nb.item] += nb.sim;
        }
    }
    return scores;
}

void write_itemcf_triplets(std::ostream& out, const ItemCfTable& table) {
    out.precision(17);
    for (std::size_t i = 0; i < table.neighbors.size(); ++i) {
        for (const auto& nb : table.neighbors[i]) out << i << ' ' << nb.item << ' ' << nb.sim << '\n';
    }
}

ItemCfTable read_itemcf_triplets(std::istream& in, std::size_t n_items) {
    ItemCfTable table;
    table.neighbors.resize(n_items);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::size_t i = 0, j = 0;
        double sim = 0.0;
        if (!(fields >> i >> j >> sim) || i >= n_items || j >= n_items) {
            throw ParseError("malformed similarity triplet", line_no);
        }
        table.neighbors[i].push_back({static_cast<ItemId>(j), sim});
    }
    return table;
}

}  // namespace advrec
