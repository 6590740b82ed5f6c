#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "advrec/interactions.hpp"

namespace advrec {

/// Clicked-item popularity distributions of sampled normal users and fake users.
struct PopularityDensity {
    std::vector<double> edges;  // bins + 1 log-spaced edges
    std::vector<double> normal;  // per-bin mass, sums to 1
    std::vector<double> fake;
    std::vector<std::size_t> sampled_users;  // normal rows used, ascending
};

/// Popularity is each item's click count in `normal`, clamped below at 1.
/// Edges span [1, max count + 1] on a log scale.
PopularityDensity popularity_density(const InteractionMatrix& normal, const InteractionMatrix& fake,
                                     std::size_t sample_normal, std::uint64_t seed,
                                     std::size_t bins = 64);

struct PcaResult {
    Matrix coords;                  // n x dims
    Matrix components;              // K x dims, unit columns
    std::vector<double> variances;  // per component, descending
    double explained_ratio = 0.0;
    bool rank_deficient = false;
    std::string warning;
};

/// Centered projection onto the leading principal directions, found by
/// subspace iteration on the covariance. Each component's largest-magnitude
/// loading is positive. Directions past the data rank come out as zeros.
PcaResult pca_project(const Matrix& embeddings, std::size_t dims = 2, double tol = 1e-9);

/// Mean pairwise distance among the fake rows over the same quantity for
/// equal-size random draws of the other rows, averaged over `resamples`.
double clusteredness_score(const Matrix& coords, std::span<const std::size_t> fake_rows,
                           std::uint64_t seed, std::size_t resamples = 20);

/// bin_low,bin_high,density_normal,density_fake
void write_density_csv(std::ostream& out, const PopularityDensity& d);

/// user_index,is_fake,x,y
void write_coords_csv(std::ostream& out, const Matrix& coords, std::span<const std::size_t> user_index,
                      const std::vector<bool>& is_fake);

}  // namespace advrec
