#include "advrec/common.hpp"

namespace advrec {

void fill_normal(Matrix& m, double std, Rng& rng) {
    std::normal_distribution<double> dist(0.0, std);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = dist(rng);
    }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t offset) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (offset + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

bool all_finite(const Matrix& m) {
    return m.allFinite();
}

}  // namespace advrec
