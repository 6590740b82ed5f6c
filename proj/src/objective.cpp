#include "advrec/objective.hpp"

#include <algorithm>
#include <cmath>

namespace advrec {

double adv_loss_ce(const Matrix& scores, std::span<const ItemId> targets, Matrix* grad) {
    const Eigen::Index n_items = scores.cols();
    if (grad) grad->setZero(scores.rows(), n_items);
    const double n_targets = static_cast<double>(targets.size());
    double total = 0.0;
    Vector probs(n_items);
    for (Eigen::Index u = 0; u < scores.rows(); ++u) {
        const auto row = scores.row(u);
        const double mx = row.maxCoeff();
        double z = 0.0;
        for (Eigen::Index i = 0; i < n_items; ++i) {
            probs[i] = std::exp(row[i] - mx);
            z += probs[i];
        }
        const double log_z = mx + std::log(z);
        for (ItemId k : targets) total += log_z - row[k];
        if (grad) {
            auto g = grad->row(u);
            g = (n_targets / z) * probs.transpose();
            for (ItemId k : targets) g[k] -= 1.0;
        }
    }
    return total;
}

void AdvObjective::validate(std::size_t n_items) const {
    if (targets.empty()) throw ConfigError("adversarial objective needs at least one target item");
    auto sorted = targets;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError("duplicate target item");
    }
    if (sorted.back() >= n_items) {
        throw ConfigError("target item " + std::to_string(sorted.back()) + " out of range");
    }
}

}  // namespace advrec
