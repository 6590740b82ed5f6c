#pragma once

#include <span>
#include <vector>

#include "advrec/common.hpp"

namespace advrec {

/// Cross-entropy promote loss summed over target items:
///   sum_k sum_u -log softmax(R_u)_k
/// evaluated with max-subtraction. Writes dL/dR into `grad` when set.
double adv_loss_ce(const Matrix& scores, std::span<const ItemId> targets, Matrix* grad = nullptr);

enum class AdvKind { promote_ce };

struct AdvObjective {
    AdvKind kind = AdvKind::promote_ce;
    std::vector<ItemId> targets;

    /// Throws ConfigError if the target set is empty, has duplicates or is out of range.
    void validate(std::size_t n_items) const;
    double value(const Matrix& scores, Matrix* grad = nullptr) const {
        return adv_loss_ce(scores, targets, grad);
    }
};

}  // namespace advrec
