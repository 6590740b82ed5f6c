#pragma once

#include <cmath>
#include <vector>

#include "advrec/common.hpp"

namespace advrec::detail {

/// Adam for a parameter table updated a few rows at a time (embeddings) or
/// all at once (dense layers). Bias correction uses a per-row step count so
/// rarely touched rows are not over-corrected.
class AdamTable {
public:
    AdamTable() = default;
    AdamTable(Eigen::Index rows, Eigen::Index cols, double lr, double beta1 = 0.9,
              double beta2 = 0.999, double eps = 1e-8)
        : m_(Matrix::Zero(rows, cols)), s_(Matrix::Zero(rows, cols)), steps_(rows, 0),
          lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    template <typename Row, typename Grad>
    void update_row(Row&& param_row, Eigen::Index r, const Grad& grad) {
        const long t = ++steps_[static_cast<std::size_t>(r)];
        m_.row(r) = b1_ * m_.row(r) + (1.0 - b1_) * grad;
        s_.row(r) = b2_ * s_.row(r) + (1.0 - b2_) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t));
        param_row.array() -=
            lr_ * (m_.row(r).array() / c1) / ((s_.row(r).array() / c2).sqrt() + eps_);
    }

    void update(Matrix& param, const Matrix& grad) {
        for (Eigen::Index r = 0; r < param.rows(); ++r) update_row(param.row(r), r, grad.row(r));
    }

    void update(Vector& param, const Vector& grad) {
        Eigen::Map<Matrix> p(param.data(), 1, param.size());
        Eigen::Map<const Matrix> g(grad.data(), 1, grad.size());
        update_row(p.row(0), 0, g.row(0));
    }

private:
    Matrix m_, s_;
    std::vector<long> steps_;
    double lr_ = 0.001, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
};

}  // namespace advrec::detail
