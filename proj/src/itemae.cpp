#include "advrec/itemae.hpp"

namespace advrec {

namespace {

struct Forward {
    std::vector<Matrix> A;  // A[0] = input, A[l] = output of layer l
};

Forward forward(const ItemAeParams& p, const Matrix& input) {
    Forward f;
    f.A.reserve(p.W.size() + 1);
    f.A.push_back(input);
    for (std::size_t l = 0; l < p.W.size(); ++l) {
        Matrix z = p.W[l] * f.A.back();
        z.colwise() += p.b[l];
        if (l + 1 < p.W.size()) z = z.array().tanh().matrix();
        f.A.push_back(std::move(z));
    }
    return f;
}

/// Backward pass from the output cotangent D. Returns the cotangent of the
/// network input; fills per-layer gradients (without regularization).
/// Keeps the per-layer cotangents G[l] (w.r.t. A[l]) and D[l] (w.r.t. Z[l+1]).
struct Backward {
    std::vector<Matrix> gW;
    std::vector<Vector> gb;
    std::vector<Matrix> D;  // D[l]: cotangent of pre-activation of layer l
    std::vector<Matrix> G;  // G[l]: cotangent of A[l], l < n_layers
};

Backward backward(const ItemAeParams& p, const Forward& f, Matrix d_out) {
    const std::size_t n = p.W.size();
    Backward b;
    b.gW.resize(n);
    b.gb.resize(n);
    b.D.resize(n);
    b.G.resize(n);
    b.D[n - 1] = std::move(d_out);
    for (std::size_t l = n; l-- > 0;) {
        b.gW[l].noalias() = b.D[l] * f.A[l].transpose();
        b.gb[l] = b.D[l].rowwise().sum();
        b.G[l].noalias() = p.W[l].transpose() * b.D[l];
        if (l > 0) {
            b.D[l - 1] = b.G[l].cwiseProduct((1.0 - f.A[l].array().square()).matrix());
        }
    }
    return b;
}

Vector pack_grads(const std::vector<Matrix>& gW, const std::vector<Vector>& gb) {
    ItemAeParams g{gW, gb};
    return g.pack();
}

}  // namespace

void ItemAeConfig::validate() const {
    for (auto h : hidden) {
        if (h == 0) throw ConfigError("itemae: hidden layer width must be >= 1");
    }
    if (!(l2 >= 0.0)) throw ConfigError("itemae: l2 must be >= 0");
    if (!(w_neg > 0.0) || !(w_pos >= w_neg)) throw ConfigError("itemae: need w_pos >= w_neg > 0");
    if (!(init_std > 0.0)) throw ConfigError("itemae: init_std must be > 0");
}

Vector ItemAeParams::pack() const {
    std::size_t total = 0;
    for (std::size_t l = 0; l < W.size(); ++l) total += W[l].size() + b[l].size();
    Vector theta(total);
    double* out = theta.data();
    for (std::size_t l = 0; l < W.size(); ++l) {
        out = std::copy(W[l].data(), W[l].data() + W[l].size(), out);
        out = std::copy(b[l].data(), b[l].data() + b[l].size(), out);
    }
    return theta;
}

ItemAeParams ItemAeParams::unpack(const Vector& theta, const std::vector<std::size_t>& sizes) {
    if (sizes.size() < 2) throw ConfigError("itemae: need at least one layer");
    ItemAeParams p;
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const auto rows = static_cast<Eigen::Index>(sizes[l + 1]);
        const auto cols = static_cast<Eigen::Index>(sizes[l]);
        if (offset + static_cast<std::size_t>(rows * (cols + 1)) > static_cast<std::size_t>(theta.size())) {
            throw ConfigError("itemae: parameter vector too short");
        }
        p.W.emplace_back(Eigen::Map<const Matrix>(theta.data() + offset, rows, cols));
        offset += static_cast<std::size_t>(rows * cols);
        p.b.emplace_back(Eigen::Map<const Vector>(theta.data() + offset, rows));
        offset += static_cast<std::size_t>(rows);
    }
    if (offset != static_cast<std::size_t>(theta.size())) {
        throw ConfigError("itemae: parameter vector has the wrong length");
    }
    return p;
}

std::vector<std::size_t> ItemAeParams::layer_sizes() const {
    std::vector<std::size_t> sizes;
    if (W.empty()) return sizes;
    sizes.push_back(static_cast<std::size_t>(W.front().cols()));
    for (const auto& w : W) sizes.push_back(static_cast<std::size_t>(w.rows()));
    return sizes;
}

Vector itemae_forward(const ItemAeParams& params, const Vector& x_plus) {
    if (params.W.empty() || x_plus.size() != params.W.front().cols()) {
        throw ConfigError("itemae: input length does not match the first layer");
    }
    Matrix input = x_plus;
    return forward(params, input).A.back().col(0);
}

ItemAeObjective::ItemAeObjective(const InteractionMatrix& normal, std::size_t n_fake,
                                 ItemAeConfig cfg)
    : normal_(normal.to_dense()), n_fake_(n_fake), cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t width = normal.n_users() + n_fake;
    sizes_.push_back(width);
    for (auto h : cfg_.hidden) sizes_.push_back(h);
    sizes_.push_back(width);
}

std::size_t ItemAeObjective::num_params() const {
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) total += sizes_[l + 1] * (sizes_[l] + 1);
    return total;
}

Matrix ItemAeObjective::stacked(const Matrix& fake) const {
    if (static_cast<std::size_t>(fake.rows()) != n_fake_ || fake.cols() != normal_.cols()) {
        throw ConfigError("itemae: fake block shape mismatch");
    }
    Matrix x(normal_.rows() + fake.rows(), normal_.cols());
    x.topRows(normal_.rows()) = normal_;
    x.bottomRows(fake.rows()) = fake;
    return x;
}

Matrix ItemAeObjective::weights(const Matrix& input) const {
    return (input.array() >= cfg_.positive_threshold)
        .select(Matrix::Constant(input.rows(), input.cols(), cfg_.w_pos),
                Matrix::Constant(input.rows(), input.cols(), cfg_.w_neg));
}

Vector ItemAeObjective::init_params(std::uint64_t seed) const {
    Rng rng(seed);
    ItemAeParams p;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        Matrix w(sizes_[l + 1], sizes_[l]);
        fill_normal(w, cfg_.init_std, rng);
        p.W.push_back(std::move(w));
        p.b.push_back(Vector::Zero(static_cast<Eigen::Index>(sizes_[l + 1])));
    }
    return p.pack();
}

double ItemAeObjective::loss(const Vector& theta, const Matrix& fake, Vector* grad) const {
    const auto p = ItemAeParams::unpack(theta, sizes_);
    const Matrix input = stacked(fake);
    const auto f = forward(p, input);
    const Matrix wt = weights(input);
    const Matrix err = f.A.back() - input;
    double total = wt.cwiseProduct(err.cwiseProduct(err)).sum();
    for (const auto& w : p.W) total += cfg_.l2 * w.squaredNorm();
    if (grad) {
        auto b = backward(p, f, 2.0 * wt.cwiseProduct(err));
        for (std::size_t l = 0; l < p.W.size(); ++l) b.gW[l] += 2.0 * cfg_.l2 * p.W[l];
        *grad = pack_grads(b.gW, b.gb);
    }
    return total;
}

Matrix ItemAeObjective::fake_gradient(const Vector& theta, const Matrix& fake) const {
    const auto p = ItemAeParams::unpack(theta, sizes_);
    const Matrix input = stacked(fake);
    const auto f = forward(p, input);
    const Matrix d_out = 2.0 * weights(input).cwiseProduct(f.A.back() - input);
    const auto b = backward(p, f, d_out);
    return (b.G[0] - d_out).bottomRows(static_cast<Eigen::Index>(n_fake_));
}

void ItemAeObjective::second_order(const Vector& theta, const Matrix& fake, const Vector& v,
                                   Vector& hv, Matrix& fake_pullback) const {
    // Forward-over-reverse: tangent of the backward pass along (dW, db) with
    // the input held fixed.
    const auto p = ItemAeParams::unpack(theta, sizes_);
    const auto dp = ItemAeParams::unpack(v, sizes_);
    const std::size_t n = p.W.size();
    const Matrix input = stacked(fake);
    const auto f = forward(p, input);
    const Matrix wt = weights(input);
    const auto b = backward(p, f, 2.0 * wt.cwiseProduct(f.A.back() - input));

    std::vector<Matrix> dA(n + 1);
    dA[0] = Matrix::Zero(input.rows(), input.cols());
    for (std::size_t l = 0; l < n; ++l) {
        Matrix dz = dp.W[l] * f.A[l] + p.W[l] * dA[l];
        dz.colwise() += dp.b[l];
        if (l + 1 < n) dz = dz.cwiseProduct((1.0 - f.A[l + 1].array().square()).matrix());
        dA[l + 1] = std::move(dz);
    }

    std::vector<Matrix> dgW(n);
    std::vector<Vector> dgb(n);
    Matrix dD = 2.0 * wt.cwiseProduct(dA[n]);
    const Matrix dD_out = dD;
    Matrix dG;
    for (std::size_t l = n; l-- > 0;) {
        dgW[l].noalias() = dD * f.A[l].transpose() + b.D[l] * dA[l].transpose();
        dgW[l] += 2.0 * cfg_.l2 * dp.W[l];
        dgb[l] = dD.rowwise().sum();
        dG.noalias() = dp.W[l].transpose() * b.D[l] + p.W[l].transpose() * dD;
        if (l > 0) {
            const auto a = f.A[l].array();
            dD = (dG.array() * (1.0 - a.square()) - 2.0 * b.G[l].array() * a * dA[l].array())
                     .matrix();
        }
    }
    hv = pack_grads(dgW, dgb);
    fake_pullback += (dG - dD_out).bottomRows(static_cast<Eigen::Index>(n_fake_));
}

Matrix ItemAeObjective::predict(const Vector& theta, const Matrix& fake) const {
    const auto p = ItemAeParams::unpack(theta, sizes_);
    return forward(p, stacked(fake)).A.back().topRows(normal_.rows());
}

void ItemAeObjective::predict_vjp(const Vector& theta, const Matrix& fake, const Matrix& dscores,
                                  Vector& theta_grad, Matrix* fake_grad) const {
    const auto p = ItemAeParams::unpack(theta, sizes_);
    const Matrix input = stacked(fake);
    const auto f = forward(p, input);
    Matrix d_out = Matrix::Zero(input.rows(), input.cols());
    d_out.topRows(normal_.rows()) = dscores;
    const auto b = backward(p, f, std::move(d_out));
    theta_grad = pack_grads(b.gW, b.gb);
    if (fake_grad) *fake_grad += b.G[0].bottomRows(static_cast<Eigen::Index>(n_fake_));
}

ItemAeTrainResult train_itemae(const InteractionMatrix& normal, const Matrix& fake,
                               const ItemAeConfig& cfg, const InnerOptimizerConfig& opt,
                               std::size_t steps, std::uint64_t seed, std::size_t window) {
    ItemAeObjective objective(normal, fake.rows(), cfg);
    auto traj = record_inner_training(objective, opt, initial_state(opt, objective.init_params(seed)),
                                      fake, steps, window);
    auto params = ItemAeParams::unpack(traj.final_state().theta, objective.layer_sizes());
    return {std::move(params), std::move(traj)};
}

}  // namespace advrec
