#include "advrec/victims.hpp"

namespace advrec {

namespace {

Matrix column(const Vector& v) { return Matrix(v); }

class WrmfVictim final : public Victim {
public:
    explicit WrmfVictim(WrmfParams params) : p_(std::move(params)) {}
    VictimKind kind() const override { return VictimKind::wrmf; }
    std::size_t n_users() const override { return static_cast<std::size_t>(p_.P.rows()); }
    std::size_t n_items() const override { return static_cast<std::size_t>(p_.Q.rows()); }
    Matrix score_rows(std::size_t first, std::size_t count) const override {
        return p_.P.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count)) *
               p_.Q.transpose();
    }
    std::optional<Matrix> user_embeddings() const override { return p_.P; }
    std::vector<std::pair<std::string, Matrix>> tables() const override {
        return {{"P", p_.P}, {"Q", p_.Q}};
    }

private:
    WrmfParams p_;
};

class ItemAeVictim final : public Victim {
public:
    ItemAeVictim(ItemAeParams params, const InteractionMatrix& data) : p_(std::move(params)) {
        // The last layer maps the penultimate activations to one row per user,
        // so keep those activations and score any row block on demand.
        Matrix a = data.to_dense();
        for (std::size_t l = 0; l + 1 < p_.W.size(); ++l) {
            Matrix z = p_.W[l] * a;
            z.colwise() += p_.b[l];
            a = z.array().tanh().matrix();
        }
        penultimate_ = std::move(a);
        n_items_ = data.n_items();
    }
    VictimKind kind() const override { return VictimKind::itemae; }
    std::size_t n_users() const override { return static_cast<std::size_t>(p_.W.back().rows()); }
    std::size_t n_items() const override { return n_items_; }
    Matrix score_rows(std::size_t first, std::size_t count) const override {
        const auto f = static_cast<Eigen::Index>(first);
        const auto c = static_cast<Eigen::Index>(count);
        Matrix out = p_.W.back().middleRows(f, c) * penultimate_;
        out.colwise() += p_.b.back().segment(f, c);
        return out;
    }
    std::vector<std::pair<std::string, Matrix>> tables() const override {
        std::vector<std::pair<std::string, Matrix>> out;
        for (std::size_t l = 0; l < p_.W.size(); ++l) {
            out.emplace_back("W" + std::to_string(l), p_.W[l]);
            out.emplace_back("b" + std::to_string(l), column(p_.b[l]));
        }
        return out;
    }

private:
    ItemAeParams p_;
    Matrix penultimate_;
    std::size_t n_items_ = 0;
};

class NcfVictim final : public Victim {
public:
    explicit NcfVictim(NcfModel m) : m_(std::move(m)) {}
    VictimKind kind() const override { return VictimKind::ncf; }
    std::size_t n_users() const override { return static_cast<std::size_t>(m_.Pg.rows()); }
    std::size_t n_items() const override { return static_cast<std::size_t>(m_.Qg.rows()); }
    Matrix score_rows(std::size_t first, std::size_t count) const override {
        return m_.score_rows(first, count);
    }
    std::optional<Matrix> user_embeddings() const override { return m_.Pg; }
    std::vector<std::pair<std::string, Matrix>> tables() const override {
        return {{"Pg", m_.Pg}, {"Qg", m_.Qg}, {"Pm", m_.Pm}, {"Qm", m_.Qm}, {"W1", m_.W1},
                {"b1", column(m_.b1)}, {"h", column(m_.h)}, {"b", Matrix::Constant(1, 1, m_.b)}};
    }

private:
    NcfModel m_;
};

class MultVaeVictim final : public Victim {
public:
    MultVaeVictim(MultVaeModel m, const InteractionMatrix& data) : m_(std::move(m)), data_(data) {}
    VictimKind kind() const override { return VictimKind::multvae; }
    std::size_t n_users() const override { return data_.n_users(); }
    std::size_t n_items() const override { return data_.n_items(); }
    Matrix score_rows(std::size_t first, std::size_t count) const override {
        return m_.score_rows(data_, first, count);
    }
    std::optional<Matrix> user_embeddings() const override {
        return m_.encode_mean(data_, 0, data_.n_users());
    }
    std::vector<std::pair<std::string, Matrix>> tables() const override {
        return {{"W0", m_.W0},   {"b0", column(m_.b0)},   {"Wmu", m_.Wmu}, {"bmu", column(m_.bmu)},
                {"Wlv", m_.Wlv}, {"blv", column(m_.blv)}, {"Wd1", m_.Wd1}, {"bd1", column(m_.bd1)},
                {"Wd2", m_.Wd2}, {"bd2", column(m_.bd2)}};
    }

private:
    MultVaeModel m_;
    InteractionMatrix data_;
};

class CmlVictim final : public Victim {
public:
    explicit CmlVictim(CmlModel m) : m_(std::move(m)) {}
    VictimKind kind() const override { return VictimKind::cml; }
    std::size_t n_users() const override { return static_cast<std::size_t>(m_.U.rows()); }
    std::size_t n_items() const override { return static_cast<std::size_t>(m_.V.rows()); }
    Matrix score_rows(std::size_t first, std::size_t count) const override {
        return m_.score_rows(first, count);
    }
    std::optional<Matrix> user_embeddings() const override { return m_.U; }
    std::vector<std::pair<std::string, Matrix>> tables() const override {
        return {{"U", m_.U}, {"V", m_.V}};
    }

private:
    CmlModel m_;
};

class ItemCfVictim final : public Victim {
public:
    ItemCfVictim(ItemCfTable table, const InteractionMatrix& data)
        : table_(std::move(table)), data_(data) {}
    VictimKind kind() const override { return VictimKind::itemcf; }
    std::size_t n_users() const override { return data_.n_users(); }
    std::size_t n_items() const override { return data_.n_items(); }
    Matrix score_rows(std::size_t first, std::size_t count) const override {
        return itemcf_scores(table_, data_, first, count);
    }
    std::vector<std::pair<std::string, Matrix>> tables() const override { return {}; }
    const ItemCfTable& table() const { return table_; }

private:
    ItemCfTable table_;
    InteractionMatrix data_;
};

}  // namespace

VictimKind parse_victim_kind(const std::string& name) {
    if (name == "wrmf") return VictimKind::wrmf;
    if (name == "itemae") return VictimKind::itemae;
    if (name == "ncf") return VictimKind::ncf;
    if (name == "multvae") return VictimKind::multvae;
    if (name == "cml") return VictimKind::cml;
    if (name == "itemcf") return VictimKind::itemcf;
    throw ConfigError("unknown victim '" + name + "'");
}

std::string victim_kind_name(VictimKind kind) {
    switch (kind) {
        case VictimKind::wrmf: return "wrmf";
        case VictimKind::itemae: return "itemae";
        case VictimKind::ncf: return "ncf";
        case VictimKind::multvae: return "multvae";
        case VictimKind::cml: return "cml";
        case VictimKind::itemcf: return "itemcf";
    }
    return "?";
}

void VictimSpec::validate() const {
    switch (kind) {
        case VictimKind::wrmf:
            wrmf.model.validate();
            if (wrmf.trainer == WrmfTrainer::adam) {
                wrmf.adam.validate();
                if (wrmf.steps == 0) throw ConfigError("wrmf victim: steps must be >= 1");
            }
            break;
        case VictimKind::itemae:
            itemae.model.validate();
            itemae.adam.validate();
            if (itemae.steps == 0) throw ConfigError("itemae victim: steps must be >= 1");
            break;
        case VictimKind::ncf: ncf.validate(); break;
        case VictimKind::multvae: multvae.validate(); break;
        case VictimKind::cml: cml.validate(); break;
        case VictimKind::itemcf: itemcf.validate(); break;
    }
}

std::unique_ptr<Victim> train_victim(const VictimSpec& spec, const InteractionMatrix& data) {
    spec.validate();
    if (data.n_users() == 0 || data.n_items() == 0) throw DataError("victim: empty training matrix");
    const Matrix no_fake = Matrix::Zero(0, static_cast<Eigen::Index>(data.n_items()));
    switch (spec.kind) {
        case VictimKind::wrmf: {
            if (spec.wrmf.trainer == WrmfTrainer::als) {
                auto r = train_wrmf_als(data, no_fake, spec.wrmf.model, spec.wrmf.als, spec.seed);
                return std::make_unique<WrmfVictim>(std::move(r.params));
            }
            auto r = train_wrmf_sgd(data, no_fake, spec.wrmf.model, spec.wrmf.adam, spec.wrmf.steps,
                                    spec.seed);
            return std::make_unique<WrmfVictim>(std::move(r.params));
        }
        case VictimKind::itemae: {
            auto r = train_itemae(data, no_fake, spec.itemae.model, spec.itemae.adam, spec.itemae.steps,
                                  spec.seed);
            return std::make_unique<ItemAeVictim>(std::move(r.params), data);
        }
        case VictimKind::ncf: return std::make_unique<NcfVictim>(ncf_train(data, spec.ncf, spec.seed));
        case VictimKind::multvae:
            return std::make_unique<MultVaeVictim>(multvae_train(data, spec.multvae, spec.seed), data);
        case VictimKind::cml: return std::make_unique<CmlVictim>(cml_train(data, spec.cml, spec.seed));
        case VictimKind::itemcf:
            return std::make_unique<ItemCfVictim>(itemcf_similarity(data, spec.itemcf.neighbors), data);
    }
    throw ConfigError("victim: unknown kind");
}

const ItemCfTable* itemcf_table(const Victim& victim) {
    const auto* cf = dynamic_cast<const ItemCfVictim*>(&victim);
    return cf ? &cf->table() : nullptr;
}

}  // namespace advrec
