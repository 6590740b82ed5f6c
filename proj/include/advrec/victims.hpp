#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "advrec/cml.hpp"
#include "advrec/itemae.hpp"
#include "advrec/itemcf.hpp"
#include "advrec/multvae.hpp"
#include "advrec/ncf.hpp"
#include "advrec/wrmf.hpp"

namespace advrec {

enum class VictimKind { wrmf, itemae, ncf, multvae, cml, itemcf };

VictimKind parse_victim_kind(const std::string& name);
std::string victim_kind_name(VictimKind kind);

enum class WrmfTrainer { als, adam };

struct WrmfVictimConfig {
    WrmfConfig model{.factors = 128};
    WrmfTrainer trainer = WrmfTrainer::als;
    AlsConfig als;
    InnerOptimizerConfig adam;
    std::size_t steps = 100;
};

struct ItemAeVictimConfig {
    ItemAeConfig model{.hidden = {256, 128, 256}};
    InnerOptimizerConfig adam;
    std::size_t steps = 100;
};

struct VictimSpec {
    VictimKind kind = VictimKind::wrmf;
    std::uint64_t seed = 0;
    WrmfVictimConfig wrmf;
    ItemAeVictimConfig itemae;
    NcfConfig ncf;
    MultVaeConfig multvae;
    CmlConfig cml;
    ItemCfConfig itemcf;

    void validate() const;
    std::string name() const { return victim_kind_name(kind); }
};

/// A trained recommender over all rows of its training matrix (fake rows
/// included, indistinguishable from normal ones).
class Victim {
public:
    virtual ~Victim() = default;
    virtual VictimKind kind() const = 0;
    virtual std::size_t n_users() const = 0;
    virtual std::size_t n_items() const = 0;
    /// Ranking scores for users [first, first + count), higher is better.
    virtual Matrix score_rows(std::size_t first, std::size_t count) const = 0;
    Matrix scores() const { return score_rows(0, n_users()); }
    /// Per-user latent vectors when the model has them (posterior means for Mult-VAE).
    virtual std::optional<Matrix> user_embeddings() const { return std::nullopt; }
    /// Named parameter tables for checkpointing.
    virtual std::vector<std::pair<std::string, Matrix>> tables() const = 0;
};

/// Trains a victim from scratch on `data`; deterministic under spec.seed.
std::unique_ptr<Victim> train_victim(const VictimSpec& spec, const InteractionMatrix& data);

/// ItemCF similarity table of a victim, or nullptr for other kinds.
const ItemCfTable* itemcf_table(const Victim& victim);

}  // namespace advrec
