#include "advrec/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "CLI11.hpp"
#include "advrec/attack.hpp"
#include "advrec/diagnostics.hpp"
#include "advrec/eval.hpp"
#include "advrec/io.hpp"
#include "advrec/victims.hpp"

namespace advrec {

namespace {

using Json = nlohmann::ordered_json;

// Seed offsets from the master seed.
constexpr std::uint64_t kSplitSeed = 10;
constexpr std::uint64_t kTargetSeed = 20;
constexpr std::uint64_t kRandFilterSeed = 3;
constexpr std::uint64_t kSampleSeed = 30;
constexpr std::uint64_t kEmbeddingSeed = 31;
constexpr std::uint64_t kClusterSeed = 32;
constexpr std::uint64_t kBucketAttackSeed = 200;

std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}
std::string num(std::size_t v) { return std::to_string(v); }

std::string join(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const auto t = trim(text);
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
        throw ConfigError("setting '" + key + "': cannot parse '" + text + "' as a number");
    }
    return v;
}

}  // namespace

void Settings::declare(const std::string& key, const std::string& default_value) { values_[key] = default_value; }

void Settings::declare_open_section(const std::string& section) { open_sections_.push_back(section + "."); }

bool Settings::known(const std::string& key) const {
    if (values_.count(key)) return true;
    return std::any_of(open_sections_.begin(), open_sections_.end(),
                       [&](const std::string& p) { return key.size() > p.size() && key.rfind(p, 0) == 0; });
}

void Settings::set(const std::string& key, const std::string& value) {
    if (!known(key)) throw ConfigError("unknown setting '" + key + "'");
    values_[key] = trim(value);
}

void Settings::apply_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void Settings::load_ini(const std::string& path) {
    if (!std::filesystem::exists(path)) throw IoError("config file not found: " + path);
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config file: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("config file " + path + ": key '" + section + "' outside a section");
        for (const auto& [key, value] : body) {
            const auto full = section + "." + key;
            if (!known(full)) throw ConfigError("config file " + path + ": unknown setting '" + full + "'");
            values_[full] = trim(value.data());
        }
    }
}

const std::string& Settings::str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing setting '" + key + "'");
    return it->second;
}

double Settings::real(const std::string& key) const {
    const double v = parse_number<double>(key, str(key));
    if (!std::isfinite(v)) throw ConfigError("setting '" + key + "' must be finite");
    return v;
}

std::size_t Settings::count(const std::string& key) const { return parse_number<std::size_t>(key, str(key)); }

std::uint64_t Settings::u64(const std::string& key) const { return parse_number<std::uint64_t>(key, str(key)); }

bool Settings::flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("setting '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> Settings::list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> Settings::section(const std::string& name) const {
    std::vector<std::pair<std::string, std::string>> out;
    const auto prefix = name + ".";
    for (const auto& [k, v] : values_) {
        if (k.rfind(prefix, 0) == 0) out.emplace_back(k.substr(prefix.size()), v);
    }
    return out;
}

Json Settings::echo() const {
    Json j = Json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
}

namespace {

std::vector<std::size_t> count_list(const Settings& s, const std::string& key) {
    std::vector<std::size_t> out;
    for (const auto& p : s.list(key)) out.push_back(parse_number<std::size_t>(key, p));
    return out;
}

// ---- declarations -------------------------------------------------------

void declare_run(Settings& s) {
    s.declare("run.seed", "0");
    s.declare("run.jobs", "1");
    s.declare("run.out", "out");
}

void declare_data(Settings& s) {
    s.declare("data.path", "");
    s.declare("data.format", "indexed");
    s.declare("data.min_feedback", "0");
}

void declare_targets(Settings& s) {
    s.declare("targets.items", "");
    s.declare("targets.file", "");
    s.declare("targets.bucket", "all");
    s.declare("targets.count", "1");
}

void declare_attack(Settings& s) {
    const AttackConfig a;
    s.declare("attack.method", "learned");
    s.declare("attack.n_fake", num(a.n_fake));
    s.declare("attack.outer_iters", num(a.outer_iters));
    s.declare("attack.inner_steps", num(a.inner_steps));
    s.declare("attack.outer_lr", num(a.outer_lr));
    s.declare("attack.inner_optimizer", "adam");
    s.declare("attack.inner_lr", num(a.inner.lr));
    s.declare("attack.frozen_denominator", "false");
    s.declare("attack.window", num(a.window));
    s.declare("attack.rho", num(a.rho));
    s.declare("attack.rho_grid", "");
    s.declare("attack.mode", gradient_mode_name(a.mode));
    s.declare("attack.reset_inner", a.reset_inner ? "true" : "false");
    s.declare("attack.relax", a.relax ? "true" : "false");
    s.declare("attack.init", init_scheme_name(a.init));
    s.declare("attack.init_eps", num(a.init_eps));
    s.declare("attack.n_filler", "0");

    const SurrogateSpec sp;
    s.declare("surrogate.kind", surrogate_kind_name(sp.kind));
    s.declare("surrogate.factors", num(sp.wrmf.factors));
    s.declare("surrogate.l2", num(sp.wrmf.l2));
    s.declare("surrogate.w_pos", num(sp.wrmf.w_pos));
    s.declare("surrogate.w_neg", num(sp.wrmf.w_neg));
    s.declare("surrogate.init_std", num(sp.wrmf.init_std));
    s.declare("surrogate.als_sweeps", num(sp.als.sweeps));
    s.declare("surrogate.hidden", join(sp.itemae.hidden));
    s.declare("surrogate.itemae_l2", num(sp.itemae.l2));
}

void declare_victims(Settings& s) {
    const VictimSpec v;
    s.declare("victim.wrmf.factors", num(v.wrmf.model.factors));
    s.declare("victim.wrmf.l2", num(v.wrmf.model.l2));
    s.declare("victim.wrmf.w_pos", num(v.wrmf.model.w_pos));
    s.declare("victim.wrmf.w_neg", num(v.wrmf.model.w_neg));
    s.declare("victim.wrmf.init_std", num(v.wrmf.model.init_std));
    s.declare("victim.wrmf.trainer", v.wrmf.trainer == WrmfTrainer::als ? "als" : "adam");
    s.declare("victim.wrmf.sweeps", num(v.wrmf.als.sweeps));
    s.declare("victim.wrmf.steps", num(v.wrmf.steps));
    s.declare("victim.wrmf.lr", num(v.wrmf.adam.lr));

    s.declare("victim.itemae.hidden", join(v.itemae.model.hidden));
    s.declare("victim.itemae.l2", num(v.itemae.model.l2));
    s.declare("victim.itemae.steps", num(v.itemae.steps));
    s.declare("victim.itemae.lr", num(v.itemae.adam.lr));

    s.declare("victim.ncf.factors", num(v.ncf.factors));
    s.declare("victim.ncf.mlp_hidden", num(v.ncf.mlp_hidden));
    s.declare("victim.ncf.epochs", num(v.ncf.epochs));
    s.declare("victim.ncf.lr", num(v.ncf.lr));
    s.declare("victim.ncf.batch_size", num(v.ncf.batch_size));
    s.declare("victim.ncf.negatives", num(v.ncf.negatives));

    s.declare("victim.multvae.hidden", num(v.multvae.hidden));
    s.declare("victim.multvae.latent", num(v.multvae.latent));
    s.declare("victim.multvae.epochs", num(v.multvae.epochs));
    s.declare("victim.multvae.lr", num(v.multvae.lr));
    s.declare("victim.multvae.batch_size", num(v.multvae.batch_size));
    s.declare("victim.multvae.beta_max", num(v.multvae.beta_max));
    s.declare("victim.multvae.anneal_fraction", num(v.multvae.anneal_fraction));
    s.declare("victim.multvae.dropout", num(v.multvae.dropout));

    s.declare("victim.cml.factors", num(v.cml.factors));
    s.declare("victim.cml.margin", num(v.cml.margin));
    s.declare("victim.cml.epochs", num(v.cml.epochs));
    s.declare("victim.cml.lr", num(v.cml.lr));
    s.declare("victim.cml.batch_size", num(v.cml.batch_size));
    s.declare("victim.cml.negatives", num(v.cml.negatives));

    s.declare("victim.itemcf.neighbors", num(v.itemcf.neighbors));
}

void declare_command(Settings& s, const std::string& command) {
    declare_run(s);
    if (command == "synth") {
        const SyntheticSpec sp;
        s.declare("synth.n_users", num(sp.n_users));
        s.declare("synth.n_fake", num(sp.n_fake));
        s.declare("synth.n_items", num(sp.n_items));
        s.declare("synth.rank", num(sp.rank));
        s.declare("synth.threshold", num(sp.threshold));
        s.declare("synth.min_interactions", num(sp.min_interactions));
        s.declare("split.scheme", "leave_one_out");
        s.declare("split.ratio", "0.2");
        return;
    }
    declare_data(s);
    if (command == "attack") {
        declare_targets(s);
        declare_attack(s);
    } else if (command == "transfer") {
        declare_targets(s);
        declare_attack(s);
        declare_victims(s);
        s.declare("transfer.victims", "wrmf");
        s.declare("transfer.n_runs", "4");
        s.declare("transfer.k", "50");
        s.declare("transfer.fake_budget", "0");
        s.declare("transfer.buckets", "");
        s.declare("transfer.n_targets", "5");
        s.declare("transfer.methods", "randfilter,learned");
        s.declare_open_section("attacks");
    } else if (command == "diagnose") {
        declare_victims(s);
        s.declare("diagnose.fake", "");
        s.declare("diagnose.sample_normal", "500");
        s.declare("diagnose.bins", "64");
        s.declare("diagnose.embedding", "wrmf");
        s.declare("diagnose.resamples", "20");
    }
}

// ---- builders -----------------------------------------------------------

InteractionMatrix load_data(const Settings& s) {
    const auto& path = s.str("data.path");
    if (path.empty()) throw ConfigError("data.path is required");
    const auto& format = s.str("data.format");
    if (format == "indexed") return decode_indexed(read_file(path));
    if (format == "plain") return load_dataset(path, s.count("data.min_feedback")).matrix;
    if (format == "gowalla") return load_dataset(path, s.count("data.min_feedback"), DatasetFormat::gowalla()).matrix;
    throw ConfigError("data.format must be indexed, plain or gowalla");
}

std::vector<ItemId> resolve_targets(const Settings& s, const InteractionMatrix& train, std::uint64_t seed) {
    std::vector<ItemId> targets;
    if (!s.str("targets.items").empty()) {
        for (const auto& p : s.list("targets.items")) targets.push_back(parse_number<ItemId>("targets.items", p));
    } else if (!s.str("targets.file").empty()) {
        std::istringstream in(read_file(s.str("targets.file")));
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (!line.empty() && line[0] != '#') targets.push_back(parse_number<ItemId>("targets.file", line));
        }
    } else {
        const auto n = s.count("targets.count");
        const auto& bucket = s.str("targets.bucket");
        if (bucket == "all") {
            std::vector<ItemId> pool(train.n_items());
            for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<ItemId>(i);
            targets = sample_items(pool, n, derive_seed(seed, kTargetSeed));
        } else {
            targets = sample_target_set(train, parse_bucket(bucket), n, derive_seed(seed, kTargetSeed));
        }
    }
    std::sort(targets.begin(), targets.end());
    AdvObjective{AdvKind::promote_ce, targets}.validate(train.n_items());
    return targets;
}

SurrogateSpec build_surrogate(const Settings& s) {
    SurrogateSpec sp;
    sp.kind = parse_surrogate_kind(s.str("surrogate.kind"));
    sp.wrmf.factors = s.count("surrogate.factors");
    sp.wrmf.l2 = s.real("surrogate.l2");
    sp.wrmf.w_pos = s.real("surrogate.w_pos");
    sp.wrmf.w_neg = s.real("surrogate.w_neg");
    sp.wrmf.init_std = s.real("surrogate.init_std");
    sp.als.sweeps = s.count("surrogate.als_sweeps");
    sp.itemae.hidden = count_list(s, "surrogate.hidden");
    sp.itemae.l2 = s.real("surrogate.itemae_l2");
    sp.itemae.w_pos = sp.wrmf.w_pos;
    sp.itemae.w_neg = sp.wrmf.w_neg;
    if (sp.kind == SurrogateKind::itemae) {
        sp.itemae.validate();
    } else {
        sp.wrmf.validate();
    }
    return sp;
}

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "sgd") return OptimizerKind::sgd;
    throw ConfigError("unknown optimizer '" + name + "'");
}

AttackConfig build_attack(const Settings& s, std::uint64_t seed) {
    AttackConfig a;
    a.n_fake = s.count("attack.n_fake");
    a.outer_iters = s.count("attack.outer_iters");
    a.inner_steps = s.count("attack.inner_steps");
    a.outer_lr = s.real("attack.outer_lr");
    a.inner.kind = parse_optimizer(s.str("attack.inner_optimizer"));
    a.inner.lr = s.real("attack.inner_lr");
    a.inner.frozen_denominator = s.flag("attack.frozen_denominator");
    a.window = s.count("attack.window");
    a.rho = s.real("attack.rho");
    a.mode = parse_gradient_mode(s.str("attack.mode"));
    a.reset_inner = s.flag("attack.reset_inner");
    a.relax = s.flag("attack.relax");
    a.init = parse_init_scheme(s.str("attack.init"));
    a.init_eps = s.real("attack.init_eps");
    a.seed = seed;
    a.validate();
    return a;
}

std::vector<double> rho_grid(const Settings& s) {
    std::vector<double> out;
    for (const auto& p : s.list("attack.rho_grid")) {
        const double r = parse_number<double>("attack.rho_grid", p);
        if (!(r > 0.0 && r < 1.0)) throw ConfigError("attack.rho_grid values must lie in (0, 1)");
        out.push_back(r);
    }
    return out;
}

VictimSpec build_victim(const Settings& s, const std::string& name) {
    VictimSpec v;
    v.kind = parse_victim_kind(name);
    v.wrmf.model.factors = s.count("victim.wrmf.factors");
    v.wrmf.model.l2 = s.real("victim.wrmf.l2");
    v.wrmf.model.w_pos = s.real("victim.wrmf.w_pos");
    v.wrmf.model.w_neg = s.real("victim.wrmf.w_neg");
    v.wrmf.model.init_std = s.real("victim.wrmf.init_std");
    const auto& trainer = s.str("victim.wrmf.trainer");
    if (trainer != "als" && trainer != "adam") throw ConfigError("victim.wrmf.trainer must be als or adam");
    v.wrmf.trainer = trainer == "als" ? WrmfTrainer::als : WrmfTrainer::adam;
    v.wrmf.als.sweeps = s.count("victim.wrmf.sweeps");
    v.wrmf.steps = s.count("victim.wrmf.steps");
    v.wrmf.adam.lr = s.real("victim.wrmf.lr");

    v.itemae.model.hidden = count_list(s, "victim.itemae.hidden");
    v.itemae.model.l2 = s.real("victim.itemae.l2");
    v.itemae.steps = s.count("victim.itemae.steps");
    v.itemae.adam.lr = s.real("victim.itemae.lr");

    v.ncf.factors = s.count("victim.ncf.factors");
    v.ncf.mlp_hidden = s.count("victim.ncf.mlp_hidden");
    v.ncf.epochs = s.count("victim.ncf.epochs");
    v.ncf.lr = s.real("victim.ncf.lr");
    v.ncf.batch_size = s.count("victim.ncf.batch_size");
    v.ncf.negatives = s.count("victim.ncf.negatives");

    v.multvae.hidden = s.count("victim.multvae.hidden");
    v.multvae.latent = s.count("victim.multvae.latent");
    v.multvae.epochs = s.count("victim.multvae.epochs");
    v.multvae.lr = s.real("victim.multvae.lr");
    v.multvae.batch_size = s.count("victim.multvae.batch_size");
    v.multvae.beta_max = s.real("victim.multvae.beta_max");
    v.multvae.anneal_fraction = s.real("victim.multvae.anneal_fraction");
    v.multvae.dropout = s.real("victim.multvae.dropout");

    v.cml.factors = s.count("victim.cml.factors");
    v.cml.margin = s.real("victim.cml.margin");
    v.cml.epochs = s.count("victim.cml.epochs");
    v.cml.lr = s.real("victim.cml.lr");
    v.cml.batch_size = s.count("victim.cml.batch_size");
    v.cml.negatives = s.count("victim.cml.negatives");

    v.itemcf.neighbors = s.count("victim.itemcf.neighbors");
    v.validate();
    return v;
}

std::size_t filler_count(const Settings& s, const InteractionMatrix& train, std::size_t n_targets) {
    std::size_t n = s.count("attack.n_filler");
    if (n == 0 && train.n_users() > 0) {
        const auto mean_len = static_cast<std::size_t>(
            std::llround(static_cast<double>(train.nnz()) / static_cast<double>(train.n_users())));
        n = mean_len > n_targets ? mean_len - n_targets : 0;
    }
    return std::min(n, train.n_items() - n_targets);
}

/// Everything an attack run needs, resolved and validated up front.
struct AttackPlan {
    std::string method;
    AttackConfig cfg;
    SurrogateSpec surrogate;
    std::vector<double> rhos;
    std::size_t n_filler = 0;
};

AttackPlan plan_attack(const Settings& s, const std::string& method, std::uint64_t seed) {
    AttackPlan p;
    p.method = method;
    p.cfg = build_attack(s, seed);
    if (method == "learned") {
        p.surrogate = build_surrogate(s);
        check_attack_capability(p.surrogate, p.cfg);
        p.rhos = rho_grid(s);
    } else if (method != "randfilter") {
        throw ConfigError("attack method must be learned or randfilter, got '" + method + "'");
    }
    return p;
}

struct AttackRun {
    InteractionMatrix fake;
    AttackResult result;
    std::vector<std::pair<double, double>> grid;  // (rho, final loss), best first
    double rho = 0.0;
};

AttackRun execute_attack(const AttackPlan& plan, const Settings& s, const InteractionMatrix& train,
                         const std::vector<ItemId>& targets, std::size_t jobs, std::ostream* log) {
    AttackRun run;
    if (plan.method == "randfilter") {
        const auto n_filler = filler_count(s, train, targets.size());
        run.fake = rand_filter_attack(targets, plan.cfg.n_fake, n_filler, train.n_items(),
                                      derive_seed(plan.cfg.seed, kRandFilterSeed))
                       .to_interactions();
        return run;
    }
    const AdvObjective objective{AdvKind::promote_ce, targets};
    if (!plan.rhos.empty()) {
        auto candidates = grid_search_rho(train, plan.surrogate, objective, plan.cfg, plan.rhos, jobs);
        for (const auto& c : candidates) run.grid.emplace_back(c.rho, c.final_loss);
        run.rho = candidates.front().rho;
        run.result = std::move(candidates.front().result);
    } else {
        run.rho = plan.cfg.rho;
        run.result = learn_fake_users(train, plan.surrogate, objective, plan.cfg, [&](std::size_t t, double loss) {
            if (log) *log << "iter " << t << " adv_loss " << num(loss) << '\n';
        });
    }
    run.fake = run.result.block.to_interactions();
    return run;
}

// ---- commands -----------------------------------------------------------

struct Outputs {
    std::vector<std::pair<std::string, std::string>> files;
    Json summary = Json::object();
    int exit_code = exit_ok;
};

Json targets_json(const std::vector<ItemId>& t) { return Json(t); }

Outputs cmd_synth(const Settings& s, std::ostream& log) {
    SyntheticSpec sp;
    sp.n_users = s.count("synth.n_users");
    sp.n_fake = s.count("synth.n_fake");
    sp.n_items = s.count("synth.n_items");
    sp.rank = s.count("synth.rank");
    sp.threshold = s.real("synth.threshold");
    sp.min_interactions = s.count("synth.min_interactions");
    sp.seed = s.u64("run.seed");
    sp.validate();
    const auto& scheme = s.str("split.scheme");
    const double ratio = s.real("split.ratio");
    if (scheme != "none" && scheme != "leave_one_out" && scheme != "holdout") {
        throw ConfigError("split.scheme must be none, leave_one_out or holdout");
    }
    if (scheme == "holdout" && !(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split.ratio must lie in (0, 1)");

    const auto full = generate_synthetic(sp);
    const auto normal = full.slice_rows(0, sp.n_users);
    const auto reserve = full.slice_rows(sp.n_users, sp.n_fake);

    Outputs o;
    o.files.emplace_back("normal.txt", encode_indexed(normal));
    o.files.emplace_back("reserve.txt", encode_indexed(reserve, sp.n_users));
    if (scheme != "none") {
        const auto seed = derive_seed(sp.seed, kSplitSeed);
        const auto split = scheme == "holdout" ? holdout_split(normal, ratio, seed) : leave_one_out(normal, seed);
        o.files.emplace_back("train.txt", encode_indexed(split.train));
        o.files.emplace_back("test.txt", encode_indexed(split.test));
    }
    o.summary["n_users"] = normal.n_users();
    o.summary["n_reserve"] = reserve.n_users();
    o.summary["n_items"] = normal.n_items();
    o.summary["nnz"] = normal.nnz();
    o.summary["density"] = normal.density();
    o.summary["sparsity"] = 1.0 - normal.density();
    log << "density " << num(normal.density()) << " sparsity " << num(1.0 - normal.density()) << '\n';
    return o;
}

Outputs cmd_attack(const Settings& s, std::ostream& log) {
    const auto seed = s.u64("run.seed");
    const auto train = load_data(s);
    const auto targets = resolve_targets(s, train, seed);
    const auto plan = plan_attack(s, s.str("attack.method"), seed);

    const auto run = execute_attack(plan, s, train, targets, s.count("run.jobs"), &log);

    Outputs o;
    o.files.emplace_back("fake.txt", encode_indexed(run.fake, train.n_users()));
    std::string targets_txt;
    for (ItemId t : targets) targets_txt += std::to_string(t) + "\n";
    o.files.emplace_back("targets.txt", targets_txt);
    if (plan.method == "learned") {
        std::string trace = "iter,loss_before,loss_after,grad_norm\n";
        for (std::size_t t = 0; t < run.result.loss_before.size(); ++t) {
            trace += std::to_string(t) + "," + num(run.result.loss_before[t]) + "," + num(run.result.loss_after[t]) +
                     "," + num(run.result.grad_norm[t]) + "\n";
        }
        o.files.emplace_back("loss_trace.csv", trace);
        if (!run.grid.empty()) {
            std::string grid = "rho,final_loss\n";
            for (const auto& [rho, loss] : run.grid) grid += num(rho) + "," + num(loss) + "\n";
            o.files.emplace_back("rho_grid.csv", grid);
        }
        o.summary["rho"] = run.rho;
        o.summary["final_loss"] = run.result.loss_after.back();
    }
    o.summary["method"] = plan.method;
    o.summary["targets"] = targets_json(targets);
    o.summary["n_fake"] = run.fake.n_users();
    o.summary["fake_nnz"] = run.fake.nnz();
    return o;
}

Outputs cmd_transfer(const Settings& s, std::ostream& log) {
    const auto seed = s.u64("run.seed");
    const auto train = load_data(s);

    std::vector<VictimSpec> victims;
    for (const auto& name : s.list("transfer.victims")) victims.push_back(build_victim(s, name));
    if (victims.empty()) throw ConfigError("transfer.victims is empty");

    TransferConfig tc;
    tc.n_runs = s.count("transfer.n_runs");
    tc.k = s.count("transfer.k");
    tc.seed = seed;
    tc.jobs = s.count("run.jobs");
    if (const auto b = s.count("transfer.fake_budget"); b > 0) tc.fake_budget = b;
    if (tc.n_runs == 0) throw ConfigError("transfer.n_runs must be >= 1");
    if (tc.k == 0 || tc.k > train.n_items()) throw ConfigError("transfer.k must lie in [1, n_items]");

    EvalReport report;
    const auto bucket_names = s.list("transfer.buckets");
    if (bucket_names.empty()) {
        const auto targets = resolve_targets(s, train, seed);
        std::vector<AttackArtifact> attacks;
        for (const auto& [name, path] : s.section("attacks")) {
            attacks.push_back({name, decode_indexed(read_file(path))});
        }
        report = transfer_benchmark(train, attacks, victims, targets, tc);
    } else {
        std::vector<PopularityBucket> buckets;
        for (const auto& b : bucket_names) buckets.push_back(parse_bucket(b));
        std::vector<AttackPlan> plans;
        for (const auto& m : s.list("transfer.methods")) plans.push_back(plan_attack(s, m, seed));
        const auto n_targets = s.count("transfer.n_targets");
        AttackFactory factory = [&](const std::vector<ItemId>& targets, PopularityBucket bucket) {
            std::vector<AttackArtifact> out;
            for (auto plan : plans) {
                plan.cfg.seed = derive_seed(seed, kBucketAttackSeed + static_cast<std::uint64_t>(bucket));
                log << "bucket " << bucket_name(bucket) << " attack " << plan.method << '\n';
                out.push_back({plan.method, execute_attack(plan, s, train, targets, 1, nullptr).fake});
            }
            return out;
        };
        report = popularity_sliced_eval(train, factory, victims, buckets, n_targets, tc);
    }

    Outputs o;
    std::ostringstream csv;
    report.write_csv(csv);
    o.files.emplace_back("report.csv", csv.str());
    o.files.emplace_back("report.json", report.to_json());
    std::size_t ok = 0, failed = 0;
    for (const auto& r : report.rows) {
        ok += r.values.size();
        failed += r.failures.size();
        log << r.attack << " / " << r.victim << " [" << r.bucket << "] hr@" << r.k << " " << num(r.mean) << '\n';
    }
    o.summary["targets"] = targets_json(report.targets);
    o.summary["cells_ok"] = ok;
    o.summary["cells_failed"] = failed;
    if (ok == 0) o.exit_code = exit_numerical;
    return o;
}

Outputs cmd_diagnose(const Settings& s, std::ostream& log) {
    const auto seed = s.u64("run.seed");
    const auto train = load_data(s);
    if (s.str("diagnose.fake").empty()) throw ConfigError("diagnose.fake is required");
    const auto fake = decode_indexed(read_file(s.str("diagnose.fake")));
    if (fake.n_items() != train.n_items()) throw ConfigError("diagnose: fake block has a different item count");
    auto spec = build_victim(s, s.str("diagnose.embedding"));
    if (spec.kind == VictimKind::itemae || spec.kind == VictimKind::itemcf) {
        throw ConfigError("diagnose.embedding must be a model with user embeddings (wrmf, ncf, multvae, cml)");
    }
    spec.seed = derive_seed(seed, kEmbeddingSeed);
    const auto resamples = s.count("diagnose.resamples");

    const auto density = popularity_density(train, fake, s.count("diagnose.sample_normal"),
                                            derive_seed(seed, kSampleSeed), s.count("diagnose.bins"));

    const auto model = train_victim(spec, train.append_rows(fake));
    const auto emb = *model->user_embeddings();
    std::vector<std::size_t> rows = density.sampled_users;
    std::vector<bool> is_fake(rows.size(), false);
    std::vector<std::size_t> fake_pos;
    for (std::size_t j = 0; j < fake.n_users(); ++j) {
        fake_pos.push_back(rows.size());
        rows.push_back(train.n_users() + j);
        is_fake.push_back(true);
    }
    Matrix picked(static_cast<Eigen::Index>(rows.size()), emb.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        picked.row(static_cast<Eigen::Index>(r)) = emb.row(static_cast<Eigen::Index>(rows[r]));
    }
    const auto pca = pca_project(picked, 2);
    if (!pca.warning.empty()) log << "warning: " << pca.warning << '\n';
    const double score = clusteredness_score(pca.coords, fake_pos, derive_seed(seed, kClusterSeed), resamples);
    log << "clusteredness " << num(score) << '\n';

    Outputs o;
    std::ostringstream dcsv, ccsv;
    write_density_csv(dcsv, density);
    write_coords_csv(ccsv, pca.coords, rows, is_fake);
    o.files.emplace_back("density.csv", dcsv.str());
    o.files.emplace_back("coords.csv", ccsv.str());
    Json summary;
    summary["clusteredness"] = score;
    summary["explained_ratio"] = pca.explained_ratio;
    summary["rank_deficient"] = pca.rank_deficient;
    summary["n_sampled"] = density.sampled_users.size();
    summary["n_fake"] = fake.n_users();
    summary["embedding"] = spec.name();
    o.files.emplace_back("summary.json", summary.dump(2) + "\n");
    o.summary = summary;
    return o;
}

int execute(const std::string& command, const Settings& s, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    Outputs o;
    if (command == "synth") {
        o = cmd_synth(s, out);
    } else if (command == "attack") {
        o = cmd_attack(s, out);
    } else if (command == "transfer") {
        o = cmd_transfer(s, out);
    } else {
        o = cmd_diagnose(s, out);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const std::filesystem::path dir = s.str("run.out");
    ensure_directory(dir);
    Json manifest;
    manifest["tool"] = "advrec";
    manifest["version"] = ADVREC_VERSION;
    manifest["command"] = command;
    manifest["seed"] = s.u64("run.seed");
    manifest["config"] = s.echo();
    manifest["outputs"] = Json::array();
    for (const auto& [name, content] : o.files) {
        write_file_atomic(dir / name, content);
        manifest["outputs"].push_back(name);
    }
    manifest["summary"] = o.summary;
    manifest["timing_file"] = "timing.txt";
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    char timing[64];
    std::snprintf(timing, sizeof timing, "wall_clock_seconds %.3f\n", seconds);
    write_file_atomic(dir / "timing.txt", timing);
    out << "wrote " << o.files.size() + 2 << " files to " << dir.string() << '\n';
    return o.exit_code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adversarially learned injection attacks on recommenders", "advrec"};
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", std::string(ADVREC_VERSION));

    std::string config_path, seed, jobs, out_dir;
    std::vector<std::string> sets;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"synth", "generate a low-rank synthetic dataset"},
        {"attack", "learn fake user profiles (or build a RandFilter baseline)"},
        {"transfer", "train victims on poisoned data and report target hit ratios"},
        {"diagnose", "popularity densities and embedding projections of fake users"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "INI config file");
        sub->add_option("--set", sets, "override, section.key=value (repeatable)")
            ->expected(1)
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
        sub->add_option("--seed", seed, "master seed");
        sub->add_option("--jobs", jobs, "concurrent benchmark cells");
        sub->add_option("--out", out_dir, "output directory");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_config;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        Settings settings;
        declare_command(settings, command);
        if (!config_path.empty()) settings.load_ini(config_path);
        for (const auto& a : sets) settings.apply_assignment(a);
        if (!seed.empty()) settings.set("run.seed", seed);
        if (!jobs.empty()) settings.set("run.jobs", jobs);
        if (!out_dir.empty()) settings.set("run.out", out_dir);
        settings.u64("run.seed");
        if (settings.count("run.jobs") == 0) throw ConfigError("--jobs must be >= 1");
        return execute(command, settings, out);
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    } catch (const IoError& e) {
        err << "i/o failure: " << e.what() << '\n';
        return exit_io;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return exit_internal;
    }
}

}  // namespace advrec
