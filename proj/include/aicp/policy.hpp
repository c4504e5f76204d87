#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aicp/graph.hpp"
#include "aicp/icp.hpp"
#include "aicp/scm.hpp"
#include "aicp/stats.hpp"

// Intervention-selection policies and the two active-ICP drivers: the
// finite-sample loop over sampled environments and the population loop over
// exactly computed stable sets.

namespace aicp {

/**
 * @brief Which target-selection strategies a policy combines.
 *
 * Valid names: "random" (no strategy) and the '+'-joined combinations of
 * "markov" (restrict to the Markov-blanket estimate), "e" (blacklist targets
 * whose interventions left the empty set invariant) and "r" (skip variables
 * with stability ratio below 1/2), in that component order, e.g. "markov+e+r".
 */
struct PolicyConfig {
    std::string name = "random";
    bool use_markov = false;
    bool use_empty_set = false;
    bool use_ratio = false;
};

inline PolicyConfig policy_from_name(const std::string& name) {
    static const std::map<std::string, std::array<bool, 3>> known = {
        {"random", {false, false, false}}, {"markov", {true, false, false}},
        {"e", {false, true, false}},       {"r", {false, false, true}},
        {"markov+e", {true, true, false}}, {"markov+r", {true, false, true}},
        {"e+r", {false, true, true}},      {"markov+e+r", {true, true, true}}};
    auto it = known.find(name);
    if (it == known.end()) throw std::invalid_argument("policy_from_name: unknown policy '" + name + "'");
    PolicyConfig cfg;
    cfg.name = name;
    cfg.use_markov = it->second[0];
    cfg.use_empty_set = it->second[1];
    cfg.use_ratio = it->second[2];
    return cfg;
}

/** @brief Mutable side of a policy across rounds. The Markov-blanket estimate
 * is frozen after the first round; the blacklist only grows; identified
 * parents are refreshed from the current accepted sets every round. */
struct PolicyState {
    std::optional<std::vector<int>> markov_blanket;
    std::vector<int> blacklist;
    std::vector<int> identified_parents;
};

namespace detail {

/// Membership counts of each candidate target across the accepted sets.
/// total == 0 encodes an all-rejected state, where ratio filters are inert.
struct RatioSummary {
    std::map<int, int> counts;
    int total = 0;
};

inline std::optional<int> choose_target(const PolicyConfig& cfg, PolicyState& state,
                                        const RatioSummary& ratios, const std::vector<int>& base,
                                        std::mt19937_64& rng) {
    std::vector<int> identified, low;
    if (ratios.total > 0) {
        for (auto [v, count] : ratios.counts) {
            if (count == ratios.total) identified.push_back(v);
            if (2 * count < ratios.total) low.push_back(v);
        }
    }
    state.identified_parents = identified;

    auto contains = [](const std::vector<int>& sorted, int v) {
        return std::binary_search(sorted.begin(), sorted.end(), v);
    };
    auto build_pool = [&](bool ratio_on, bool markov_on, bool blacklist_on) {
        std::vector<int> pool;
        for (int v : base) {
            if (contains(identified, v)) continue;
            if (ratio_on && cfg.use_ratio && contains(low, v)) continue;
            if (markov_on && cfg.use_markov && state.markov_blanket &&
                !contains(*state.markov_blanket, v))
                continue;
            if (blacklist_on && cfg.use_empty_set && contains(state.blacklist, v)) continue;
            pool.push_back(v);
        }
        return pool;
    };

    // Fallback ladder: drop the ratio filter, then the blanket, then the
    // blacklist; identified parents stay excluded throughout.
    std::vector<int> pool = build_pool(true, true, true);
    if (pool.empty()) pool = build_pool(false, true, true);
    if (pool.empty()) pool = build_pool(false, false, true);
    if (pool.empty()) pool = build_pool(false, false, false);
    if (pool.empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    return pool[pick(rng)];
}

inline RatioSummary summarize(const std::vector<std::vector<int>>& accepted,
                              const std::vector<int>& predictors) {
    RatioSummary r;
    r.total = static_cast<int>(accepted.size());
    for (int v : predictors) {
        int count = 0;
        for (const auto& s : accepted)
            if (std::binary_search(s.begin(), s.end(), v)) ++count;
        r.counts[v] = count;
    }
    return r;
}

}  // namespace detail

/**
 * @brief Pick the first intervention target from observational data.
 *
 * Markov-based policies estimate the blanket by cross-validated Lasso of the
 * response column on the predictor columns and draw uniformly from it (from
 * all predictors when the estimate is empty); other policies draw uniformly
 * from all predictors.
 */
inline std::pair<int, PolicyState> first_intervention(const PolicyConfig& cfg,
                                                      const Eigen::MatrixXd& obs, int response,
                                                      std::uint64_t seed, int lasso_folds = 10) {
    int d = static_cast<int>(obs.cols());
    if (response < 0 || response >= d) throw std::out_of_range("first_intervention: response out of range");
    std::mt19937_64 rng(seed);
    std::uint64_t fold_seed = rng();

    std::vector<int> predictors;
    for (int v = 0; v < d; ++v)
        if (v != response) predictors.push_back(v);

    PolicyState state;
    if (cfg.use_markov) {
        Eigen::MatrixXd x(obs.rows(), d - 1);
        for (std::size_t c = 0; c < predictors.size(); ++c) x.col(c) = obs.col(predictors[c]);
        std::vector<int> support = lasso_markov_blanket(x, obs.col(response), lasso_folds, fold_seed);
        std::vector<int> blanket;
        for (int c : support) blanket.push_back(predictors[c]);
        state.markov_blanket = blanket;
    }

    const std::vector<int>& pool =
        (state.markov_blanket && !state.markov_blanket->empty()) ? *state.markov_blanket : predictors;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    return {pool[pick(rng)], state};
}

/**
 * @brief Pick the next target given the current accepted sets.
 *
 * `candidates` are the targets still available (all predictors in the
 * sampled setting; the not-yet-intervened ones in the population setting).
 * Returns nullopt when even the fallback ladder leaves nothing to pick,
 * which ends the run early.
 */
inline std::optional<int> next_intervention(const PolicyConfig& cfg, PolicyState& state,
                                            const std::vector<std::vector<int>>& accepted,
                                            const std::vector<int>& candidates, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    detail::RatioSummary ratios = detail::summarize(accepted, candidates);
    return detail::choose_target(cfg, state, ratios, candidates, rng);
}

/** @brief One round of an active run. */
struct AicpRound {
    int t = 0;
    int target = 0;
    int accepted_count = 0;
    std::vector<int> estimate;
    std::optional<double> empty_set_p;
};

/** @brief Full record of one active run, ready for JSONL serialization. */
struct AicpTrace {
    int scm_id = -1;
    std::string policy;
    std::uint64_t seed = 0;
    bool population = false;
    int T = 0;
    double alpha = 0.0;
    int n_obs = 0;
    int n_e = 0;
    std::vector<AicpRound> rounds;
    std::vector<int> final_estimate;
    std::vector<int> true_parents;
    std::optional<double> empty_set_level;
};

inline void to_json(nlohmann::json& j, const AicpRound& r) {
    j = nlohmann::json{{"t", r.t},
                       {"target", r.target},
                       {"accepted_sets", r.accepted_count},
                       {"estimate", r.estimate},
                       {"empty_set_p", r.empty_set_p ? nlohmann::json(*r.empty_set_p) : nlohmann::json()}};
}

inline void to_json(nlohmann::json& j, const AicpTrace& trace) {
    j = nlohmann::json{{"scm_id", trace.scm_id},
                       {"policy", trace.policy},
                       {"seed", trace.seed},
                       {"population", trace.population},
                       {"T", trace.T},
                       {"alpha", trace.population ? nlohmann::json() : nlohmann::json(trace.alpha)},
                       {"n_obs", trace.population ? nlohmann::json() : nlohmann::json(trace.n_obs)},
                       {"n_e", trace.population ? nlohmann::json() : nlohmann::json(trace.n_e)},
                       {"rounds", trace.rounds},
                       {"final_estimate", trace.final_estimate},
                       {"true_parents", trace.true_parents},
                       {"identified_parents_excluded", true},
                       {"empty_set_level",
                        trace.empty_set_level ? nlohmann::json(*trace.empty_set_level) : nlohmann::json()}};
}

/** @brief Knobs of the sampled active loop. The intervention template's
 * target field is overwritten by the policy's choice each round. */
struct AicpOptions {
    int T = 10;
    double alpha = 0.01;
    int n_obs = 1000;
    int n_e = 1000;
    Intervention intervention_template{0, InterventionKind::Shift, 10.0, 1.0};
    int lasso_folds = 10;
};

/**
 * @brief Active ICP on sampled data.
 *
 * Starts from one observational environment, then for T rounds: intervene on
 * the chosen target, sample a new environment, rerun ICP at level alpha/T on
 * the sets accepted in the previous round (every subset in round one), and
 * let the policy pick the next target. Policies with the empty-set strategy
 * additionally test the empty set between the observational environment and
 * the newest one at the same level and blacklist the target when that test
 * accepts. The (scm, cfg, options, seed) tuple fully determines the trace.
 */
inline AicpTrace run_aicp(const LinearScm& scm, const PolicyConfig& cfg, const AicpOptions& opt,
                          std::uint64_t seed) {
    if (opt.T < 1) throw std::invalid_argument("run_aicp: need at least one round");
    if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw std::invalid_argument("run_aicp: alpha must lie in (0, 1)");
    if (opt.n_obs < 2 || opt.n_e < 2) throw std::invalid_argument("run_aicp: need two rows per environment");

    int d = scm.num_nodes();
    int response = scm.response();
    std::vector<int> predictors = scm.dag().predictors();
    double level = opt.alpha / static_cast<double>(opt.T);

    std::mt19937_64 rng(seed);
    std::uint64_t obs_seed = rng();
    std::uint64_t first_seed = rng();

    Eigen::MatrixXd obs = sample(scm, opt.n_obs, obs_seed);
    InvarianceTester tester(d, response);
    tester.add_environment(obs);
    InvarianceTester obs_only = tester;

    auto [target, state] = first_intervention(cfg, obs, response, first_seed, opt.lasso_folds);

    AicpTrace trace;
    trace.policy = cfg.name;
    trace.seed = seed;
    trace.T = opt.T;
    trace.alpha = opt.alpha;
    trace.n_obs = opt.n_obs;
    trace.n_e = opt.n_e;
    trace.true_parents = relatives(scm.dag(), response, Relation::Parents);
    if (cfg.use_empty_set) trace.empty_set_level = level;

    std::optional<std::vector<std::vector<int>>> candidates;
    for (int t = 1; t <= opt.T; ++t) {
        std::uint64_t env_seed = rng();
        std::uint64_t choice_seed = rng();

        Intervention iv = opt.intervention_template;
        iv.target = target;
        Eigen::MatrixXd data = sample(apply_intervention(scm, iv), opt.n_e, env_seed);
        tester.add_environment(data);

        IcpState icp = run_icp(tester, candidates, level);
        candidates = icp.accepted;

        AicpRound round;
        round.t = t;
        round.target = target;
        round.accepted_count = static_cast<int>(icp.accepted.size());
        round.estimate = icp.estimate;
        if (cfg.use_empty_set) {
            InvarianceTester pair = obs_only;
            pair.add_environment(data);
            double p = pair.test({}).p_value;
            round.empty_set_p = p;
            if (p > level && !std::binary_search(state.blacklist.begin(), state.blacklist.end(), target)) {
                state.blacklist.push_back(target);
                std::sort(state.blacklist.begin(), state.blacklist.end());
            }
        }
        trace.rounds.push_back(std::move(round));
        trace.final_estimate = icp.estimate;

        if (t == opt.T) break;
        std::optional<int> next = next_intervention(cfg, state, icp.accepted, predictors, choice_seed);
        if (!next) break;
        target = *next;
    }
    return trace;
}

/**
 * @brief Lazily computed stable-set masks per single intervention target.
 *
 * Stability under a set of targets is the conjunction of stability under each
 * target alone, so a run intersects cached single-target collections instead
 * of re-enumerating subsets every round. Shareable across runs on one model.
 */
class StableSetCache {
public:
    explicit StableSetCache(const Dag& dag) : dag_(dag) {
        int p = dag.num_predictors();
        if (p > 20) throw std::length_error("StableSetCache: subset enumeration limited to 20 predictors");
        all_.resize(std::size_t{1} << p);
        for (std::uint32_t m = 0; m < all_.size(); ++m) all_[m] = m;
    }

    const Dag& dag() const { return dag_; }

    /// All 2^p subset masks, ascending.
    const std::vector<std::uint32_t>& all_subsets() const { return all_; }

    /// Masks of sets stable under an intervention on `target` alone, ascending.
    const std::vector<std::uint32_t>& single_target(int target) {
        auto it = cache_.find(target);
        if (it != cache_.end()) return it->second;
        std::vector<std::uint32_t> masks = stable_set_masks(dag_, {target});
        std::sort(masks.begin(), masks.end());
        return cache_.emplace(target, std::move(masks)).first->second;
    }

private:
    Dag dag_;
    std::vector<std::uint32_t> all_;
    std::map<int, std::vector<std::uint32_t>> cache_;
};

/**
 * @brief Active ICP in the population limit.
 *
 * Environments are not sampled: after each intervention the accepted sets are
 * the exactly computed stable sets under all targets chosen so far. Targets
 * are drawn without replacement, and the run stops once the estimate equals
 * the response's parent set or no admissible target remains. The empty-set
 * strategy needs finite data and is rejected here. Markov-based policies use
 * the population regression support as the blanket.
 */
inline AicpTrace run_aicp_population(const LinearScm& scm, const PolicyConfig& cfg, std::uint64_t seed,
                                     StableSetCache* shared_cache = nullptr) {
    if (cfg.use_empty_set)
        throw std::invalid_argument("run_aicp_population: empty-set strategy needs sampled environments");

    const Dag& dag = scm.dag();
    std::vector<int> predictors = dag.predictors();
    int p = static_cast<int>(predictors.size());
    std::vector<int> parents = relatives(dag, scm.response(), Relation::Parents);

    std::optional<StableSetCache> own;
    if (!shared_cache) own.emplace(dag);
    StableSetCache& cache = shared_cache ? *shared_cache : *own;

    std::mt19937_64 rng(seed);

    PolicyState state;
    if (cfg.use_markov) state.markov_blanket = population_markov_blanket(scm);
    int target;
    {
        const std::vector<int>& pool =
            (state.markov_blanket && !state.markov_blanket->empty()) ? *state.markov_blanket : predictors;
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        target = pool[pick(rng)];
    }

    AicpTrace trace;
    trace.policy = cfg.name;
    trace.seed = seed;
    trace.population = true;
    trace.T = p;
    trace.true_parents = parents;

    std::vector<std::uint32_t> accepted = cache.all_subsets();
    std::vector<char> tried(dag.num_nodes(), 0);
    std::vector<std::uint32_t> scratch;
    for (int t = 1; t <= p; ++t) {
        tried[target] = 1;
        const std::vector<std::uint32_t>& stable = cache.single_target(target);
        scratch.clear();
        std::set_intersection(accepted.begin(), accepted.end(), stable.begin(), stable.end(),
                              std::back_inserter(scratch));
        accepted.swap(scratch);

        std::uint32_t common = accepted.empty() ? 0 : ~std::uint32_t{0};
        for (std::uint32_t m : accepted) common &= m;

        AicpRound round;
        round.t = t;
        round.target = target;
        round.accepted_count = static_cast<int>(accepted.size());
        round.estimate = mask_to_set(common, predictors);
        trace.rounds.push_back(round);
        trace.final_estimate = trace.rounds.back().estimate;

        if (trace.final_estimate == parents) break;

        detail::RatioSummary ratios;
        ratios.total = static_cast<int>(accepted.size());
        std::vector<int> base;
        for (int pos = 0; pos < p; ++pos) {
            int node = predictors[pos];
            int count = 0;
            for (std::uint32_t m : accepted)
                if (m & (std::uint32_t{1} << pos)) ++count;
            ratios.counts[node] = count;
            if (!tried[node]) base.push_back(node);
        }
        if (base.empty()) break;
        std::optional<int> next = detail::choose_target(cfg, state, ratios, base, rng);
        if (!next) break;
        target = *next;
    }
    return trace;
}

}  // namespace aicp
