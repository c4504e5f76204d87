#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "aicp/policy.hpp"

// Experiment orchestration: random-model ensembles, deterministic per-run
// seeds, a parallel runner, trace and metric serialization, and the
// self-check suites exposed through the command-line tool.

namespace aicp {

enum class ExperimentMode { Population, Finite };

/** @brief Declarative description of one experiment sweep. */
struct ExperimentConfig {
    ExperimentMode mode = ExperimentMode::Finite;
    int num_scms = 1;
    int seeds_per_scm = 1;
    RandomScmOptions scm;
    int T = 50;
    double alpha = 0.01;
    int n_obs = 1000;
    int n_e = 1000;
    Intervention intervention_template{0, InterventionKind::Shift, 10.0, 1.0};
    std::vector<std::string> policies;
    std::uint64_t master_seed = 0;
};

inline void validate(const ExperimentConfig& cfg) {
    if (cfg.num_scms < 1 || cfg.seeds_per_scm < 1)
        throw std::invalid_argument("ExperimentConfig: counts must be positive");
    if (cfg.policies.empty()) throw std::invalid_argument("ExperimentConfig: no policies given");
    std::set<std::string> seen;
    for (const auto& name : cfg.policies) {
        PolicyConfig pc = policy_from_name(name);
        if (!seen.insert(name).second)
            throw std::invalid_argument("ExperimentConfig: duplicate policy '" + name + "'");
        if (cfg.mode == ExperimentMode::Population && pc.use_empty_set)
            throw std::invalid_argument("ExperimentConfig: empty-set policies need sampled environments");
    }
    if (cfg.mode == ExperimentMode::Finite) {
        if (cfg.T < 1) throw std::invalid_argument("ExperimentConfig: horizon must be positive");
        if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
            throw std::invalid_argument("ExperimentConfig: alpha must lie in (0, 1)");
        if (cfg.n_obs < 2 || cfg.n_e < 2)
            throw std::invalid_argument("ExperimentConfig: need two rows per environment");
    }
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// Seed of one (model, policy, repetition) run. Independent coordinates, so
/// adding a policy or extending the ensemble never disturbs existing runs.
inline std::uint64_t run_seed(std::uint64_t master, int scm_index, const std::string& policy,
                              int seed_index) {
    std::uint64_t h = detail::splitmix64(master ^ (0xa1c9e66f00000000ULL +
                                                   static_cast<std::uint64_t>(scm_index)));
    h = detail::splitmix64(h ^ detail::fnv1a64(policy));
    h = detail::splitmix64(h ^ (0x51ed270000000000ULL + static_cast<std::uint64_t>(seed_index)));
    return h;
}

/// Seed used to draw the scm_index-th ensemble member.
inline std::uint64_t ensemble_seed(std::uint64_t master, int scm_index) {
    return detail::splitmix64(detail::splitmix64(master ^ 0x6a09e667f3bcc909ULL) +
                              static_cast<std::uint64_t>(scm_index));
}

/** @brief Draw the experiment's model ensemble from its master seed. */
inline std::vector<LinearScm> make_ensemble(const ExperimentConfig& cfg) {
    validate(cfg);
    std::vector<LinearScm> out;
    out.reserve(cfg.num_scms);
    for (int i = 0; i < cfg.num_scms; ++i)
        out.push_back(random_scm(cfg.scm, ensemble_seed(cfg.master_seed, i)));
    return out;
}

/**
 * @brief Execute every (model, policy, repetition) run of the experiment.
 *
 * Work is distributed across `workers` threads one model at a time; results
 * come back sorted by (scm_index, policy name, repetition) regardless of
 * scheduling, so repeated invocations are byte-identical downstream.
 */
inline std::vector<AicpTrace> run_experiment(const ExperimentConfig& cfg,
                                             const std::vector<LinearScm>& ensemble, int workers = 1) {
    validate(cfg);
    if (static_cast<int>(ensemble.size()) != cfg.num_scms)
        throw std::invalid_argument("run_experiment: ensemble size mismatch");

    std::vector<std::string> policies = cfg.policies;
    std::sort(policies.begin(), policies.end());
    int num_policies = static_cast<int>(policies.size());
    int per_scm = num_policies * cfg.seeds_per_scm;
    std::vector<AicpTrace> results(static_cast<std::size_t>(cfg.num_scms) * per_scm);

    AicpOptions opt;
    opt.T = cfg.T;
    opt.alpha = cfg.alpha;
    opt.n_obs = cfg.n_obs;
    opt.n_e = cfg.n_e;
    opt.intervention_template = cfg.intervention_template;

    std::atomic<int> next{0};
    std::mutex failure_mutex;
    std::exception_ptr failure;

    auto work = [&]() {
        try {
            for (int i = next.fetch_add(1); i < cfg.num_scms; i = next.fetch_add(1)) {
                const LinearScm& scm = ensemble[i];
                std::optional<StableSetCache> cache;
                if (cfg.mode == ExperimentMode::Population) cache.emplace(scm.dag());
                for (int pi = 0; pi < num_policies; ++pi) {
                    PolicyConfig pc = policy_from_name(policies[pi]);
                    for (int s = 0; s < cfg.seeds_per_scm; ++s) {
                        std::uint64_t seed = run_seed(cfg.master_seed, i, policies[pi], s);
                        AicpTrace trace = cfg.mode == ExperimentMode::Population
                                              ? run_aicp_population(scm, pc, seed, &*cache)
                                              : run_aicp(scm, pc, opt, seed);
                        trace.scm_id = i;
                        results[static_cast<std::size_t>(i) * per_scm + pi * cfg.seeds_per_scm + s] =
                            std::move(trace);
                    }
                }
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };

    int n_threads = std::max(1, std::min(workers, cfg.num_scms));
    std::vector<std::thread> pool;
    for (int k = 0; k < n_threads; ++k) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    return results;
}

/** @brief Jaccard similarity of two sorted index sets; two empty sets count as 1. */
inline double jaccard(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::vector<int> inter, uni;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
    return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

/** @brief Aggregated quality of one policy's traces. */
struct PolicyMetrics {
    std::map<int, double> mean_jaccard_by_t;
    double fwer = 0.0;
    double mean_recovery = 0.0;
};

struct MetricsSummary {
    int horizon = 0;
    std::map<std::string, PolicyMetrics> per_policy;
};

/**
 * @brief Per-policy recovery metrics over a batch of traces.
 *
 * All traces must share one horizon T. Early-stopped traces carry their last
 * estimate forward for the Jaccard curve. A trace counts toward the
 * family-wise error when any recorded round's estimate is not a subset of the
 * true parents; recovery is the first round whose estimate matches them
 * exactly, censored at `censor_at` (the horizon when 0) otherwise.
 */
inline MetricsSummary compute_metrics(const std::vector<AicpTrace>& traces, int censor_at = 0) {
    if (traces.empty()) throw std::invalid_argument("compute_metrics: no traces");
    int horizon = traces.front().T;
    for (const auto& tr : traces) {
        if (tr.T != horizon) throw std::invalid_argument("compute_metrics: traces disagree on horizon");
        if (tr.rounds.empty()) throw std::invalid_argument("compute_metrics: trace without rounds");
    }
    if (censor_at <= 0) censor_at = horizon;

    MetricsSummary summary;
    summary.horizon = horizon;
    std::map<std::string, int> counts;
    for (const auto& tr : traces) {
        PolicyMetrics& pm = summary.per_policy[tr.policy];
        ++counts[tr.policy];

        bool any_excess = false;
        std::optional<int> recovered;
        for (const auto& round : tr.rounds) {
            if (!std::includes(tr.true_parents.begin(), tr.true_parents.end(),
                               round.estimate.begin(), round.estimate.end()))
                any_excess = true;
            if (!recovered && round.estimate == tr.true_parents) recovered = round.t;
        }
        pm.fwer += any_excess ? 1.0 : 0.0;
        pm.mean_recovery += recovered ? std::min(*recovered, censor_at) : censor_at;

        for (int t = 1; t <= horizon; ++t) {
            std::size_t idx = std::min<std::size_t>(tr.rounds.size(), static_cast<std::size_t>(t)) - 1;
            pm.mean_jaccard_by_t[t] += jaccard(tr.rounds[idx].estimate, tr.true_parents);
        }
    }
    for (auto& [policy, pm] : summary.per_policy) {
        double n = static_cast<double>(counts[policy]);
        pm.fwer /= n;
        pm.mean_recovery /= n;
        for (auto& [t, v] : pm.mean_jaccard_by_t) v /= n;
    }
    return summary;
}

namespace detail {

inline std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace detail

/// Write the per-round curve as CSV: policy,t,mean_jaccard.
inline void write_jaccard_csv(std::ostream& os, const MetricsSummary& summary) {
    os << "policy,t,mean_jaccard\n";
    for (const auto& [policy, pm] : summary.per_policy)
        for (const auto& [t, v] : pm.mean_jaccard_by_t)
            os << policy << "," << t << "," << detail::fixed6(v) << "\n";
}

/// Write the scalar summary as CSV: policy,fwer,mean_recovery.
inline void write_summary_csv(std::ostream& os, const MetricsSummary& summary) {
    os << "policy,fwer,mean_recovery\n";
    for (const auto& [policy, pm] : summary.per_policy)
        os << policy << "," << detail::fixed6(pm.fwer) << "," << detail::fixed6(pm.mean_recovery) << "\n";
}

inline void write_traces_jsonl(std::ostream& os, const std::vector<AicpTrace>& traces) {
    for (const auto& tr : traces) os << nlohmann::json(tr).dump() << "\n";
}

inline AicpRound round_from_json(const nlohmann::json& j) {
    AicpRound r;
    r.t = j.at("t").get<int>();
    r.target = j.at("target").get<int>();
    r.accepted_count = j.at("accepted_sets").get<int>();
    r.estimate = j.at("estimate").get<std::vector<int>>();
    if (j.contains("empty_set_p") && !j.at("empty_set_p").is_null())
        r.empty_set_p = j.at("empty_set_p").get<double>();
    return r;
}

inline AicpTrace trace_from_json(const nlohmann::json& j) {
    AicpTrace tr;
    tr.scm_id = j.at("scm_id").get<int>();
    tr.policy = j.at("policy").get<std::string>();
    tr.seed = j.at("seed").get<std::uint64_t>();
    tr.population = j.at("population").get<bool>();
    tr.T = j.at("T").get<int>();
    if (!j.at("alpha").is_null()) tr.alpha = j.at("alpha").get<double>();
    if (!j.at("n_obs").is_null()) tr.n_obs = j.at("n_obs").get<int>();
    if (!j.at("n_e").is_null()) tr.n_e = j.at("n_e").get<int>();
    for (const auto& rj : j.at("rounds")) tr.rounds.push_back(round_from_json(rj));
    tr.final_estimate = j.at("final_estimate").get<std::vector<int>>();
    tr.true_parents = j.at("true_parents").get<std::vector<int>>();
    if (j.contains("empty_set_level") && !j.at("empty_set_level").is_null())
        tr.empty_set_level = j.at("empty_set_level").get<double>();
    return tr;
}

inline std::vector<AicpTrace> read_traces_jsonl(std::istream& is) {
    std::vector<AicpTrace> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(trace_from_json(nlohmann::json::parse(line)));
    }
    return out;
}

inline Intervention intervention_from_json(const nlohmann::json& j) {
    Intervention iv;
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "do") iv.kind = InterventionKind::Do;
    else if (kind == "shift") iv.kind = InterventionKind::Shift;
    else if (kind == "noise") iv.kind = InterventionKind::Noise;
    else throw std::invalid_argument("intervention_from_json: unknown kind '" + kind + "'");
    iv.mean = j.value("mean", 0.0);
    iv.variance = j.value("variance", 0.0);
    return iv;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    std::string mode = j.at("mode").get<std::string>();
    if (mode == "population") cfg.mode = ExperimentMode::Population;
    else if (mode == "finite") cfg.mode = ExperimentMode::Finite;
    else throw std::invalid_argument("config_from_json: unknown mode '" + mode + "'");
    cfg.num_scms = j.at("num_scms").get<int>();
    cfg.seeds_per_scm = j.at("seeds_per_scm").get<int>();
    cfg.scm.p = j.at("p").get<int>();
    cfg.scm.avg_degree = j.value("avg_degree", 3.0);
    auto range = [&](const char* key, std::pair<double, double> fallback) {
        if (!j.contains(key)) return fallback;
        auto v = j.at(key).get<std::vector<double>>();
        if (v.size() != 2) throw std::invalid_argument("config_from_json: ranges need two endpoints");
        return std::make_pair(v[0], v[1]);
    };
    cfg.scm.weight_range = range("weight_range", {0.5, 1.0});
    cfg.scm.intercept_range = range("intercept_range", {0.0, 1.0});
    cfg.scm.variance_range = range("variance_range", {0.0, 1.0});
    cfg.scm.flip_weight_signs = j.value("flip_weight_signs", false);
    cfg.T = j.value("T", 50);
    cfg.alpha = j.value("alpha", 0.01);
    cfg.n_obs = j.value("n_obs", 1000);
    cfg.n_e = j.value("n_e", 1000);
    if (j.contains("intervention")) cfg.intervention_template = intervention_from_json(j.at("intervention"));
    cfg.policies = j.at("policies").get<std::vector<std::string>>();
    cfg.master_seed = j.value("master_seed", std::uint64_t{0});
    validate(cfg);
    return cfg;
}

/** @brief Violation counts of the structural guarantees on random DAG/target
 * pairs; all zeros means the suite passed. */
struct LemmaCheckReport {
    int cases = 0;
    int intervened_parent_missing = 0;
    int child_descendant_overlap = 0;
    int empty_set_mismatch = 0;
    int ancestor_ratio_below_half = 0;
    int ancestor_closure_broken = 0;

    bool passed() const {
        return intervened_parent_missing == 0 && child_descendant_overlap == 0 &&
               empty_set_mismatch == 0 && ancestor_ratio_below_half == 0 &&
               ancestor_closure_broken == 0;
    }
};

/**
 * @brief Property suite over random DAGs (up to 10 predictors) and random
 * non-empty target sets:
 *  - every stable set contains every intervened parent of the response;
 *  - no stable set meets the descendants of an intervened child of the response;
 *  - the empty set is stable exactly when no target is an ancestor of the response;
 *  - intervened-on ancestors of the response keep stability ratio >= 1/2;
 *  - adding an un-conditioned ancestor to a stable set keeps it stable.
 */
inline LemmaCheckReport run_lemma_checks(int num_cases, std::uint64_t seed) {
    LemmaCheckReport report;
    std::mt19937_64 rng(seed);
    for (int c = 0; c < num_cases; ++c) {
        RandomScmOptions opt;
        opt.p = 3 + static_cast<int>(rng() % 9);
        opt.avg_degree = 1.0 + static_cast<double>(rng() % 200) / 100.0;
        Dag dag = random_scm(opt, rng()).dag();
        std::vector<int> predictors = dag.predictors();

        std::vector<int> targets;
        int want = 1 + static_cast<int>(rng() % std::min<std::size_t>(4, predictors.size()));
        std::vector<int> shuffled = predictors;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        targets.assign(shuffled.begin(), shuffled.begin() + want);
        std::sort(targets.begin(), targets.end());

        StableSetCollection coll = stable_sets(dag, targets);
        ++report.cases;

        int y = dag.response();
        std::vector<int> parents = relatives(dag, y, Relation::Parents);
        std::vector<int> children = relatives(dag, y, Relation::Children);
        std::vector<int> ancestors = relatives(dag, y, Relation::Ancestors);
        auto in = [](const std::vector<int>& v, int x) {
            return std::binary_search(v.begin(), v.end(), x);
        };

        for (int tgt : targets) {
            if (in(parents, tgt)) {
                for (const auto& s : coll.sets)
                    if (!in(s, tgt)) { ++report.intervened_parent_missing; break; }
            }
            if (in(children, tgt)) {
                std::vector<int> de = relatives(dag, tgt, Relation::Descendants);
                bool bad = false;
                for (const auto& s : coll.sets) {
                    for (int v : s)
                        if (in(de, v)) { bad = true; break; }
                    if (bad) break;
                }
                if (bad) ++report.child_descendant_overlap;
            }
        }

        bool empty_stable = !coll.sets.empty() && coll.sets.front().empty();
        bool any_target_ancestor = false;
        for (int tgt : targets)
            if (in(ancestors, tgt)) any_target_ancestor = true;
        if (empty_stable == any_target_ancestor) ++report.empty_set_mismatch;

        if (!coll.sets.empty()) {
            for (int tgt : targets)
                if (in(ancestors, tgt) && stability_ratio(coll, tgt) < 0.5)
                    ++report.ancestor_ratio_below_half;
        }

        std::set<std::vector<int>> stable_lookup(coll.sets.begin(), coll.sets.end());
        for (const auto& s : coll.sets) {
            for (int anc : ancestors) {
                if (anc == y || in(s, anc)) continue;
                std::vector<int> grown = s;
                grown.push_back(anc);
                std::sort(grown.begin(), grown.end());
                if (!stable_lookup.count(grown)) { ++report.ancestor_closure_broken; break; }
            }
        }
    }
    return report;
}

/** @brief Empirical sizes of the two-sample tests and the invariance test
 * under their null hypotheses. */
struct CalibrationReport {
    int replicates = 0;
    double welch_rate = 0.0;
    double f_rate = 0.0;
    double invariance_rate = 0.0;

    bool passed() const {
        return welch_rate >= 0.035 && welch_rate <= 0.065 && f_rate >= 0.035 && f_rate <= 0.065 &&
               invariance_rate <= 0.08;
    }
};

/**
 * @brief Rejection rates at level 0.05 under the null: two i.i.d. N(0,1)
 * samples for the t- and F-tests, and two i.i.d. halves of one linear-model
 * sample (conditioning on the true parent) for the invariance test.
 */
inline CalibrationReport run_calibration_checks(int replicates, std::uint64_t seed) {
    CalibrationReport report;
    report.replicates = replicates;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    int welch_reject = 0, f_reject = 0, inv_reject = 0;
    Dag dag(2, {{0, 1}}, 1);
    LinearScm line(dag, (Eigen::MatrixXd(2, 2) << 0, 1, 0, 0).finished(),
                   Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2));

    for (int r = 0; r < replicates; ++r) {
        Eigen::VectorXd a(100), b(100);
        for (int i = 0; i < 100; ++i) a[i] = normal(rng);
        for (int i = 0; i < 100; ++i) b[i] = normal(rng);
        if (welch_t_test(a, b) <= 0.05) ++welch_reject;
        if (f_test_variance(a, b) <= 0.05) ++f_reject;

        EnvironmentSet envs;
        envs.response = 1;
        envs.environments.push_back({sample(line, 100, rng()), std::nullopt});
        envs.environments.push_back({sample(line, 100, rng()), std::nullopt});
        if (test_invariance(envs, {0}).p_value <= 0.05) ++inv_reject;
    }
    double n = static_cast<double>(replicates);
    report.welch_rate = welch_reject / n;
    report.f_rate = f_reject / n;
    report.invariance_rate = inv_reject / n;
    return report;
}

}  // namespace aicp
