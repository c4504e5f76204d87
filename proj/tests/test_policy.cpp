#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <vector>

#include <aicp/aicp.hpp>

#include "fixtures.hpp"

using aicp::AicpOptions;
using aicp::AicpTrace;
using aicp::Dag;
using aicp::PolicyConfig;
using aicp::PolicyState;

namespace {

// The six sets stable under interventions on {0, 4} in the child-coparent
// graph. Membership counts over candidates {0, 1, 3, 4}: 6, 3, 2, 4 of 6,
// so 0 is identified, 3 falls below ratio 1/2, and 1 sits exactly at 1/2.
std::vector<std::vector<int>> six_sets() {
    return {{0}, {0, 1}, {0, 4}, {0, 1, 4}, {0, 3, 4}, {0, 1, 3, 4}};
}

std::set<int> targets_over_seeds(const PolicyConfig& cfg, PolicyState state,
                                 const std::vector<std::vector<int>>& accepted,
                                 const std::vector<int>& candidates, int seeds) {
    std::set<int> seen;
    for (int s = 0; s < seeds; ++s) {
        PolicyState fresh = state;
        auto t = aicp::next_intervention(cfg, fresh, accepted, candidates, 1000 + s);
        REQUIRE(t.has_value());
        seen.insert(*t);
    }
    return seen;
}

bool subset_of(const std::vector<int>& inner, const std::vector<int>& outer) {
    return std::includes(outer.begin(), outer.end(), inner.begin(), inner.end());
}

}  // namespace

TEST_CASE("policy names map to strategy flags", "[policy]") {
    PolicyConfig cfg = aicp::policy_from_name("markov+e+r");
    CHECK(cfg.use_markov);
    CHECK(cfg.use_empty_set);
    CHECK(cfg.use_ratio);
    CHECK(cfg.name == "markov+e+r");

    CHECK_FALSE(aicp::policy_from_name("random").use_markov);
    CHECK(aicp::policy_from_name("e").use_empty_set);
    CHECK(aicp::policy_from_name("r").use_ratio);
    CHECK(aicp::policy_from_name("markov+r").use_markov);
    CHECK_FALSE(aicp::policy_from_name("markov+r").use_empty_set);
    CHECK(aicp::policy_from_name("e+r").use_empty_set);
    CHECK(aicp::policy_from_name("markov+e").use_markov);

    CHECK_THROWS_AS(aicp::policy_from_name("bogus"), std::invalid_argument);
    CHECK_THROWS_AS(aicp::policy_from_name("r+markov"), std::invalid_argument);
    CHECK_THROWS_AS(aicp::policy_from_name("Markov"), std::invalid_argument);
    CHECK_THROWS_AS(aicp::policy_from_name(""), std::invalid_argument);
}

TEST_CASE("identified parents are never picked again", "[policy]") {
    std::vector<int> candidates{0, 1, 3, 4};
    std::set<int> seen =
        targets_over_seeds(aicp::policy_from_name("random"), {}, six_sets(), candidates, 120);
    CHECK(seen == std::set<int>{1, 3, 4});

    PolicyState state;
    aicp::next_intervention(aicp::policy_from_name("random"), state, six_sets(), candidates, 3);
    CHECK(state.identified_parents == std::vector<int>{0});
}

TEST_CASE("the ratio strategy drops low-membership targets", "[policy]") {
    std::set<int> seen = targets_over_seeds(aicp::policy_from_name("r"), {}, six_sets(),
                                            {0, 1, 3, 4}, 120);
    CHECK(seen == std::set<int>{1, 4});  // 3 sits below ratio 1/2, 1 exactly at it
}

TEST_CASE("the markov strategy restricts to the blanket estimate", "[policy]") {
    PolicyState with_blanket;
    with_blanket.markov_blanket = std::vector<int>{1, 3};
    std::set<int> seen = targets_over_seeds(aicp::policy_from_name("markov"), with_blanket,
                                            six_sets(), {0, 1, 3, 4}, 120);
    CHECK(seen == std::set<int>{1, 3});

    std::set<int> combined = targets_over_seeds(aicp::policy_from_name("markov+r"), with_blanket,
                                                six_sets(), {0, 1, 3, 4}, 40);
    CHECK(combined == std::set<int>{1});  // ratio removes 3, blanket removes 4
}

TEST_CASE("the fallback ladder relaxes filters in order", "[policy]") {
    // Ratio filter would empty the pool: it is dropped first.
    PolicyState low_blanket;
    low_blanket.markov_blanket = std::vector<int>{3};
    std::set<int> ratio_dropped = targets_over_seeds(aicp::policy_from_name("markov+r"),
                                                     low_blanket, six_sets(), {0, 1, 3, 4}, 40);
    CHECK(ratio_dropped == std::set<int>{3});

    // A blanket holding only the identified parent is dropped next.
    PolicyState identified_blanket;
    identified_blanket.markov_blanket = std::vector<int>{0};
    std::set<int> blanket_dropped = targets_over_seeds(aicp::policy_from_name("markov"),
                                                       identified_blanket, six_sets(),
                                                       {0, 1, 3, 4}, 120);
    CHECK(blanket_dropped == std::set<int>{1, 3, 4});

    // A full blacklist is dropped last.
    PolicyState blacklisted;
    blacklisted.blacklist = {1, 3, 4};
    std::set<int> blacklist_dropped = targets_over_seeds(aicp::policy_from_name("e"), blacklisted,
                                                         six_sets(), {0, 1, 3, 4}, 120);
    CHECK(blacklist_dropped == std::set<int>{1, 3, 4});

    PolicyState partial;
    partial.blacklist = {1, 3};
    std::set<int> respected = targets_over_seeds(aicp::policy_from_name("e"), partial, six_sets(),
                                                 {0, 1, 3, 4}, 40);
    CHECK(respected == std::set<int>{4});
}

TEST_CASE("an all-rejected round leaves ratio filters inert", "[policy]") {
    std::vector<std::vector<int>> none;
    std::set<int> seen = targets_over_seeds(aicp::policy_from_name("r"), {}, none, {0, 1, 3, 4}, 120);
    CHECK(seen == std::set<int>{0, 1, 3, 4});  // nothing identified, nothing low

    PolicyState blacklisted;
    blacklisted.blacklist = {0, 1, 3};
    std::set<int> filtered = targets_over_seeds(aicp::policy_from_name("e+r"), blacklisted, none,
                                                {0, 1, 3, 4}, 40);
    CHECK(filtered == std::set<int>{4});  // the blacklist still applies

    PolicyState state;
    CHECK_FALSE(aicp::next_intervention(aicp::policy_from_name("random"), state, none, {}, 1)
                    .has_value());
}

TEST_CASE("first interventions draw from the right pool", "[policy]") {
    aicp::LinearScm scm = aicp_test::unit_scm(aicp_test::mediated_parent_dag());
    Eigen::MatrixXd obs = aicp::sample(scm, 2000, 71);

    std::set<int> random_targets;
    for (int s = 0; s < 60; ++s) {
        auto [target, state] = aicp::first_intervention(aicp::policy_from_name("random"), obs, 4, s);
        CHECK_FALSE(state.markov_blanket.has_value());
        random_targets.insert(target);
    }
    CHECK(random_targets == std::set<int>{0, 1, 2, 3});

    auto [t0, s0] = aicp::first_intervention(aicp::policy_from_name("markov"), obs, 4, 5);
    auto [t1, s1] = aicp::first_intervention(aicp::policy_from_name("markov"), obs, 4, 5);
    CHECK(t0 == t1);
    REQUIRE(s0.markov_blanket.has_value());
    // Cross-validated screening may keep a few spurious columns but must not
    // drop a true parent.
    std::vector<int> parents{0, 1, 3};
    CHECK(std::includes(s0.markov_blanket->begin(), s0.markov_blanket->end(), parents.begin(),
                        parents.end()));
    CHECK(std::binary_search(s0.markov_blanket->begin(), s0.markov_blanket->end(), t0));

    CHECK_THROWS_AS(aicp::first_intervention(aicp::policy_from_name("random"), obs, 9, 1),
                    std::out_of_range);
}

TEST_CASE("active runs are deterministic and well-formed", "[policy]") {
    aicp::LinearScm scm = aicp_test::unit_scm(aicp_test::child_coparent_dag());
    AicpOptions opt;
    opt.T = 4;
    opt.alpha = 0.05;
    opt.n_obs = 600;
    opt.n_e = 600;

    AicpTrace a = aicp::run_aicp(scm, aicp::policy_from_name("markov+e+r"), opt, 99);
    AicpTrace b = aicp::run_aicp(scm, aicp::policy_from_name("markov+e+r"), opt, 99);
    CHECK(nlohmann::json(a) == nlohmann::json(b));
    AicpTrace c = aicp::run_aicp(scm, aicp::policy_from_name("markov+e+r"), opt, 100);
    CHECK(nlohmann::json(a) != nlohmann::json(c));

    CHECK(a.true_parents == std::vector<int>{0, 1});
    CHECK(a.policy == "markov+e+r");
    CHECK_FALSE(a.population);
    CHECK(a.rounds.size() >= 1);
    CHECK(a.rounds.size() <= 4);
    for (std::size_t i = 0; i < a.rounds.size(); ++i) {
        const aicp::AicpRound& r = a.rounds[i];
        CHECK(r.t == static_cast<int>(i) + 1);
        CHECK(r.target != 2);
        CHECK(r.target >= 0);
        CHECK(r.target < 5);
        CHECK(r.empty_set_p.has_value());
    }
    CHECK(a.final_estimate == a.rounds.back().estimate);
    REQUIRE(a.empty_set_level.has_value());
    CHECK(*a.empty_set_level == Catch::Approx(0.05 / 4.0));

    AicpTrace plain = aicp::run_aicp(scm, aicp::policy_from_name("random"), opt, 7);
    CHECK_FALSE(plain.empty_set_level.has_value());
    for (const auto& r : plain.rounds) CHECK_FALSE(r.empty_set_p.has_value());

    CHECK_THROWS_AS(aicp::run_aicp(scm, aicp::policy_from_name("random"), [] {
        AicpOptions bad;
        bad.T = 0;
        return bad;
    }(), 1), std::invalid_argument);
    CHECK_THROWS_AS(aicp::run_aicp(scm, aicp::policy_from_name("random"), [] {
        AicpOptions bad;
        bad.alpha = 1.5;
        return bad;
    }(), 1), std::invalid_argument);
    CHECK_THROWS_AS(aicp::run_aicp(scm, aicp::policy_from_name("random"), [] {
        AicpOptions bad;
        bad.n_obs = 1;
        return bad;
    }(), 1), std::invalid_argument);
}

TEST_CASE("active runs on a strong shift converge to the parents", "[policy]") {
    aicp::LinearScm scm = aicp_test::triangle_scm(1.0, 1.0, 1.0);
    AicpOptions opt;
    opt.T = 4;
    opt.alpha = 0.05;
    opt.n_obs = 2000;
    opt.n_e = 2000;

    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        AicpTrace trace = aicp::run_aicp(scm, aicp::policy_from_name("random"), opt, seed);
        if (trace.final_estimate == std::vector<int>{0}) ++hits;
    }
    CHECK(hits >= 4);
}

TEST_CASE("a single identified parent stops the run early", "[policy]") {
    Dag chain(2, {{0, 1}}, 1);
    aicp::LinearScm scm = aicp_test::unit_scm(chain);
    AicpOptions opt;
    opt.T = 5;
    opt.alpha = 0.05;
    opt.n_obs = 2000;
    opt.n_e = 2000;

    AicpTrace trace = aicp::run_aicp(scm, aicp::policy_from_name("random"), opt, 11);
    CHECK(trace.rounds.size() == 1);
    CHECK(trace.rounds[0].target == 0);
    CHECK(trace.final_estimate == std::vector<int>{0});
}

TEST_CASE("interventions with no response effect keep the empty set invariant", "[policy]") {
    Dag downstream(2, {{0, 1}}, 0);  // the sole predictor is a child of the response
    aicp::LinearScm scm = aicp_test::unit_scm(downstream);
    AicpOptions opt;
    opt.T = 3;
    opt.alpha = 0.05;
    opt.n_obs = 1500;
    opt.n_e = 1500;

    AicpTrace trace = aicp::run_aicp(scm, aicp::policy_from_name("e"), opt, 17);
    CHECK(trace.rounds.size() == 3);
    for (const auto& r : trace.rounds) {
        CHECK(r.target == 1);
        REQUIRE(r.empty_set_p.has_value());
        CHECK(*r.empty_set_p > *trace.empty_set_level);
    }
    CHECK(trace.final_estimate.empty());
    CHECK(trace.true_parents.empty());
}

TEST_CASE("population runs recover the parents exactly", "[policy]") {
    for (const char* name : {"random", "markov", "r", "markov+r"}) {
        PolicyConfig cfg = aicp::policy_from_name(name);
        for (const auto& dag : {aicp_test::child_coparent_dag(), aicp_test::mediated_parent_dag()}) {
            aicp::LinearScm scm = aicp_test::unit_scm(dag);
            std::vector<int> parents = relatives(dag, dag.response(), aicp::Relation::Parents);
            for (std::uint64_t seed = 1; seed <= 8; ++seed) {
                AicpTrace trace = aicp::run_aicp_population(scm, cfg, seed);
                CHECK(trace.population);
                CHECK(trace.final_estimate == parents);
                CHECK(trace.rounds.size() <= static_cast<std::size_t>(dag.num_predictors()));

                std::set<int> used;
                for (const auto& r : trace.rounds) {
                    CHECK(subset_of(r.estimate, parents));
                    CHECK(used.insert(r.target).second);  // without replacement
                    CHECK(r.target != dag.response());
                }
            }
        }
    }
}

TEST_CASE("population markov policies stay inside the blanket", "[policy]") {
    aicp::LinearScm scm = aicp_test::unit_scm(aicp_test::mediated_parent_dag());
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        AicpTrace trace = aicp::run_aicp_population(scm, aicp::policy_from_name("markov"), seed);
        for (const auto& r : trace.rounds) CHECK(r.target != 2);
    }
}

TEST_CASE("population runs with no parents stop immediately", "[policy]") {
    Dag downstream(2, {{0, 1}}, 0);
    AicpTrace trace =
        aicp::run_aicp_population(aicp_test::unit_scm(downstream), aicp::policy_from_name("random"), 4);
    CHECK(trace.rounds.size() == 1);
    CHECK(trace.final_estimate.empty());
    CHECK(trace.true_parents.empty());
}

TEST_CASE("population runs reject the empty-set strategy", "[policy]") {
    aicp::LinearScm scm = aicp_test::unit_scm(aicp_test::child_coparent_dag());
    CHECK_THROWS_AS(aicp::run_aicp_population(scm, aicp::policy_from_name("e"), 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(aicp::run_aicp_population(scm, aicp::policy_from_name("markov+e+r"), 1),
                    std::invalid_argument);
}

TEST_CASE("a shared stable-set cache does not change results", "[policy]") {
    aicp::LinearScm scm = aicp_test::unit_scm(aicp_test::child_coparent_dag());
    aicp::StableSetCache cache(scm.dag());
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        AicpTrace with_cache =
            aicp::run_aicp_population(scm, aicp::policy_from_name("r"), seed, &cache);
        AicpTrace without = aicp::run_aicp_population(scm, aicp::policy_from_name("r"), seed);
        CHECK(nlohmann::json(with_cache) == nlohmann::json(without));
    }
}

TEST_CASE("cached single-target masks match direct enumeration", "[policy]") {
    std::mt19937_64 rng(271828);
    for (int rep = 0; rep < 20; ++rep) {
        int n = 5 + static_cast<int>(rng() % 3);
        std::vector<int> label(n);
        std::iota(label.begin(), label.end(), 0);
        std::shuffle(label.begin(), label.end(), rng);
        std::vector<std::pair<int, int>> edges;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng() % 2 == 0) edges.emplace_back(label[i], label[j]);
        Dag dag(n, std::move(edges), static_cast<int>(rng() % n));

        aicp::StableSetCache cache(dag);
        CHECK(cache.all_subsets().size() == (std::size_t{1} << dag.num_predictors()));

        std::vector<int> targets;
        for (int v : dag.predictors())
            if (rng() % 3 == 0) targets.push_back(v);
        if (targets.empty()) targets.push_back(dag.predictors().front());

        std::vector<std::uint32_t> via_cache = cache.all_subsets();
        for (int t : targets) {
            const std::vector<std::uint32_t>& single = cache.single_target(t);
            CHECK(std::is_sorted(single.begin(), single.end()));
            std::vector<std::uint32_t> next;
            std::set_intersection(via_cache.begin(), via_cache.end(), single.begin(), single.end(),
                                  std::back_inserter(next));
            via_cache.swap(next);
        }

        std::vector<std::uint32_t> direct = aicp::stable_set_masks(dag, targets);
        std::sort(direct.begin(), direct.end());
        CHECK(via_cache == direct);
    }

    Dag wide(23, {}, 0);
    CHECK_THROWS_AS(aicp::StableSetCache(wide), std::length_error);
}

TEST_CASE("population traces serialize with sampling fields nulled", "[policy]") {
    aicp::LinearScm scm = aicp_test::unit_scm(aicp_test::child_coparent_dag());
    AicpTrace trace = aicp::run_aicp_population(scm, aicp::policy_from_name("random"), 21);
    nlohmann::json j = trace;
    CHECK(j.at("population").get<bool>());
    CHECK(j.at("alpha").is_null());
    CHECK(j.at("n_obs").is_null());
    CHECK(j.at("n_e").is_null());
    CHECK(j.at("empty_set_level").is_null());
    CHECK(j.at("identified_parents_excluded").get<bool>());
    CHECK(j.at("T").get<int>() == 4);
    CHECK(j.at("rounds").is_array());
}
