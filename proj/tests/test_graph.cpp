#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include <aicp/aicp.hpp>

#include "fixtures.hpp"

using aicp::Dag;
using aicp::Relation;

namespace {

// Transitive closure by repeated boolean matrix multiplication, independent of
// the library's mask-based traversal.
std::vector<std::vector<bool>> closure_oracle(const Dag& dag) {
    int n = dag.num_nodes();
    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
    for (auto [from, to] : dag.edges()) adj[from][to] = true;
    std::vector<std::vector<bool>> reach = adj;
    for (int step = 0; step < n; ++step) {
        std::vector<std::vector<bool>> next = reach;
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k)
                if (reach[i][k])
                    for (int j = 0; j < n; ++j)
                        if (adj[k][j]) next[i][j] = true;
        reach.swap(next);
    }
    return reach;
}

// Exhaustive path-enumeration d-connectivity oracle: walks every simple
// undirected path and applies the collider rules directly.
struct PathOracle {
    const Dag& dag;
    std::vector<std::vector<bool>> reach;
    std::vector<char> in_s;

    PathOracle(const Dag& d, const std::vector<int>& s) : dag(d), reach(closure_oracle(d)), in_s(d.num_nodes(), 0) {
        for (int v : s) in_s[v] = 1;
    }

    bool descendant_in_s(int v) const {
        if (in_s[v]) return true;
        for (int u = 0; u < dag.num_nodes(); ++u)
            if (reach[v][u] && in_s[u]) return true;
        return false;
    }

    // entered_forward: the edge used to reach `node` pointed into it.
    bool dfs(int node, int goal, bool entered_forward, std::vector<char>& visited) {
        if (node == goal) return true;
        for (int w = 0; w < dag.num_nodes(); ++w) {
            bool out_edge = dag.has_edge(node, w);
            bool in_edge = dag.has_edge(w, node);
            for (int dir = 0; dir < 2; ++dir) {
                bool leaving_forward = dir == 0;  // edge node->w
                if (leaving_forward && !out_edge) continue;
                if (!leaving_forward && !in_edge) continue;
                if (visited[w]) continue;
                bool collider = entered_forward && !leaving_forward;
                if (collider ? !descendant_in_s(node) : in_s[node]) continue;
                visited[w] = 1;
                if (dfs(w, goal, leaving_forward, visited)) return true;
                visited[w] = 0;
            }
        }
        return false;
    }

    bool connected(int from, int to) {
        std::vector<char> visited(dag.num_nodes(), 0);
        visited[from] = 1;
        for (int w = 0; w < dag.num_nodes(); ++w) {
            for (int dir = 0; dir < 2; ++dir) {
                bool forward = dir == 0;
                if (forward && !dag.has_edge(from, w)) continue;
                if (!forward && !dag.has_edge(w, from)) continue;
                if (visited[w]) continue;
                visited[w] = 1;
                if (dfs(w, to, forward, visited)) return true;
                visited[w] = 0;
            }
        }
        return false;
    }
};

bool d_connected_oracle(const Dag& dag, const std::vector<int>& a, const std::vector<int>& b,
                        const std::vector<int>& s) {
    PathOracle oracle(dag, s);
    for (int x : a)
        for (int y : b)
            if (oracle.connected(x, y)) return true;
    return false;
}

Dag random_test_dag(std::mt19937_64& rng, int n, double edge_prob, int response) {
    std::vector<int> label(n);
    std::iota(label.begin(), label.end(), 0);
    std::shuffle(label.begin(), label.end(), rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (unit(rng) < edge_prob) edges.emplace_back(label[i], label[j]);
    return Dag(n, std::move(edges), response);
}

}  // namespace

TEST_CASE("dag construction validates its input", "[graph]") {
    CHECK_THROWS_AS(Dag(3, {{0, 1}, {1, 0}}, 2), std::invalid_argument);   // cycle
    CHECK_THROWS_AS(Dag(3, {{0, 0}}, 1), std::invalid_argument);           // self-loop
    CHECK_THROWS_AS(Dag(3, {{0, 1}, {0, 1}}, 2), std::invalid_argument);   // duplicate
    CHECK_THROWS_AS(Dag(3, {{0, 3}}, 1), std::out_of_range);               // bad endpoint
    CHECK_THROWS_AS(Dag(3, {}, 3), std::out_of_range);                     // bad response
    CHECK_THROWS_AS(Dag(1, {}, 0), std::invalid_argument);                 // too small

    Dag dag = aicp_test::child_coparent_dag();
    CHECK(dag.num_nodes() == 5);
    CHECK(dag.num_predictors() == 4);
    CHECK(dag.predictors() == std::vector<int>{0, 1, 3, 4});
}

TEST_CASE("relatives of the worked example graph", "[graph]") {
    Dag dag = aicp_test::child_coparent_dag();
    CHECK(relatives(dag, 2, Relation::Parents) == std::vector<int>{0, 1});
    CHECK(relatives(dag, 2, Relation::Children) == std::vector<int>{3});
    CHECK(relatives(dag, 3, Relation::Ancestors) == std::vector<int>{0, 1, 2, 4});
    CHECK(relatives(dag, 0, Relation::Descendants) == std::vector<int>{0, 2, 3});

    Dag edgeless(4, {}, 0);
    for (int v = 0; v < 4; ++v) {
        CHECK(relatives(edgeless, v, Relation::Ancestors).empty());
        CHECK(relatives(edgeless, v, Relation::Descendants) == std::vector<int>{v});
    }
    CHECK_THROWS_AS(relatives(dag, 9, Relation::Parents), std::out_of_range);
}

TEST_CASE("descendants match the boolean-closure oracle", "[graph]") {
    std::mt19937_64 rng(2024);
    for (int rep = 0; rep < 200; ++rep) {
        Dag dag = random_test_dag(rng, 8, 0.35, 0);
        auto reach = closure_oracle(dag);
        for (int v = 0; v < 8; ++v) {
            std::vector<int> expected{v};
            for (int u = 0; u < 8; ++u)
                if (u != v && reach[v][u]) expected.push_back(u);
            std::sort(expected.begin(), expected.end());
            CHECK(relatives(dag, v, Relation::Descendants) == expected);

            std::vector<int> anc;
            for (int u = 0; u < 8; ++u)
                if (u != v && reach[u][v]) anc.push_back(u);
            CHECK(relatives(dag, v, Relation::Ancestors) == anc);
        }
    }
}

TEST_CASE("d-separation on chains and colliders", "[graph]") {
    Dag chain(3, {{0, 1}, {1, 2}}, 2);
    CHECK(d_separated(chain, {0}, {2}, {1}));
    CHECK_FALSE(d_separated(chain, {0}, {2}, {}));

    Dag collider(4, {{0, 2}, {1, 2}, {2, 3}}, 3);
    CHECK(d_separated(collider, {0}, {1}, {}));
    CHECK_FALSE(d_separated(collider, {0}, {1}, {2}));
    CHECK_FALSE(d_separated(collider, {0}, {1}, {3}));  // descendant of the collider

    CHECK_THROWS_AS(d_separated(chain, {0}, {0}, {}), std::invalid_argument);
    CHECK_THROWS_AS(d_separated(chain, {0}, {2}, {0}), std::invalid_argument);
    CHECK_THROWS_AS(d_separated(chain, {0}, {5}, {}), std::out_of_range);
}

TEST_CASE("d-separation agrees with the path-enumeration oracle", "[graph]") {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> nodes(3, 6);
    for (int rep = 0; rep < 300; ++rep) {
        int n = nodes(rng);
        Dag dag = random_test_dag(rng, n, 0.5, 0);
        for (int q = 0; q < 8; ++q) {
            int a = static_cast<int>(rng() % n);
            int b = static_cast<int>(rng() % n);
            if (a == b) continue;
            std::vector<int> s;
            for (int v = 0; v < n; ++v)
                if (v != a && v != b && rng() % 3 == 0) s.push_back(v);
            bool lib = d_separated(dag, {a}, {b}, s);
            bool oracle = !d_connected_oracle(dag, {a}, {b}, s);
            INFO("n=" << n << " a=" << a << " b=" << b);
            REQUIRE(lib == oracle);
        }
    }
}

TEST_CASE("stable sets of the child-coparent graph", "[graph]") {
    Dag dag = aicp_test::child_coparent_dag();
    aicp::StableSetCollection coll = aicp::stable_sets(dag, {0, 4});
    std::vector<std::vector<int>> expected = {{0},       {0, 1},    {0, 4},
                                              {0, 1, 4}, {0, 3, 4}, {0, 1, 3, 4}};
    CHECK(coll.sets == expected);
    CHECK(coll.targets == std::vector<int>{0, 4});

    // Source nodes appended to the graph reproduce the same separations.
    Dag augmented(7, {{0, 2}, {1, 2}, {2, 3}, {4, 3}, {5, 0}, {6, 4}}, 2);
    for (const auto& s : expected) CHECK(d_separated(augmented, {5, 6}, {2}, s));
    CHECK_FALSE(d_separated(augmented, {5, 6}, {2}, {}));
    CHECK_FALSE(d_separated(augmented, {5, 6}, {2}, {0, 3}));
}

TEST_CASE("stable sets of the mediated-parent graph", "[graph]") {
    Dag dag = aicp_test::mediated_parent_dag();
    aicp::StableSetCollection coll = aicp::stable_sets(dag, {2});
    std::vector<std::vector<int>> expected = {{0, 1, 2}, {0, 1, 3}, {0, 1, 2, 3}};
    CHECK(coll.sets == expected);
}

TEST_CASE("no targets leave every subset stable", "[graph]") {
    Dag dag = aicp_test::child_coparent_dag();
    aicp::StableSetCollection coll = aicp::stable_sets(dag, {});
    CHECK(coll.sets.size() == 16);
    CHECK(std::is_sorted(coll.sets.begin(), coll.sets.end(), aicp::canonical_set_less));
}

TEST_CASE("stable-set errors", "[graph]") {
    Dag dag = aicp_test::child_coparent_dag();
    CHECK_THROWS_AS(aicp::stable_sets(dag, {2}), std::invalid_argument);     // response
    CHECK_THROWS_AS(aicp::stable_sets(dag, {0, 0}), std::invalid_argument);  // duplicate
    CHECK_THROWS_AS(aicp::stable_sets(dag, {9}), std::out_of_range);

    Dag wide(22, {}, 0);
    CHECK_THROWS_AS(aicp::stable_sets(wide, {}), std::length_error);
}

TEST_CASE("stability ratios of the worked example collection", "[graph]") {
    aicp::StableSetCollection coll = aicp::stable_sets(aicp_test::child_coparent_dag(), {0, 4});
    CHECK(aicp::stability_ratio(coll, 0) == 1.0);
    CHECK(aicp::stability_ratio(coll, 1) == Catch::Approx(3.0 / 6.0));
    CHECK(aicp::stability_ratio(coll, 3) == Catch::Approx(2.0 / 6.0));
    CHECK(aicp::stability_ratio(coll, 4) == Catch::Approx(4.0 / 6.0));

    CHECK_THROWS_AS(aicp::stability_ratio(coll, 2), std::invalid_argument);
    CHECK_THROWS_AS(aicp::stability_ratio(coll, 7), std::out_of_range);
    aicp::StableSetCollection empty;
    empty.num_nodes = 3;
    empty.response = 2;
    CHECK_THROWS_AS(aicp::stability_ratio(empty, 0), std::domain_error);
}

TEST_CASE("collections come back in canonical order", "[graph]") {
    std::mt19937_64 rng(5150);
    for (int rep = 0; rep < 25; ++rep) {
        Dag dag = random_test_dag(rng, 7, 0.4, static_cast<int>(rng() % 7));
        std::vector<int> targets;
        for (int v : dag.predictors())
            if (rng() % 3 == 0) targets.push_back(v);
        aicp::StableSetCollection coll = aicp::stable_sets(dag, targets);
        CHECK(std::is_sorted(coll.sets.begin(), coll.sets.end(), aicp::canonical_set_less));
    }
}

TEST_CASE("dag json round trip", "[graph]") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        Dag dag = random_test_dag(rng, 6, 0.4, static_cast<int>(rng() % 6));
        nlohmann::json j = dag;
        Dag back = aicp::dag_from_json(j);
        CHECK(back.num_nodes() == dag.num_nodes());
        CHECK(back.response() == dag.response());
        CHECK(back.edges() == dag.edges());
        CHECK(j.at("p").get<int>() == dag.num_predictors());
    }
}

TEST_CASE("structural guarantees hold on random graphs", "[graph]") {
    aicp::LemmaCheckReport report = aicp::run_lemma_checks(80, 991);
    CHECK(report.cases == 80);
    CHECK(report.intervened_parent_missing == 0);
    CHECK(report.child_descendant_overlap == 0);
    CHECK(report.empty_set_mismatch == 0);
    CHECK(report.ancestor_ratio_below_half == 0);
    CHECK(report.ancestor_closure_broken == 0);
}
