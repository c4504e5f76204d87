#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

// Directed acyclic graphs over one response node plus p predictor nodes,
// d-separation queries, and enumeration of intervention-stable predictor sets.

namespace aicp {

/**
 * @brief DAG over num_nodes() nodes, one of which is the designated response.
 *
 * Node indices are 0-based. Predictors are all nodes except the response.
 * Edges are stored as (from, to) pairs; construction validates index range,
 * absence of self-loops and duplicates, and acyclicity.
 */
class Dag {
public:
    Dag(int num_nodes, std::vector<std::pair<int, int>> edges, int response)
        : n_(num_nodes), response_(response), edges_(std::move(edges)) {
        if (n_ <= 1) throw std::invalid_argument("Dag: need at least two nodes");
        if (n_ > kMaxNodes) throw std::length_error("Dag: node count exceeds supported maximum");
        if (response_ < 0 || response_ >= n_) throw std::out_of_range("Dag: response index out of range");
        parent_mask_.assign(n_, 0);
        child_mask_.assign(n_, 0);
        for (auto [from, to] : edges_) {
            if (from < 0 || from >= n_ || to < 0 || to >= n_)
                throw std::out_of_range("Dag: edge endpoint out of range");
            if (from == to) throw std::invalid_argument("Dag: self-loop");
            if (child_mask_[from] & bit(to)) throw std::invalid_argument("Dag: duplicate edge");
            child_mask_[from] |= bit(to);
            parent_mask_[to] |= bit(from);
        }
        if (!is_acyclic()) throw std::invalid_argument("Dag: edge set contains a cycle");
        std::sort(edges_.begin(), edges_.end());
    }

    int num_nodes() const { return n_; }
    int num_predictors() const { return n_ - 1; }
    int response() const { return response_; }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }

    bool has_edge(int from, int to) const {
        check_node(from);
        check_node(to);
        return (child_mask_[from] & bit(to)) != 0;
    }

    /// Predictor node indices in ascending order (every node except the response).
    std::vector<int> predictors() const {
        std::vector<int> out;
        out.reserve(n_ - 1);
        for (int v = 0; v < n_; ++v)
            if (v != response_) out.push_back(v);
        return out;
    }

    std::uint64_t parent_mask(int v) const { check_node(v); return parent_mask_[v]; }
    std::uint64_t child_mask(int v) const { check_node(v); return child_mask_[v]; }

    void check_node(int v) const {
        if (v < 0 || v >= n_) throw std::out_of_range("Dag: node index out of range");
    }

    static std::uint64_t bit(int v) { return std::uint64_t{1} << v; }
    static constexpr int kMaxNodes = 60;

private:
    bool is_acyclic() const {
        std::vector<int> indegree(n_, 0);
        for (int v = 0; v < n_; ++v) indegree[v] = std::popcount(parent_mask_[v]);
        std::vector<int> frontier;
        for (int v = 0; v < n_; ++v)
            if (indegree[v] == 0) frontier.push_back(v);
        int seen = 0;
        while (!frontier.empty()) {
            int v = frontier.back();
            frontier.pop_back();
            ++seen;
            for (std::uint64_t m = child_mask_[v]; m; m &= m - 1) {
                int c = std::countr_zero(m);
                if (--indegree[c] == 0) frontier.push_back(c);
            }
        }
        return seen == n_;
    }

    int n_;
    int response_;
    std::vector<std::pair<int, int>> edges_;
    std::vector<std::uint64_t> parent_mask_;
    std::vector<std::uint64_t> child_mask_;
};

enum class Relation { Parents, Children, Ancestors, Descendants };

namespace detail {

inline std::vector<int> mask_to_nodes(std::uint64_t mask) {
    std::vector<int> out;
    for (; mask; mask &= mask - 1) out.push_back(std::countr_zero(mask));
    return out;
}

inline std::uint64_t nodes_to_mask(const Dag& dag, const std::vector<int>& nodes) {
    std::uint64_t mask = 0;
    for (int v : nodes) {
        dag.check_node(v);
        mask |= Dag::bit(v);
    }
    return mask;
}

/// Closure of `seed` under repeated application of the given adjacency masks,
/// including the seed nodes themselves.
inline std::uint64_t reach_closure(const std::vector<std::uint64_t>& adj, std::uint64_t seed) {
    std::uint64_t reached = seed;
    std::uint64_t frontier = seed;
    while (frontier) {
        std::uint64_t next = 0;
        for (std::uint64_t m = frontier; m; m &= m - 1) next |= adj[std::countr_zero(m)];
        frontier = next & ~reached;
        reached |= next;
    }
    return reached;
}

/// d-separation on mask-encoded adjacency: separation of `a` from `b` given `s`
/// in the moralized ancestral subgraph.
inline bool d_separated_masks(const std::vector<std::uint64_t>& parents,
                              const std::vector<std::uint64_t>& children,
                              std::uint64_t a, std::uint64_t b, std::uint64_t s) {
    std::uint64_t relevant = reach_closure(parents, a | b | s);
    int n = static_cast<int>(parents.size());
    std::vector<std::uint64_t> und(n, 0);
    for (std::uint64_t m = relevant; m; m &= m - 1) {
        int v = std::countr_zero(m);
        und[v] |= (parents[v] | children[v]) & relevant;
        std::uint64_t pa = parents[v] & relevant;
        for (std::uint64_t pm = pa; pm; pm &= pm - 1)
            und[std::countr_zero(pm)] |= pa & ~Dag::bit(std::countr_zero(pm));
    }
    std::uint64_t visited = a;
    std::uint64_t frontier = a;
    while (frontier) {
        std::uint64_t next = 0;
        for (std::uint64_t m = frontier; m; m &= m - 1) next |= und[std::countr_zero(m)];
        next &= ~s & ~visited & relevant;
        if (next & b) return false;
        visited |= next;
        frontier = next;
    }
    return (visited & b) == 0;
}

}  // namespace detail

/**
 * @brief Direct or transitive relatives of a node.
 *
 * Descendants include the node itself; ancestors do not. Parents and children
 * are the direct in- and out-neighbours.
 */
inline std::vector<int> relatives(const Dag& dag, int node, Relation kind) {
    dag.check_node(node);
    int n = dag.num_nodes();
    std::vector<std::uint64_t> adj(n);
    switch (kind) {
        case Relation::Parents:
            return detail::mask_to_nodes(dag.parent_mask(node));
        case Relation::Children:
            return detail::mask_to_nodes(dag.child_mask(node));
        case Relation::Ancestors: {
            for (int v = 0; v < n; ++v) adj[v] = dag.parent_mask(v);
            std::uint64_t closed = detail::reach_closure(adj, Dag::bit(node));
            return detail::mask_to_nodes(closed & ~Dag::bit(node));
        }
        case Relation::Descendants: {
            for (int v = 0; v < n; ++v) adj[v] = dag.child_mask(v);
            return detail::mask_to_nodes(detail::reach_closure(adj, Dag::bit(node)));
        }
    }
    throw std::invalid_argument("relatives: unknown relation kind");
}

/**
 * @brief Whether the node sets a and b are d-separated given s.
 *
 * The three sets must be pairwise disjoint. Uses reachability on the
 * moralized subgraph induced by the ancestral closure of a, b and s.
 */
inline bool d_separated(const Dag& dag, const std::vector<int>& a,
                        const std::vector<int>& b, const std::vector<int>& s) {
    std::uint64_t ma = detail::nodes_to_mask(dag, a);
    std::uint64_t mb = detail::nodes_to_mask(dag, b);
    std::uint64_t ms = detail::nodes_to_mask(dag, s);
    if ((ma & mb) || (ma & ms) || (mb & ms))
        throw std::invalid_argument("d_separated: query sets must be pairwise disjoint");
    int n = dag.num_nodes();
    std::vector<std::uint64_t> parents(n), children(n);
    for (int v = 0; v < n; ++v) {
        parents[v] = dag.parent_mask(v);
        children[v] = dag.child_mask(v);
    }
    return detail::d_separated_masks(parents, children, ma, mb, ms);
}

/**
 * @brief Predictor sets stable under the given intervention targets, plus the
 * targets they were computed for.
 *
 * Sets are listed in canonical order: by size, then lexicographically on the
 * sorted index lists.
 */
struct StableSetCollection {
    std::vector<std::vector<int>> sets;
    std::vector<int> targets;
    int num_nodes = 0;
    int response = 0;
};

namespace detail {

inline bool canonical_mask_less(std::uint32_t a, std::uint32_t b) {
    int ca = std::popcount(a), cb = std::popcount(b);
    if (ca != cb) return ca < cb;
    while (a && b) {
        int la = std::countr_zero(a), lb = std::countr_zero(b);
        if (la != lb) return la < lb;
        a &= a - 1;
        b &= b - 1;
    }
    return false;
}

}  // namespace detail

/**
 * @brief Masks of stable predictor sets, bit k standing for the k-th predictor
 * in ascending node order.
 *
 * A set S is stable when every intervention source node is d-separated from
 * the response given S in the DAG augmented with one source per target.
 * Returned in canonical order. Core routine behind stable_sets().
 */
inline std::vector<std::uint32_t> stable_set_masks(const Dag& dag, const std::vector<int>& targets) {
    int p = dag.num_predictors();
    if (p > 20) throw std::length_error("stable_set_masks: subset enumeration limited to 20 predictors");
    std::uint64_t target_mask = 0;
    for (int t : targets) {
        dag.check_node(t);
        if (t == dag.response()) throw std::invalid_argument("stable_set_masks: response cannot be a target");
        if (target_mask & Dag::bit(t)) throw std::invalid_argument("stable_set_masks: duplicate target");
        target_mask |= Dag::bit(t);
    }

    int n = dag.num_nodes();
    int m = static_cast<int>(targets.size());
    std::vector<std::uint64_t> parents(n + m, 0), children(n + m, 0);
    for (int v = 0; v < n; ++v) {
        parents[v] = dag.parent_mask(v);
        children[v] = dag.child_mask(v);
    }
    std::uint64_t source_mask = 0;
    for (int k = 0; k < m; ++k) {
        int src = n + k;
        children[src] = Dag::bit(targets[k]);
        parents[targets[k]] |= Dag::bit(src);
        source_mask |= Dag::bit(src);
    }

    std::vector<int> predictor_nodes = dag.predictors();
    std::uint64_t response_bit = Dag::bit(dag.response());
    std::vector<std::uint32_t> out;
    for (std::uint32_t set = 0; set < (std::uint32_t{1} << p); ++set) {
        std::uint64_t s_nodes = 0;
        for (std::uint32_t rem = set; rem; rem &= rem - 1)
            s_nodes |= Dag::bit(predictor_nodes[std::countr_zero(rem)]);
        if (detail::d_separated_masks(parents, children, source_mask, response_bit, s_nodes))
            out.push_back(set);
    }
    std::sort(out.begin(), out.end(), detail::canonical_mask_less);
    return out;
}

/// Convert a predictor-position mask into sorted node indices.
inline std::vector<int> mask_to_set(std::uint32_t mask, const std::vector<int>& predictor_nodes) {
    std::vector<int> out;
    for (; mask; mask &= mask - 1) out.push_back(predictor_nodes[std::countr_zero(mask)]);
    return out;
}

/**
 * @brief Enumerate all intervention-stable predictor sets for the given targets.
 *
 * With no targets every subset is trivially stable (2^p sets). Throws
 * std::length_error beyond 20 predictors.
 */
inline StableSetCollection stable_sets(const Dag& dag, const std::vector<int>& targets) {
    std::vector<std::uint32_t> masks = stable_set_masks(dag, targets);
    std::vector<int> predictor_nodes = dag.predictors();
    StableSetCollection coll;
    coll.targets = targets;
    std::sort(coll.targets.begin(), coll.targets.end());
    coll.num_nodes = dag.num_nodes();
    coll.response = dag.response();
    coll.sets.reserve(masks.size());
    for (std::uint32_t mask : masks) coll.sets.push_back(mask_to_set(mask, predictor_nodes));
    return coll;
}

/// Fraction of sets in `sets` containing node i. Helper shared with the policy layer.
inline double membership_ratio(const std::vector<std::vector<int>>& sets, int i) {
    if (sets.empty()) throw std::domain_error("membership_ratio: empty collection has no ratios");
    std::size_t count = 0;
    for (const auto& s : sets)
        count += std::binary_search(s.begin(), s.end(), i) ? 1 : 0;
    return static_cast<double>(count) / static_cast<double>(sets.size());
}

/**
 * @brief Stability ratio of predictor i: the fraction of stable sets containing it.
 */
inline double stability_ratio(const StableSetCollection& coll, int i) {
    if (i < 0 || i >= coll.num_nodes) throw std::out_of_range("stability_ratio: node index out of range");
    if (i == coll.response) throw std::invalid_argument("stability_ratio: response has no stability ratio");
    return membership_ratio(coll.sets, i);
}

inline void to_json(nlohmann::json& j, const Dag& dag) {
    j = nlohmann::json{{"p", dag.num_predictors()}, {"edges", dag.edges()}, {"response", dag.response()}};
}

inline Dag dag_from_json(const nlohmann::json& j) {
    int p = j.at("p").get<int>();
    auto edges = j.at("edges").get<std::vector<std::pair<int, int>>>();
    int response = j.at("response").get<int>();
    return Dag(p + 1, std::move(edges), response);
}

}  // namespace aicp
