#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aicp/stats.hpp"

// Invariant causal prediction over a fixed environment set: test candidate
// predictor sets for conditional invariance and intersect the survivors.

namespace aicp {

/// Canonical set order: by size, then lexicographically on sorted indices.
inline bool canonical_set_less(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

/// Comma-joined canonical key, e.g. "0,3"; the empty set maps to "".
inline std::string set_key(const std::vector<int>& s) {
    std::string key;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) key += ',';
        key += std::to_string(s[i]);
    }
    return key;
}

/** @brief Result of one invariance-and-intersect pass. */
struct IcpState {
    std::vector<std::vector<int>> accepted;
    std::vector<int> estimate;
    bool all_rejected = false;
    double alpha = 0.0;
    std::map<std::string, double> p_values;
};

namespace detail {

inline std::vector<std::vector<int>> canonical_candidates(const std::vector<std::vector<int>>& raw) {
    std::vector<std::vector<int>> out;
    out.reserve(raw.size());
    for (const auto& s : raw) {
        std::vector<int> sorted = s;
        std::sort(sorted.begin(), sorted.end());
        out.push_back(std::move(sorted));
    }
    std::sort(out.begin(), out.end(), canonical_set_less);
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline std::vector<std::vector<int>> all_subsets(int num_columns, int response) {
    std::vector<int> predictors;
    for (int v = 0; v < num_columns; ++v)
        if (v != response) predictors.push_back(v);
    int p = static_cast<int>(predictors.size());
    if (p > 20) throw std::length_error("run_icp: full subset enumeration limited to 20 predictors");
    std::vector<std::uint32_t> masks(std::size_t{1} << p);
    for (std::uint32_t m = 0; m < masks.size(); ++m) masks[m] = m;
    std::sort(masks.begin(), masks.end(), canonical_mask_less);
    std::vector<std::vector<int>> out;
    out.reserve(masks.size());
    for (std::uint32_t m : masks) out.push_back(mask_to_set(m, predictors));
    return out;
}

}  // namespace detail

/**
 * @brief Run ICP against a prepared tester. Absent candidates mean every
 * subset of the predictor columns. The estimate is the intersection of all
 * accepted sets; when nothing is accepted it is empty and all_rejected is set.
 */
inline IcpState run_icp(const InvarianceTester& tester,
                        const std::optional<std::vector<std::vector<int>>>& candidates, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("run_icp: alpha must lie in (0, 1)");
    std::vector<std::vector<int>> sets = candidates
        ? detail::canonical_candidates(*candidates)
        : detail::all_subsets(tester.num_columns(), tester.response());

    IcpState state;
    state.alpha = alpha;
    for (const auto& s : sets) {
        InvarianceTestResult r = tester.test(s);
        state.p_values[set_key(r.set)] = r.p_value;
        if (r.p_value > alpha) state.accepted.push_back(r.set);
    }
    if (state.accepted.empty()) {
        state.all_rejected = true;
        return state;
    }
    std::vector<int> estimate = state.accepted.front();
    for (const auto& s : state.accepted) {
        std::vector<int> next;
        std::set_intersection(estimate.begin(), estimate.end(), s.begin(), s.end(),
                              std::back_inserter(next));
        estimate.swap(next);
    }
    state.estimate = std::move(estimate);
    return state;
}

/** @brief Run ICP on raw environments (builds the tester in place). */
inline IcpState run_icp(const EnvironmentSet& envs,
                        const std::optional<std::vector<std::vector<int>>>& candidates, double alpha) {
    if (envs.environments.size() < 2)
        throw std::invalid_argument("run_icp: need at least two environments");
    InvarianceTester tester(static_cast<int>(envs.environments.front().data.cols()), envs.response);
    for (const auto& env : envs.environments) tester.add_environment(env.data);
    return run_icp(tester, candidates, alpha);
}

inline void to_json(nlohmann::json& j, const IcpState& state) {
    j = nlohmann::json{{"accepted", state.accepted},
                       {"estimate", state.estimate},
                       {"all_rejected", state.all_rejected},
                       {"alpha", state.alpha},
                       {"p_values", state.p_values}};
}

}  // namespace aicp
