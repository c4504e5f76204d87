#include <iostream>
#include <string>
#include <vector>

#include <aicp/aicp.hpp>

// Runs the active invariance loop on one random model, first in the
// population limit and then on sampled data, and prints the per-round
// estimates produced by a few policies.

namespace {

std::string set_to_string(const std::vector<int>& s) {
    std::string out = "{";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "}";
}

void print_trace(const aicp::AicpTrace& trace) {
    std::cout << "  policy " << trace.policy << "\n";
    for (const auto& round : trace.rounds) {
        std::cout << "    round " << round.t << ": intervene on " << round.target << ", "
                  << round.accepted_count << " accepted sets, estimate "
                  << set_to_string(round.estimate);
        if (round.empty_set_p) std::cout << ", empty-set p " << *round.empty_set_p;
        std::cout << "\n";
    }
    std::cout << "    final " << set_to_string(trace.final_estimate) << " (true parents "
              << set_to_string(trace.true_parents) << ")\n";
}

}  // namespace

int main() {
    aicp::RandomScmOptions opt;
    opt.p = 8;
    opt.avg_degree = 2.5;
    aicp::LinearScm scm = aicp::random_scm(opt, 17);
    std::cout << "random model on " << scm.num_nodes() << " nodes, response " << scm.response()
              << ", parents "
              << set_to_string(aicp::relatives(scm.dag(), scm.response(), aicp::Relation::Parents))
              << "\n\n";

    std::cout << "population limit (exact stable sets):\n";
    aicp::StableSetCache cache(scm.dag());
    for (const char* name : {"random", "markov+r"})
        print_trace(aicp::run_aicp_population(scm, aicp::policy_from_name(name), 5, &cache));

    std::cout << "\nsampled environments (n = 800 per round, shift interventions):\n";
    aicp::AicpOptions run_opt;
    run_opt.T = 6;
    run_opt.alpha = 0.05;
    run_opt.n_obs = 800;
    run_opt.n_e = 800;
    for (const char* name : {"markov+e+r"})
        print_trace(aicp::run_aicp(scm, aicp::policy_from_name(name), run_opt, 5));

    return 0;
}
