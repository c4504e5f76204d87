#pragma once

#include <aicp/aicp.hpp>

// Hand-checkable fixture models shared across the test suites.

namespace aicp_test {

/// Response (node 2) with parents 0 and 1, a child 3, and 4 a co-parent of
/// that child. Under interventions on {0, 4} exactly six sets are stable.
inline aicp::Dag child_coparent_dag() {
    return aicp::Dag(5, {{0, 2}, {1, 2}, {2, 3}, {4, 3}}, 2);
}

/// Response (node 4) with parents 0, 1 and 3, where 3 is reached from 0 and 1
/// only through the mediator 2. Under an intervention on 2 the stable sets
/// are {0,1,2}, {0,1,3} and {0,1,2,3}, whose intersection misses parent 3.
inline aicp::Dag mediated_parent_dag() {
    return aicp::Dag(5, {{0, 2}, {0, 4}, {1, 2}, {1, 4}, {2, 3}, {3, 4}}, 4);
}

/// Unit weight on every edge, zero intercepts and noise means, unit variances.
inline aicp::LinearScm unit_scm(const aicp::Dag& dag) {
    int n = dag.num_nodes();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (auto [from, to] : dag.edges()) w(from, to) = 1.0;
    return aicp::LinearScm(dag, w, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                           Eigen::VectorXd::Ones(n));
}

/// Three nodes with response 1: edges 0->1, 0->2, 1->2 and adjustable weights
/// and noise scales. The response is a parent of node 2, so conditioning on 2
/// mixes in information about both of its parents.
inline aicp::LinearScm triangle_scm(double w01, double w02, double w12, double var0 = 1.0,
                                    double var1 = 1.0, double var2 = 1.0) {
    aicp::Dag dag(3, {{0, 1}, {0, 2}, {1, 2}}, 1);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
    w(0, 1) = w01;
    w(0, 2) = w02;
    w(1, 2) = w12;
    Eigen::VectorXd vars(3);
    vars << var0, var1, var2;
    return aicp::LinearScm(dag, w, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3), vars);
}

}  // namespace aicp_test
