#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "aicp/graph.hpp"

// Linear structural causal models with Gaussian noise: interventions, sampling,
// exact population moments, Gaussian conditioning, and random model generation.

namespace aicp {

enum class InterventionKind { Do, Shift, Noise };

/**
 * @brief Single-variable intervention. `mean` and `variance` parameterize the
 * intervened mechanism; their meaning depends on the kind.
 *
 * Do:    clamp the target to N(mean, variance), cutting all incoming edges.
 * Shift: add N(mean, variance) on top of the target's existing noise.
 * Noise: replace the target's noise distribution by N(mean, variance).
 */
struct Intervention {
    int target = 0;
    InterventionKind kind = InterventionKind::Shift;
    double mean = 0.0;
    double variance = 0.0;
};

/**
 * @brief Linear SCM over the nodes of a DAG.
 *
 * weights(i, j) is the coefficient of node i in node j's assignment and is
 * nonzero exactly on the DAG's edges. Each node j is assigned
 * X_j = intercepts[j] + sum_i weights(i, j) X_i + eps_j with
 * eps_j ~ N(noise_means[j], noise_variances[j]).
 */
class LinearScm {
public:
    LinearScm(Dag dag, Eigen::MatrixXd weights, Eigen::VectorXd intercepts,
              Eigen::VectorXd noise_means, Eigen::VectorXd noise_variances)
        : dag_(std::move(dag)), weights_(std::move(weights)), intercepts_(std::move(intercepts)),
          noise_means_(std::move(noise_means)), noise_variances_(std::move(noise_variances)) {
        int n = dag_.num_nodes();
        if (weights_.rows() != n || weights_.cols() != n)
            throw std::invalid_argument("LinearScm: weight matrix shape mismatch");
        if (intercepts_.size() != n || noise_means_.size() != n || noise_variances_.size() != n)
            throw std::invalid_argument("LinearScm: parameter vector length mismatch");
        for (int i = 0; i < n; ++i) {
            if (noise_variances_[i] < 0.0)
                throw std::invalid_argument("LinearScm: negative noise variance");
            for (int j = 0; j < n; ++j) {
                bool edge = dag_.has_edge(i, j);
                if (edge && weights_(i, j) == 0.0)
                    throw std::invalid_argument("LinearScm: zero weight on an edge");
                if (!edge && weights_(i, j) != 0.0)
                    throw std::invalid_argument("LinearScm: nonzero weight off the edge set");
            }
        }
    }

    const Dag& dag() const { return dag_; }
    const Eigen::MatrixXd& weights() const { return weights_; }
    const Eigen::VectorXd& intercepts() const { return intercepts_; }
    const Eigen::VectorXd& noise_means() const { return noise_means_; }
    const Eigen::VectorXd& noise_variances() const { return noise_variances_; }
    int num_nodes() const { return dag_.num_nodes(); }
    int response() const { return dag_.response(); }

private:
    Dag dag_;
    Eigen::MatrixXd weights_;
    Eigen::VectorXd intercepts_;
    Eigen::VectorXd noise_means_;
    Eigen::VectorXd noise_variances_;
};

/**
 * @brief Return a copy of the SCM with one mechanism changed.
 *
 * Do interventions cut the target's incoming edges (the returned model's DAG
 * reflects that). The response itself cannot be intervened on.
 */
inline LinearScm apply_intervention(const LinearScm& scm, const Intervention& iv) {
    scm.dag().check_node(iv.target);
    if (iv.target == scm.response())
        throw std::invalid_argument("apply_intervention: response cannot be intervened on");
    if (iv.variance < 0.0)
        throw std::invalid_argument("apply_intervention: negative intervention variance");

    Eigen::MatrixXd w = scm.weights();
    Eigen::VectorXd intercepts = scm.intercepts();
    Eigen::VectorXd means = scm.noise_means();
    Eigen::VectorXd variances = scm.noise_variances();

    switch (iv.kind) {
        case InterventionKind::Do: {
            w.col(iv.target).setZero();
            intercepts[iv.target] = iv.mean;
            means[iv.target] = 0.0;
            variances[iv.target] = iv.variance;
            std::vector<std::pair<int, int>> edges;
            for (auto [from, to] : scm.dag().edges())
                if (to != iv.target) edges.emplace_back(from, to);
            Dag cut(scm.num_nodes(), std::move(edges), scm.response());
            return LinearScm(std::move(cut), std::move(w), std::move(intercepts),
                             std::move(means), std::move(variances));
        }
        case InterventionKind::Shift:
            means[iv.target] += iv.mean;
            variances[iv.target] += iv.variance;
            break;
        case InterventionKind::Noise:
            means[iv.target] = iv.mean;
            variances[iv.target] = iv.variance;
            break;
    }
    return LinearScm(scm.dag(), std::move(w), std::move(intercepts), std::move(means),
                     std::move(variances));
}

/**
 * @brief Draw n i.i.d. joint samples, one node per column.
 *
 * Noise is generated node-by-node in index order from a single mt19937_64
 * stream, so a fixed seed reproduces the sample exactly. Values propagate in
 * topological order.
 */
inline Eigen::MatrixXd sample(const LinearScm& scm, int n, std::uint64_t seed) {
    if (n <= 0) throw std::invalid_argument("sample: sample size must be positive");
    int d = scm.num_nodes();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> standard_normal(0.0, 1.0);

    Eigen::MatrixXd eps(n, d);
    for (int v = 0; v < d; ++v) {
        double sd = std::sqrt(scm.noise_variances()[v]);
        double mu = scm.noise_means()[v];
        for (int r = 0; r < n; ++r) eps(r, v) = mu + sd * standard_normal(rng);
    }

    // Kahn order over the DAG; cycles are excluded at construction.
    const Dag& g = scm.dag();
    std::vector<int> order;
    order.reserve(d);
    std::vector<int> indegree(d);
    for (int v = 0; v < d; ++v) indegree[v] = static_cast<int>(relatives(g, v, Relation::Parents).size());
    std::vector<int> frontier;
    for (int v = 0; v < d; ++v)
        if (indegree[v] == 0) frontier.push_back(v);
    while (!frontier.empty()) {
        int v = frontier.back();
        frontier.pop_back();
        order.push_back(v);
        for (int c : relatives(g, v, Relation::Children))
            if (--indegree[c] == 0) frontier.push_back(c);
    }

    Eigen::MatrixXd x(n, d);
    for (int v : order) {
        x.col(v) = eps.col(v).array() + scm.intercepts()[v];
        for (int par : relatives(g, v, Relation::Parents))
            x.col(v) += scm.weights()(par, v) * x.col(par);
    }
    return x;
}

/** @brief Multivariate Gaussian given by mean vector and covariance matrix. */
struct GaussianDist {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

namespace detail {

inline void check_gaussian(const GaussianDist& g) {
    if (g.covariance.rows() != g.covariance.cols() || g.covariance.rows() != g.mean.size())
        throw std::invalid_argument("GaussianDist: shape mismatch");
    double asym = (g.covariance - g.covariance.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-9) throw std::invalid_argument("GaussianDist: covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.covariance, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-9)
        throw std::invalid_argument("GaussianDist: covariance not positive semidefinite");
}

/// Minimum-norm solution of the (possibly singular) symmetric system A x = b.
inline Eigen::MatrixXd solve_semidefinite(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() == Eigen::Success) {
        Eigen::MatrixXd x = ldlt.solve(b);
        double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
        if ((a * x - b).cwiseAbs().maxCoeff() <= 1e-8 * scale) return x;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const Eigen::VectorXd& ev = es.eigenvalues();
    double tol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    Eigen::VectorXd inv = (ev.array().abs() > tol).select(ev.array().inverse(), 0.0);
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose() * b;
}

}  // namespace detail

/**
 * @brief Exact joint distribution of all nodes.
 *
 * With W the weight matrix and M = I - W^T, the mean solves
 * M mu = intercepts + noise_means and the covariance is
 * M^{-1} diag(noise_variances) M^{-T}, computed via LU solves.
 */
inline GaussianDist population_distribution(const LinearScm& scm) {
    int d = scm.num_nodes();
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(d, d) - scm.weights().transpose();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    GaussianDist g;
    g.mean = lu.solve(scm.intercepts() + scm.noise_means());
    Eigen::MatrixXd half = lu.solve(Eigen::MatrixXd(scm.noise_variances().cwiseSqrt().asDiagonal()));
    g.covariance = half * half.transpose();
    return g;
}

/** @brief Marginal of the given coordinates, in the order listed. */
inline GaussianDist marginal(const GaussianDist& g, const std::vector<int>& indices) {
    detail::check_gaussian(g);
    int d = static_cast<int>(g.mean.size());
    GaussianDist out;
    int k = static_cast<int>(indices.size());
    out.mean.resize(k);
    out.covariance.resize(k, k);
    for (int a = 0; a < k; ++a) {
        if (indices[a] < 0 || indices[a] >= d) throw std::out_of_range("marginal: index out of range");
        out.mean[a] = g.mean[indices[a]];
        for (int b = 0; b < k; ++b) out.covariance(a, b) = g.covariance(indices[a], indices[b]);
    }
    return out;
}

/**
 * @brief Condition on X_given = values; returns the distribution of the
 * remaining coordinates in ascending original order.
 *
 * A singular conditioning block gets one ridge retry (1e-10 on the diagonal)
 * before a numeric failure is reported.
 */
inline GaussianDist gaussian_condition(const GaussianDist& g, const std::vector<int>& given,
                                       const Eigen::VectorXd& values) {
    detail::check_gaussian(g);
    if (static_cast<int>(given.size()) != values.size())
        throw std::invalid_argument("gaussian_condition: values length mismatch");
    if (given.empty()) return g;

    int d = static_cast<int>(g.mean.size());
    std::vector<char> is_given(d, 0);
    for (int idx : given) {
        if (idx < 0 || idx >= d) throw std::out_of_range("gaussian_condition: index out of range");
        if (is_given[idx]) throw std::invalid_argument("gaussian_condition: duplicate index");
        is_given[idx] = 1;
    }
    std::vector<int> rest;
    for (int v = 0; v < d; ++v)
        if (!is_given[v]) rest.push_back(v);

    int ka = static_cast<int>(rest.size());
    int kb = static_cast<int>(given.size());
    Eigen::MatrixXd bb(kb, kb), ab(ka, kb);
    Eigen::VectorXd mu_b(kb), mu_a(ka);
    for (int i = 0; i < kb; ++i) {
        mu_b[i] = g.mean[given[i]];
        for (int j = 0; j < kb; ++j) bb(i, j) = g.covariance(given[i], given[j]);
    }
    Eigen::MatrixXd aa(ka, ka);
    for (int i = 0; i < ka; ++i) {
        mu_a[i] = g.mean[rest[i]];
        for (int j = 0; j < kb; ++j) ab(i, j) = g.covariance(rest[i], given[j]);
        for (int j = 0; j < ka; ++j) aa(i, j) = g.covariance(rest[i], rest[j]);
    }

    auto try_solve = [&](const Eigen::MatrixXd& block, bool& ok) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(block);
        Eigen::MatrixXd rhs(kb, ka + 1);
        rhs.leftCols(ka) = ab.transpose();
        rhs.col(ka) = values - mu_b;
        Eigen::MatrixXd sol = ldlt.solve(rhs);
        double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
        ok = ldlt.info() == Eigen::Success &&
             (block * sol - rhs).cwiseAbs().maxCoeff() <= 1e-6 * scale;
        return sol;
    };

    bool ok = false;
    Eigen::MatrixXd sol = try_solve(bb, ok);
    if (!ok) {
        Eigen::MatrixXd ridged = bb + 1e-10 * Eigen::MatrixXd::Identity(kb, kb);
        sol = try_solve(ridged, ok);
        if (!ok) throw std::runtime_error("gaussian_condition: conditioning block is singular");
    }

    GaussianDist out;
    out.mean = mu_a + ab * sol.col(ka);
    out.covariance = aa - ab * sol.leftCols(ka);
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
    return out;
}

/** @brief Population least-squares fit of one coordinate on a set of others. */
struct PopulationOls {
    Eigen::VectorXd coefficients;
    double intercept = 0.0;
    double residual_variance = 0.0;
};

/**
 * @brief Exact linear regression of `response` on `regressors` under g.
 *
 * Solves Sigma_SS beta = Sigma_SY; a singular regressor block falls back to
 * the minimum-norm (pseudoinverse) solution.
 */
inline PopulationOls population_ols(const GaussianDist& g, int response,
                                    const std::vector<int>& regressors) {
    detail::check_gaussian(g);
    int d = static_cast<int>(g.mean.size());
    if (response < 0 || response >= d) throw std::out_of_range("population_ols: response out of range");
    std::vector<char> seen(d, 0);
    for (int idx : regressors) {
        if (idx < 0 || idx >= d) throw std::out_of_range("population_ols: regressor out of range");
        if (idx == response) throw std::invalid_argument("population_ols: response among regressors");
        if (seen[idx]) throw std::invalid_argument("population_ols: duplicate regressor");
        seen[idx] = 1;
    }

    int k = static_cast<int>(regressors.size());
    PopulationOls fit;
    if (k == 0) {
        fit.coefficients.resize(0);
        fit.intercept = g.mean[response];
        fit.residual_variance = g.covariance(response, response);
        return fit;
    }
    Eigen::MatrixXd ss(k, k);
    Eigen::VectorXd sy(k), mu_s(k);
    for (int i = 0; i < k; ++i) {
        mu_s[i] = g.mean[regressors[i]];
        sy[i] = g.covariance(regressors[i], response);
        for (int j = 0; j < k; ++j) ss(i, j) = g.covariance(regressors[i], regressors[j]);
    }
    fit.coefficients = detail::solve_semidefinite(ss, sy);
    fit.intercept = g.mean[response] - fit.coefficients.dot(mu_s);
    double rv = g.covariance(response, response) - 2.0 * fit.coefficients.dot(sy) +
                fit.coefficients.dot(ss * fit.coefficients);
    fit.residual_variance = std::max(rv, 0.0);
    return fit;
}

/**
 * @brief Markov blanket of the response read off the population regression on
 * all predictors: indices whose coefficient magnitude exceeds 1e-9.
 */
inline std::vector<int> population_markov_blanket(const LinearScm& scm) {
    GaussianDist g = population_distribution(scm);
    std::vector<int> predictors = scm.dag().predictors();
    PopulationOls fit = population_ols(g, scm.response(), predictors);
    std::vector<int> blanket;
    for (int i = 0; i < static_cast<int>(predictors.size()); ++i)
        if (std::abs(fit.coefficients[i]) > 1e-9) blanket.push_back(predictors[i]);
    return blanket;
}

/** @brief One sampled environment: a data matrix (nodes as columns) and the
 * intervention that produced it, absent for observational data. */
struct Environment {
    Eigen::MatrixXd data;
    std::optional<Intervention> intervention;
};

/** @brief Ordered, append-only list of environments sharing one column layout. */
struct EnvironmentSet {
    int response = 0;
    std::vector<Environment> environments;
};

/// Write a data matrix as CSV with predictor columns first (ascending node
/// order, relabeled X0..X{p-1}) and the response last.
inline void write_environment_csv(std::ostream& os, const Eigen::MatrixXd& data, int response) {
    int d = static_cast<int>(data.cols());
    if (response < 0 || response >= d) throw std::out_of_range("write_environment_csv: response out of range");
    std::vector<int> cols;
    for (int v = 0; v < d; ++v)
        if (v != response) cols.push_back(v);
    for (int i = 0; i < d - 1; ++i) os << "X" << i << ",";
    os << "Y\n";
    os.precision(17);
    for (Eigen::Index r = 0; r < data.rows(); ++r) {
        for (int c : cols) os << data(r, c) << ",";
        os << data(r, response) << "\n";
    }
}

enum class ResponseRule { ParentedUniform, Uniform };

/**
 * @brief Parameters of the random model generator. `p` counts all nodes,
 * response included; an unordered node pair receives an edge with probability
 * avg_degree / (p - 1).
 */
struct RandomScmOptions {
    int p = 10;
    double avg_degree = 3.0;
    std::pair<double, double> weight_range{0.5, 1.0};
    std::pair<double, double> intercept_range{0.0, 1.0};
    std::pair<double, double> variance_range{0.0, 1.0};
    ResponseRule response_rule = ResponseRule::ParentedUniform;
    bool flip_weight_signs = false;
};

/**
 * @brief Draw a random linear SCM.
 *
 * Edges follow an Erdos-Renyi draw on unordered pairs, oriented along a
 * uniformly random topological permutation. Weight magnitudes, intercepts and
 * noise variances are uniform on their ranges; noise means are zero, so the
 * intercept carries each node's entire location term. The default response
 * rule picks uniformly among nodes with at least one parent, falling back to
 * all nodes. A fixed seed reproduces the model exactly.
 */
inline LinearScm random_scm(const RandomScmOptions& opt, std::uint64_t seed) {
    if (opt.p < 2) throw std::invalid_argument("random_scm: need at least two nodes");
    if (opt.avg_degree < 0.0) throw std::invalid_argument("random_scm: negative average degree");
    if (opt.weight_range.first <= 0.0 || opt.weight_range.first > opt.weight_range.second)
        throw std::invalid_argument("random_scm: weight magnitude range must be positive");
    if (opt.intercept_range.first > opt.intercept_range.second ||
        opt.variance_range.first > opt.variance_range.second || opt.variance_range.first < 0.0)
        throw std::invalid_argument("random_scm: bad parameter range");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int p = opt.p;
    double edge_prob = std::min(1.0, opt.avg_degree / static_cast<double>(p - 1));

    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j)
            if (unit(rng) < edge_prob) pairs.emplace_back(i, j);

    std::vector<int> position(p);
    for (int i = 0; i < p; ++i) position[i] = i;
    std::shuffle(position.begin(), position.end(), rng);
    std::vector<int> rank(p);
    for (int i = 0; i < p; ++i) rank[position[i]] = i;

    std::vector<std::pair<int, int>> edges;
    edges.reserve(pairs.size());
    for (auto [i, j] : pairs)
        edges.emplace_back(rank[i] < rank[j] ? std::make_pair(i, j) : std::make_pair(j, i));
    std::sort(edges.begin(), edges.end());

    Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(p, p);
    std::uniform_real_distribution<double> wdist(opt.weight_range.first, opt.weight_range.second);
    for (auto [from, to] : edges) {
        double w = wdist(rng);
        if (opt.flip_weight_signs && unit(rng) < 0.5) w = -w;
        weights(from, to) = w;
    }

    std::uniform_real_distribution<double> idist(opt.intercept_range.first, opt.intercept_range.second);
    std::uniform_real_distribution<double> vdist(opt.variance_range.first, opt.variance_range.second);
    Eigen::VectorXd intercepts(p), means = Eigen::VectorXd::Zero(p), variances(p);
    for (int v = 0; v < p; ++v) intercepts[v] = idist(rng);
    for (int v = 0; v < p; ++v) variances[v] = vdist(rng);

    std::vector<int> candidates;
    if (opt.response_rule == ResponseRule::ParentedUniform) {
        std::vector<char> parented(p, 0);
        for (auto [from, to] : edges) parented[to] = 1;
        for (int v = 0; v < p; ++v)
            if (parented[v]) candidates.push_back(v);
    }
    if (candidates.empty())
        for (int v = 0; v < p; ++v) candidates.push_back(v);
    std::uniform_int_distribution<int> rdist(0, static_cast<int>(candidates.size()) - 1);
    int response = candidates[rdist(rng)];

    return LinearScm(Dag(p, std::move(edges), response), std::move(weights), std::move(intercepts),
                     std::move(means), std::move(variances));
}

inline void to_json(nlohmann::json& j, const LinearScm& scm) {
    int d = scm.num_nodes();
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(d) * d);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) flat.push_back(scm.weights()(r, c));
    j = nlohmann::json{
        {"p", d - 1},
        {"edges", scm.dag().edges()},
        {"response", scm.response()},
        {"weights", flat},
        {"intercepts", std::vector<double>(scm.intercepts().begin(), scm.intercepts().end())},
        {"noise_means", std::vector<double>(scm.noise_means().begin(), scm.noise_means().end())},
        {"noise_variances",
         std::vector<double>(scm.noise_variances().begin(), scm.noise_variances().end())}};
}

inline LinearScm scm_from_json(const nlohmann::json& j) {
    Dag dag = dag_from_json(j);
    int d = dag.num_nodes();
    auto flat = j.at("weights").get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != d * d)
        throw std::invalid_argument("scm_from_json: weight matrix length mismatch");
    Eigen::MatrixXd weights(d, d);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) weights(r, c) = flat[static_cast<std::size_t>(r) * d + c];
    auto vec = [&](const char* key) {
        auto v = j.at(key).get<std::vector<double>>();
        if (static_cast<int>(v.size()) != d)
            throw std::invalid_argument("scm_from_json: parameter vector length mismatch");
        return Eigen::Map<const Eigen::VectorXd>(v.data(), d).eval();
    };
    return LinearScm(std::move(dag), std::move(weights), vec("intercepts"), vec("noise_means"),
                     vec("noise_variances"));
}

}  // namespace aicp
