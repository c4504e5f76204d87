#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "aicp/scm.hpp"

// Regression and two-sample machinery behind the invariance test, plus the
// cross-validated Lasso used for Markov-blanket screening.

namespace aicp {

/** @brief Least-squares fit with intercept; residuals are per observation. */
struct RegressionFit {
    Eigen::VectorXd coefficients;
    double intercept = 0.0;
    Eigen::VectorXd residuals;
};

/**
 * @brief Ordinary least squares of y on the columns of x, with intercept.
 *
 * Rank-deficient designs resolve to the minimum-norm solution. Requires
 * n >= k + 2 so residual variances stay estimable.
 */
inline RegressionFit ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    Eigen::Index n = x.rows();
    Eigen::Index k = x.cols();
    if (y.size() != n) throw std::invalid_argument("ols_fit: row count mismatch");
    if (n < k + 2) throw std::invalid_argument("ols_fit: sample too small for the design");
    Eigen::MatrixXd design(n, k + 1);
    design.col(0).setOnes();
    design.rightCols(k) = x;
    Eigen::VectorXd theta = design.completeOrthogonalDecomposition().solve(y);
    RegressionFit fit;
    fit.intercept = theta[0];
    fit.coefficients = theta.tail(k);
    fit.residuals = y - design * theta;
    return fit;
}

namespace detail {

struct SampleMoments {
    double n = 0.0;
    double mean = 0.0;
    double variance = 0.0;
};

inline SampleMoments moments_of(const Eigen::VectorXd& v) {
    SampleMoments m;
    m.n = static_cast<double>(v.size());
    m.mean = v.mean();
    m.variance = (v.array() - m.mean).square().sum() / (m.n - 1.0);
    return m;
}

}  // namespace detail

/**
 * @brief Two-sided Welch t-test p-value from sample sizes, means and
 * (unbiased) variances. Degenerate case with both variances zero: 1 when the
 * means coincide, 0 otherwise.
 */
inline double welch_t_test_moments(double na, double mean_a, double var_a, double nb,
                                   double mean_b, double var_b) {
    if (na < 2.0 || nb < 2.0) throw std::invalid_argument("welch_t_test: need two observations per sample");
    double sa = var_a / na;
    double sb = var_b / nb;
    double se2 = sa + sb;
    if (se2 <= 0.0) return mean_a == mean_b ? 1.0 : 0.0;
    double t = (mean_a - mean_b) / std::sqrt(se2);
    double df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    boost::math::students_t_distribution<double> dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

/** @brief Two-sided Welch t-test for a location difference between a and b. */
inline double welch_t_test(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("welch_t_test: need two observations per sample");
    auto ma = detail::moments_of(a);
    auto mb = detail::moments_of(b);
    return welch_t_test_moments(ma.n, ma.mean, ma.variance, mb.n, mb.mean, mb.variance);
}

/**
 * @brief Two-sided variance-ratio F-test p-value from sample sizes and
 * variances: p = min(1, 2 min(CDF_F(f), 1 - CDF_F(f))) with f = var_a/var_b
 * on (na - 1, nb - 1) degrees of freedom. Zero denominators resolve through
 * the reciprocal orientation; two zero variances give 1.
 */
inline double f_test_variance_moments(double na, double var_a, double nb, double var_b) {
    if (na < 2.0 || nb < 2.0) throw std::invalid_argument("f_test_variance: need two observations per sample");
    if (var_a <= 0.0 && var_b <= 0.0) return 1.0;
    if (var_b <= 0.0 || var_a <= 0.0) return 0.0;
    double f = var_a / var_b;
    boost::math::fisher_f_distribution<double> dist(na - 1.0, nb - 1.0);
    double lower = boost::math::cdf(dist, f);
    double upper = boost::math::cdf(boost::math::complement(dist, f));
    return std::min(1.0, 2.0 * std::min(lower, upper));
}

/** @brief Two-sided F-test for equality of variances of a and b. */
inline double f_test_variance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("f_test_variance: need two observations per sample");
    auto ma = detail::moments_of(a);
    auto mb = detail::moments_of(b);
    return f_test_variance_moments(ma.n, ma.variance, mb.n, mb.variance);
}

/** @brief Outcome of one invariance test: the candidate set, the combined
 * p-value, and the raw (t, F) p-value pair per environment. */
struct InvarianceTestResult {
    std::vector<int> set;
    double p_value = 1.0;
    std::vector<std::pair<double, double>> per_environment;
};

/**
 * @brief Invariance tester over a growing list of environments.
 *
 * Holds per-environment Gram matrices of [1, X, y], so each candidate set is
 * tested from second-moment algebra alone: the pooled regression solves the
 * normal equations of the pooled data, and per-environment residual means and
 * variances follow from the same Grams. This matches fitting ols_fit on the
 * pooled rows and splitting its residuals by environment, but costs O(k^3)
 * per candidate instead of O(n k^2).
 *
 * Per environment, its residuals are compared against the residuals of all
 * other environments with a Welch t-test and a two-sided F-test; the combined
 * p-value is min(1, E * min_e 2 min(t_p(e), f_p(e))).
 */
class InvarianceTester {
public:
    InvarianceTester(int num_columns, int response) : d_(num_columns), response_(response) {
        if (num_columns < 2) throw std::invalid_argument("InvarianceTester: need at least two columns");
        if (response < 0 || response >= num_columns)
            throw std::invalid_argument("InvarianceTester: response column out of range");
        pooled_ = Eigen::MatrixXd::Zero(d_ + 1, d_ + 1);
    }

    void add_environment(const Eigen::MatrixXd& data) {
        if (data.cols() != d_) throw std::invalid_argument("InvarianceTester: column count mismatch");
        if (data.rows() < 2) throw std::invalid_argument("InvarianceTester: environment needs two rows");
        Eigen::Index n = data.rows();
        Eigen::MatrixXd z(n, d_ + 1);
        z.col(0).setOnes();
        z.rightCols(d_) = data;
        grams_.push_back(z.transpose() * z);
        sizes_.push_back(static_cast<double>(n));
        pooled_ += grams_.back();
    }

    int num_environments() const { return static_cast<int>(grams_.size()); }
    int num_columns() const { return d_; }
    int response() const { return response_; }

    InvarianceTestResult test(const std::vector<int>& s) const {
        if (grams_.size() < 2) throw std::invalid_argument("InvarianceTester: need at least two environments");
        std::vector<int> sorted = checked_set(s);
        int k = static_cast<int>(sorted.size());
        double n_total = std::accumulate(sizes_.begin(), sizes_.end(), 0.0);
        if (n_total < k + 3) throw std::invalid_argument("InvarianceTester: pooled sample too small");

        std::vector<int> idx(1, 0);
        for (int v : sorted) idx.push_back(1 + v);
        int iy = 1 + response_;

        Eigen::MatrixXd a(k + 1, k + 1);
        Eigen::VectorXd b(k + 1);
        gather(pooled_, idx, iy, a, b);
        Eigen::VectorXd theta = detail::solve_semidefinite(a, b);

        int ne = num_environments();
        std::vector<double> r_sum(ne), r_ss(ne);
        Eigen::MatrixXd ae(k + 1, k + 1);
        Eigen::VectorXd be(k + 1);
        double sum_all = 0.0, ss_all = 0.0;
        for (int e = 0; e < ne; ++e) {
            gather(grams_[e], idx, iy, ae, be);
            double ce = grams_[e](iy, iy);
            r_sum[e] = be[0] - theta.dot(ae.col(0));
            r_ss[e] = std::max(0.0, ce - 2.0 * theta.dot(be) + theta.dot(ae * theta));
            sum_all += r_sum[e];
            ss_all += r_ss[e];
        }

        InvarianceTestResult result;
        result.set = sorted;
        double worst = std::numeric_limits<double>::infinity();
        for (int e = 0; e < ne; ++e) {
            double n1 = sizes_[e];
            double n2 = n_total - n1;
            double mean1 = r_sum[e] / n1;
            double mean2 = (sum_all - r_sum[e]) / n2;
            double var1 = env_variance(r_ss[e], r_sum[e], n1);
            double var2 = env_variance(ss_all - r_ss[e], sum_all - r_sum[e], n2);
            double t_p = welch_t_test_moments(n1, mean1, var1, n2, mean2, var2);
            double f_p = f_test_variance_moments(n1, var1, n2, var2);
            result.per_environment.emplace_back(t_p, f_p);
            worst = std::min(worst, 2.0 * std::min(t_p, f_p));
        }
        result.p_value = std::min(1.0, static_cast<double>(ne) * worst);
        return result;
    }

private:
    std::vector<int> checked_set(const std::vector<int>& s) const {
        std::vector<int> sorted = s;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            if (sorted[i] < 0 || sorted[i] >= d_)
                throw std::out_of_range("InvarianceTester: set index out of range");
            if (sorted[i] == response_)
                throw std::invalid_argument("InvarianceTester: response cannot appear in a candidate set");
            if (i > 0 && sorted[i] == sorted[i - 1])
                throw std::invalid_argument("InvarianceTester: duplicate index in candidate set");
        }
        return sorted;
    }

    static void gather(const Eigen::MatrixXd& gram, const std::vector<int>& idx, int iy,
                       Eigen::MatrixXd& a, Eigen::VectorXd& b) {
        int m = static_cast<int>(idx.size());
        for (int r = 0; r < m; ++r) {
            b[r] = gram(idx[r], iy);
            for (int c = 0; c < m; ++c) a(r, c) = gram(idx[r], idx[c]);
        }
    }

    static double env_variance(double ss, double sum, double n) {
        return std::max(0.0, (ss - sum * sum / n) / (n - 1.0));
    }

    int d_;
    int response_;
    std::vector<Eigen::MatrixXd> grams_;
    std::vector<double> sizes_;
    Eigen::MatrixXd pooled_;
};

/**
 * @brief Test whether the conditional distribution of the response given X_s
 * is identical across the given environments.
 */
inline InvarianceTestResult test_invariance(const EnvironmentSet& envs, const std::vector<int>& s) {
    if (envs.environments.size() < 2)
        throw std::invalid_argument("test_invariance: need at least two environments");
    int d = static_cast<int>(envs.environments.front().data.cols());
    InvarianceTester tester(d, envs.response);
    for (const auto& env : envs.environments) tester.add_environment(env.data);
    return tester.test(s);
}

namespace detail {

/// One coordinate-descent Lasso solve on pre-standardized columns; beta is the
/// warm start and receives the solution.
inline void lasso_coordinate_descent(const Eigen::MatrixXd& xs, const std::vector<char>& active,
                                     const Eigen::VectorXd& yc, double lambda, Eigen::VectorXd& beta,
                                     Eigen::VectorXd& resid) {
    Eigen::Index n = xs.rows();
    Eigen::Index p = xs.cols();
    double inv_n = 1.0 / static_cast<double>(n);
    for (int sweep = 0; sweep < 1000; ++sweep) {
        double max_delta = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (!active[j]) continue;
            double rho = inv_n * xs.col(j).dot(resid) + beta[j];
            double updated = std::copysign(std::max(std::abs(rho) - lambda, 0.0), rho);
            double delta = updated - beta[j];
            if (delta != 0.0) {
                resid -= delta * xs.col(j);
                beta[j] = updated;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        if (max_delta < 1e-6) break;
    }
}

struct StandardizedDesign {
    Eigen::MatrixXd xs;
    std::vector<char> active;
    Eigen::VectorXd col_mean;
    Eigen::VectorXd col_sd;
    double y_mean = 0.0;
};

inline StandardizedDesign standardize(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    StandardizedDesign d;
    Eigen::Index n = x.rows();
    Eigen::Index p = x.cols();
    d.xs.resize(n, p);
    d.active.assign(p, 1);
    d.col_mean.resize(p);
    d.col_sd.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        double mu = x.col(j).mean();
        double sd = std::sqrt((x.col(j).array() - mu).square().sum() / static_cast<double>(n));
        d.col_mean[j] = mu;
        if (sd <= 0.0) {
            d.active[j] = 0;
            d.col_sd[j] = 1.0;
            d.xs.col(j).setZero();
        } else {
            d.col_sd[j] = sd;
            d.xs.col(j) = (x.col(j).array() - mu) / sd;
        }
    }
    d.y_mean = y.mean();
    return d;
}

}  // namespace detail

/**
 * @brief Markov-blanket estimate: support of a Lasso regression of y on the
 * columns of x, with the penalty chosen by k-fold cross-validation.
 *
 * The penalty grid has 50 log-spaced points from lambda_max (the smallest
 * penalty with an all-zero solution) down to 1e-3 lambda_max; ties in the CV
 * error break toward the larger penalty. Fold assignment is a deterministic
 * function of the seed. Returned indices are column positions with fitted
 * coefficient magnitude above 1e-8 in original units. A constant response
 * yields the empty set.
 */
inline std::vector<int> lasso_markov_blanket(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                             int folds = 10, std::uint64_t seed = 0) {
    Eigen::Index n = x.rows();
    Eigen::Index p = x.cols();
    if (y.size() != n) throw std::invalid_argument("lasso_markov_blanket: row count mismatch");
    if (n < 3) throw std::invalid_argument("lasso_markov_blanket: sample too small");
    if (folds < 2 || folds > n) throw std::invalid_argument("lasso_markov_blanket: bad fold count");
    if (p == 0) return {};

    double y_var = (y.array() - y.mean()).square().sum();
    if (y_var <= 0.0) return {};

    detail::StandardizedDesign full = detail::standardize(x, y);
    Eigen::VectorXd yc = y.array() - full.y_mean;
    double lambda_max = 0.0;
    for (Eigen::Index j = 0; j < p; ++j)
        if (full.active[j])
            lambda_max = std::max(lambda_max, std::abs(full.xs.col(j).dot(yc)) / static_cast<double>(n));
    if (lambda_max <= 0.0) return {};

    constexpr int kGridSize = 50;
    std::vector<double> grid(kGridSize);
    for (int i = 0; i < kGridSize; ++i)
        grid[i] = lambda_max * std::pow(1e-3, static_cast<double>(i) / (kGridSize - 1));

    std::vector<int> assignment(n);
    {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index i = 0; i < n; ++i) assignment[order[i]] = static_cast<int>(i) % folds;
    }

    std::vector<double> cv_mse(kGridSize, 0.0);
    for (int fold = 0; fold < folds; ++fold) {
        std::vector<int> train, val;
        for (Eigen::Index i = 0; i < n; ++i)
            (assignment[i] == fold ? val : train).push_back(static_cast<int>(i));
        Eigen::MatrixXd x_train(train.size(), p), x_val(val.size(), p);
        Eigen::VectorXd y_train(train.size()), y_val(val.size());
        for (std::size_t i = 0; i < train.size(); ++i) {
            x_train.row(i) = x.row(train[i]);
            y_train[i] = y[train[i]];
        }
        for (std::size_t i = 0; i < val.size(); ++i) {
            x_val.row(i) = x.row(val[i]);
            y_val[i] = y[val[i]];
        }

        detail::StandardizedDesign d = detail::standardize(x_train, y_train);
        Eigen::VectorXd yct = y_train.array() - d.y_mean;
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
        Eigen::VectorXd resid = yct;
        for (int gi = 0; gi < kGridSize; ++gi) {
            detail::lasso_coordinate_descent(d.xs, d.active, yct, grid[gi], beta, resid);
            Eigen::VectorXd pred = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(val.size()), d.y_mean);
            for (Eigen::Index j = 0; j < p; ++j) {
                if (beta[j] == 0.0) continue;
                double orig = beta[j] / d.col_sd[j];
                pred += orig * (x_val.col(j).array() - d.col_mean[j]).matrix();
            }
            cv_mse[gi] += (y_val - pred).squaredNorm() / static_cast<double>(val.size());
        }
    }

    int best = 0;
    for (int gi = 1; gi < kGridSize; ++gi)
        if (cv_mse[gi] < cv_mse[best]) best = gi;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd resid = yc;
    for (int gi = 0; gi <= best; ++gi)
        detail::lasso_coordinate_descent(full.xs, full.active, yc, grid[gi], beta, resid);

    std::vector<int> support;
    for (Eigen::Index j = 0; j < p; ++j)
        if (std::abs(beta[j] / full.col_sd[j]) > 1e-8) support.push_back(static_cast<int>(j));
    return support;
}

}  // namespace aicp
