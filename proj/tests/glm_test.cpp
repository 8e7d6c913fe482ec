#include "tenreg/glm.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace tenreg;
using namespace tenreg::testing;

namespace {

constexpr GlmFamily kFamilies[] = {GlmFamily::gaussian, GlmFamily::binomial, GlmFamily::poisson};

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

// Responses drawn from the family at linear predictor X beta.
DesignProblem random_problem(GlmFamily family, Eigen::Index n, Eigen::Index p, std::mt19937_64& rng,
                             double scale = 0.4) {
    DesignProblem prob;
    prob.family = family;
    prob.x = random_matrix(n, p, rng);
    const Eigen::VectorXd beta = scale * random_matrix(p, 1, rng);
    const Eigen::VectorXd eta = prob.x * beta;
    prob.y.resize(n);
    std::normal_distribution<double> z;
    for (Eigen::Index i = 0; i < n; ++i) {
        switch (family) {
            case GlmFamily::gaussian: prob.y[i] = eta[i] + z(rng); break;
            case GlmFamily::binomial: prob.y[i] = std::bernoulli_distribution(mean_of(family, eta[i]))(rng); break;
            case GlmFamily::poisson: prob.y[i] = std::poisson_distribution<int>(std::exp(eta[i]))(rng); break;
        }
    }
    return prob;
}

Eigen::VectorXd finite_difference(const DesignProblem& p, const Eigen::VectorXd& beta) {
    Eigen::VectorXd g(beta.size());
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(beta[j]));
        Eigen::VectorXd up = beta, down = beta;
        up[j] += h;
        down[j] -= h;
        g[j] = (p.objective(up) - p.objective(down)) / (2 * h);
    }
    return g;
}

bool same_support(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    for (Eigen::Index j = 0; j < a.size(); ++j)
        if ((a[j] != 0.0) != (b[j] != 0.0)) return false;
    return true;
}

}  // namespace

TEST(NegLoglik, GaussianPerfectFitIsZero) {
    const Eigen::VectorXd y = vec({1.5, -2.0, 0.25});
    EXPECT_EQ(neg_loglik(GlmFamily::gaussian, y, y), 0.0);
    EXPECT_DOUBLE_EQ(neg_loglik(GlmFamily::gaussian, Eigen::VectorXd::Zero(3), y), 0.5 * y.squaredNorm());
}

TEST(NegLoglik, BinomialAtZeroIsLogTwo) {
    const Eigen::VectorXd y = vec({0, 1, 1, 0, 1});
    EXPECT_NEAR(neg_loglik(GlmFamily::binomial, Eigen::VectorXd::Zero(5), y), 5 * std::numbers::ln2, 1e-14);
}

TEST(NegLoglik, PoissonMatchesDensity) {
    std::mt19937_64 rng(1);
    const Eigen::VectorXd y = vec({0, 3, 1, 7, 2});
    const Eigen::VectorXd eta = 0.5 * random_matrix(5, 1, rng);
    double oracle = 0.0;
    for (int i = 0; i < 5; ++i) {
        const double mu = std::exp(eta[i]);
        // -log p(y) = mu - y log mu + log y!, the last term dropped.
        oracle += -(-mu + y[i] * std::log(mu) - std::lgamma(y[i] + 1)) - std::lgamma(y[i] + 1);
    }
    EXPECT_NEAR(neg_loglik(GlmFamily::poisson, eta, y), oracle, 1e-12);
}

TEST(NegLoglik, NonFiniteLinearPredictor) {
    EXPECT_THROW(neg_loglik(GlmFamily::poisson, vec({NAN}), vec({1})), DomainError);
    EXPECT_THROW(neg_loglik(GlmFamily::gaussian, vec({1, 2}), vec({1})), DomainError);
}

TEST(NegLoglik, BinomialStableAtExtremes) {
    EXPECT_TRUE(std::isfinite(neg_loglik(GlmFamily::binomial, vec({800, -800}), vec({0, 1}))));
    EXPECT_NEAR(cumulant(GlmFamily::binomial, 800), 800, 1e-12);
    EXPECT_NEAR(cumulant(GlmFamily::binomial, -800), 0, 1e-300);
}

TEST(Family, VarianceIsPositiveDerivativeOfMean) {
    for (GlmFamily f : kFamilies)
        for (double theta : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
            EXPECT_GT(variance_of(f, theta), 0.0);
            const double h = 1e-6;
            EXPECT_NEAR((mean_of(f, theta + h) - mean_of(f, theta - h)) / (2 * h), variance_of(f, theta), 1e-7);
            EXPECT_NEAR((cumulant(f, theta + h) - cumulant(f, theta - h)) / (2 * h), mean_of(f, theta), 1e-7);
        }
}

TEST(PredictMean, FamilyLinks) {
    Eigen::MatrixXd rows(2, 2);
    rows << 1, 2, -1, 0.5;
    const Eigen::VectorXd beta = vec({0.3, -0.2});
    const Eigen::VectorXd eta = rows * beta;
    EXPECT_EQ(predict_mean(GlmFamily::gaussian, beta, rows), eta);
    EXPECT_EQ(predict_mean(GlmFamily::binomial, vec({0, 0}), rows), vec({0.5, 0.5}));
    Eigen::MatrixXd one(1, 1);
    one << 1.0;
    EXPECT_NEAR(predict_mean(GlmFamily::poisson, vec({std::log(3.0)}), one)[0], 3.0, 1e-12);
}

TEST(Gradient, MatchesFiniteDifferences) {
    std::mt19937_64 rng(2);
    for (GlmFamily f : kFamilies)
        for (Penalty pen : {Penalty::none(), Penalty::ridge(0.3)}) {
            DesignProblem p = random_problem(f, 30, 4, rng);
            p.penalty = pen;
            p.weights = (random_matrix(30, 1, rng).array().abs() + 0.5).matrix();
            const Eigen::VectorXd beta = 0.5 * random_matrix(4, 1, rng);
            const Eigen::VectorXd g = p.smooth_gradient(beta), fd = finite_difference(p, beta);
            EXPECT_LE((g - fd).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, g.cwiseAbs().maxCoeff()))
                << family_name(f) << " " << penalty_name(pen.kind);
        }
}

TEST(Irls, GaussianMatchesNormalEquations) {
    std::mt19937_64 rng(3);
    const DesignProblem p = random_problem(GlmFamily::gaussian, 40, 5, rng);
    const Eigen::VectorXd normal = (p.x.transpose() * p.x).ldlt().solve(p.x.transpose() * p.y);
    EXPECT_LE((irls_fit(p).coefficients - normal).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Irls, ZeroColumnWithRidgeIsZero) {
    std::mt19937_64 rng(4);
    for (GlmFamily f : kFamilies) {
        DesignProblem p = random_problem(f, 30, 3, rng);
        p.x.col(1).setZero();
        p.penalty = Penalty::ridge(0.1);
        const GlmFit fit = irls_fit(p);
        EXPECT_EQ(fit.coefficients[1], 0.0) << family_name(f);
        EXPECT_TRUE(fit.converged);
    }
}

TEST(Irls, BinomialMatchesBruteForceMaximizer) {
    // Six hand-built observations without separation.
    DesignProblem p;
    p.family = GlmFamily::binomial;
    p.x.resize(6, 2);
    p.x << 1, -1.0, 1, -0.5, 1, 0.0, 1, 0.5, 1, 1.0, 1, 1.5;
    p.y = vec({0, 1, 0, 1, 1, 0});
    // Successive zoomed grids over the two coefficients.
    double best_a = 0, best_b = 0, span = 4.0;
    for (int level = 0; level < 12; ++level) {
        double best = INFINITY, na = best_a, nb = best_b;
        for (int i = -20; i <= 20; ++i)
            for (int j = -20; j <= 20; ++j) {
                const double a = best_a + span * i / 20, b = best_b + span * j / 20;
                const double v = p.objective(vec({a, b}));
                if (v < best) {
                    best = v;
                    na = a;
                    nb = b;
                }
            }
        best_a = na;
        best_b = nb;
        span /= 5;
    }
    const GlmFit fit = irls_fit(p);
    EXPECT_NEAR(fit.coefficients[0], best_a, 1e-5);
    EXPECT_NEAR(fit.coefficients[1], best_b, 1e-5);
}

TEST(Irls, RankDeficientWithoutPenalty) {
    std::mt19937_64 rng(5);
    DesignProblem p = random_problem(GlmFamily::poisson, 20, 3, rng);
    p.x.col(2) = 2 * p.x.col(0);
    try {
        irls_fit(p);
        FAIL() << "expected RankDeficientError";
    } catch (const RankDeficientError& e) {
        EXPECT_NE(std::string(e.what()).find("ridge"), std::string::npos);
    }
}

TEST(Irls, ObjectiveNonIncreasing) {
    std::mt19937_64 rng(6);
    for (GlmFamily f : {GlmFamily::binomial, GlmFamily::poisson}) {
        const GlmFit fit = irls_fit(random_problem(f, 60, 4, rng, 0.8));
        ASSERT_TRUE(fit.converged);
        for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
            EXPECT_LE(fit.objective_trace[i], fit.objective_trace[i - 1] + 1e-12 * std::abs(fit.objective_trace[i - 1]));
        EXPECT_LE(fit.gradient_norm, 1e-8);
    }
}

TEST(Irls, DuplicatedRowEqualsDoubledWeight) {
    std::mt19937_64 rng(7);
    for (GlmFamily f : kFamilies) {
        DesignProblem p = random_problem(f, 25, 3, rng);
        DesignProblem dup = p;
        dup.x.conservativeResize(26, Eigen::NoChange);
        dup.y.conservativeResize(26);
        dup.x.row(25) = p.x.row(4);
        dup.y[25] = p.y[4];
        p.weights = Eigen::VectorXd::Ones(25);
        p.weights[4] = 2.0;
        EXPECT_LE((irls_fit(p).coefficients - irls_fit(dup).coefficients).cwiseAbs().maxCoeff(), 1e-10)
            << family_name(f);
    }
}

TEST(Irls, UnpenalizedColumnIsExempt) {
    std::mt19937_64 rng(8);
    DesignProblem p = random_problem(GlmFamily::gaussian, 40, 3, rng);
    p.x.col(0).setOnes();
    p.y.array() += 5.0;
    p.penalty = Penalty::ridge(1e6);
    p.unpenalized = {true, false, false};
    const GlmFit fit = irls_fit(p);
    EXPECT_NEAR(fit.coefficients[0], p.y.mean(), 1e-4);
    EXPECT_LE(fit.coefficients.tail(2).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Lasso, AboveLambdaMaxIsZero) {
    std::mt19937_64 rng(9);
    for (GlmFamily f : kFamilies) {
        DesignProblem p = random_problem(f, 40, 5, rng);
        p.penalty = Penalty::lasso(1.0);
        p.penalty.lambda = lasso_lambda_max(p) * 1.01;
        EXPECT_EQ(lasso_fit(p).coefficients.cwiseAbs().maxCoeff(), 0.0) << family_name(f);
        p.penalty.lambda = lasso_lambda_max(p) * 0.9;
        EXPECT_GT(lasso_fit(p).coefficients.cwiseAbs().maxCoeff(), 0.0) << family_name(f);
    }
}

TEST(Lasso, OrthonormalDesignSoftThresholds) {
    std::mt19937_64 rng(10);
    const Eigen::Index n = 50, p = 6;
    DesignProblem prob;
    prob.x = std::sqrt(double(n)) * random_orthonormal(n, p, rng);  // X^T X = n I
    prob.y = random_matrix(n, 1, rng) + prob.x * vec({1.0, -0.5, 0.05, 0.0, 0.3, -0.02});
    const Eigen::VectorXd ols = prob.x.transpose() * prob.y / double(n);
    Eigen::Index previous_nonzero = p + 1;
    for (double lam : {0.02, 0.05, 0.1, 0.3, 0.6}) {
        prob.penalty = Penalty::lasso(lam);
        const Eigen::VectorXd b = lasso_fit(prob).coefficients;
        Eigen::Index nonzero = 0;
        for (Eigen::Index j = 0; j < p; ++j) {
            const double soft = std::copysign(std::max(std::abs(ols[j]) - lam, 0.0), ols[j]);
            EXPECT_NEAR(b[j], soft, 1e-6);
            nonzero += b[j] != 0.0;
        }
        EXPECT_LE(nonzero, previous_nonzero);
        previous_nonzero = nonzero;
    }
}

TEST(Lasso, SmallLambdaApproachesUnpenalized) {
    std::mt19937_64 rng(11);
    for (GlmFamily f : kFamilies) {
        DesignProblem p = random_problem(f, 80, 4, rng);
        const Eigen::VectorXd full = irls_fit(p).coefficients;
        p.penalty = Penalty::lasso(1e-7);
        EXPECT_LE((lasso_fit(p).coefficients - full).cwiseAbs().maxCoeff(), 1e-4) << family_name(f);
    }
}

TEST(Lasso, KktOnRandomProblems) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const GlmFamily f = kFamilies[trial % 3];
        DesignProblem p = random_problem(f, 50, 8, rng);
        p.penalty = Penalty::lasso(1.0);
        p.penalty.lambda = lasso_lambda_max(p) * (0.05 + 0.1 * (trial % 5));
        const GlmFit fit = lasso_fit(p);
        ASSERT_TRUE(fit.converged);
        const Eigen::VectorXd g = p.smooth_gradient(fit.coefficients);
        for (Eigen::Index j = 0; j < g.size(); ++j) {
            const double b = fit.coefficients[j];
            if (b == 0.0) EXPECT_LE(std::abs(g[j]), p.penalty.lambda + 1e-6);
            else EXPECT_NEAR(g[j], -p.penalty.lambda * (b > 0 ? 1.0 : -1.0), 1e-6);
        }
    }
}

TEST(Lasso, UnpenalizedInterceptStationary) {
    std::mt19937_64 rng(13);
    DesignProblem p = random_problem(GlmFamily::poisson, 60, 4, rng);
    p.x.col(0).setOnes();
    p.unpenalized = {true, false, false, false};
    p.penalty = Penalty::lasso(1.0);
    p.penalty.lambda = 2 * lasso_lambda_max(p);
    const GlmFit fit = lasso_fit(p);
    EXPECT_NEAR(std::exp(fit.coefficients[0]), p.y.mean(), 1e-6);
    EXPECT_EQ(fit.coefficients.tail(3).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FoldAssignment, DeterministicAndBalanced) {
    const auto a = fold_assignment(23, 5, 42), b = fold_assignment(23, 5, 42), c = fold_assignment(23, 5, 43);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    std::vector<int> counts(5);
    for (auto k : a) ++counts[k];
    for (int n : counts) EXPECT_TRUE(n == 4 || n == 5);
}

TEST(GeometricGrid, EndpointsAndOrder) {
    const auto g = geometric_grid(10.0, 0.01, 4);
    ASSERT_EQ(g.size(), 4u);
    EXPECT_DOUBLE_EQ(g.front(), 10.0);
    EXPECT_NEAR(g.back(), 0.01, 1e-15);
    EXPECT_NEAR(g[1], 1.0, 1e-12);
}

TEST(CvLambda, SingleElementGrid) {
    std::mt19937_64 rng(14);
    DesignProblem p = random_problem(GlmFamily::gaussian, 30, 3, rng);
    p.penalty = Penalty::lasso(1.0);
    EXPECT_EQ(cv_lambda(p, {0.123}, 5, 1).best_lambda, 0.123);
}

TEST(CvLambda, Errors) {
    std::mt19937_64 rng(15);
    DesignProblem p = random_problem(GlmFamily::gaussian, 4, 2, rng);
    p.penalty = Penalty::lasso(1.0);
    EXPECT_THROW(cv_lambda(p, {}, 2, 1), DomainError);
    EXPECT_THROW(cv_lambda(p, {0.1}, 5, 1), DomainError);
}

TEST(CvLambda, Deterministic) {
    std::mt19937_64 rng(16);
    DesignProblem p = random_problem(GlmFamily::binomial, 60, 5, rng);
    p.penalty = Penalty::lasso(1.0);
    const auto grid = geometric_grid(lasso_lambda_max(p), 1e-3 * lasso_lambda_max(p), 6);
    const CvResult a = cv_lambda(p, grid, 5, 9), b = cv_lambda(p, grid, 5, 9);
    EXPECT_EQ(a.best_lambda, b.best_lambda);
    EXPECT_EQ(a.mean_deviance, b.mean_deviance);
}

namespace {

struct CvTrial {
    std::vector<double> grid;
    double chosen = 0.0;
    Eigen::VectorXd fitted;
};

CvTrial run_cv(DesignProblem p, std::uint64_t seed) {
    p.penalty = Penalty::lasso(1.0);
    CvTrial t;
    const double top = lasso_lambda_max(p);
    t.grid = geometric_grid(top, 1e-3 * top, 10);
    t.chosen = cv_lambda(p, t.grid, 5, seed).best_lambda;
    p.penalty.lambda = t.chosen;
    t.fitted = lasso_fit(p).coefficients;
    return t;
}

}  // namespace

TEST(CvLambda, PureNoiseSelectsUpperHalf) {
    int upper = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::mt19937_64 rng(100 + trial);
        DesignProblem p;
        p.x = random_matrix(100, 10, rng);
        p.y = random_matrix(100, 1, rng);
        const CvTrial t = run_cv(p, trial);
        upper += t.chosen >= t.grid[4];
    }
    EXPECT_GE(upper, 14);
}

TEST(CvLambda, StrongSparseSignalKeepsTrueSupport) {
    // Deviance-optimal CV keeps every true coefficient; it may also admit
    // small spurious ones, so containment is what holds reliably.
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(10);
    beta[0] = 3;
    beta[3] = -3;
    beta[7] = 3;
    int contained = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::mt19937_64 rng(200 + trial);
        DesignProblem p;
        p.x = random_matrix(100, 10, rng);
        p.y = p.x * beta + random_matrix(100, 1, rng);
        const CvTrial t = run_cv(p, trial);
        bool ok = true;
        for (Eigen::Index j = 0; j < 10; ++j)
            if (beta[j] != 0.0) ok &= t.fitted[j] != 0.0 && (t.fitted[j] > 0) == (beta[j] > 0);
        contained += ok;
        // The strongest grid point below lambda_max already recovers the support.
        DesignProblem q = p;
        q.penalty = Penalty::lasso(t.grid[1]);
        if (trial == 0) EXPECT_TRUE(same_support(lasso_fit(q).coefficients, beta));
    }
    EXPECT_GE(contained, 16);
}
