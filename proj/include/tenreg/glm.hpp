#pragma once

#include "tenreg/tensor.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tenreg {

/// Cumulant b(theta) of the canonical-link exponential family.
double cumulant(GlmFamily family, double theta);
/// b'(theta), the inverse link.
double mean_of(GlmFamily family, double theta);
/// b''(theta), the variance function.
double variance_of(GlmFamily family, double theta);

/// Negative log-likelihood with a(phi) = 1 and h(y, phi) dropped. The
/// gaussian case is the halved squared error, so a perfect fit scores 0.
double neg_loglik(GlmFamily family, const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& weights = {});

/// Unit deviance summed over observations (zero for a saturated fit).
double deviance(GlmFamily family, const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                const Eigen::VectorXd& weights = {});

Eigen::VectorXd predict_mean(GlmFamily family, const Eigen::VectorXd& coefficients,
                             const Eigen::MatrixXd& rows);

enum class PenaltyKind { none, ridge, lasso };

struct Penalty {
    PenaltyKind kind = PenaltyKind::none;
    double lambda = 0.0;

    static Penalty none() { return {}; }
    static Penalty ridge(double l) { return {PenaltyKind::ridge, l}; }
    static Penalty lasso(double l) { return {PenaltyKind::lasso, l}; }
};

std::string penalty_name(PenaltyKind kind);

/// Penalized objective:
///   neg_loglik(X b, y, w) / sum(w) + ridge: lambda/2 |b_P|^2, lasso: lambda |b_P|_1
/// where P is the set of penalized columns.
struct DesignProblem {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    Eigen::VectorXd weights;         // empty means all ones
    GlmFamily family = GlmFamily::gaussian;
    Penalty penalty;
    std::vector<bool> unpenalized;   // empty means every column is penalized

    Eigen::Index rows() const { return x.rows(); }
    Eigen::Index cols() const { return x.cols(); }
    void validate() const;
    bool is_penalized(Eigen::Index column) const;
    Eigen::VectorXd weight_vector() const;
    double objective(const Eigen::VectorXd& beta) const;
    /// Gradient of the smooth part (likelihood term plus any ridge term).
    Eigen::VectorXd smooth_gradient(const Eigen::VectorXd& beta) const;
};

struct GlmOptions {
    double tol = 1e-8;       // max-norm of the smooth gradient (KKT violation for lasso)
    int max_iter = 100;
    int max_halvings = 20;
};

struct GlmFit {
    Eigen::VectorXd coefficients;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;    // max-norm of the stationarity violation
    double dispersion = 1.0;       // residual variance for gaussian, 1 otherwise
    std::vector<double> objective_trace;
};

class GlmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Design is rank deficient and no ridge penalty is present.
class RankDeficientError : public GlmError {
public:
    using GlmError::GlmError;
};

/// Fisher scoring with step halving for penalty none or ridge.
GlmFit irls_fit(const DesignProblem& p, const GlmOptions& opts = {});

/// Proximal Newton for the lasso penalty at p.penalty.lambda: an IRLS
/// quadratic model per outer step, solved by cyclic coordinate descent, then
/// a backtracking line search on the true objective.
GlmFit lasso_fit(const DesignProblem& p, const GlmOptions& opts = {},
                 const Eigen::VectorXd& warm_start = {});

/// Dispatches on p.penalty.kind.
GlmFit fit_glm(const DesignProblem& p, const GlmOptions& opts = {});

/// Smallest lambda for which the lasso solution is all zero in the penalized
/// columns (unpenalized columns fitted first).
double lasso_lambda_max(const DesignProblem& p);

struct CvResult {
    double best_lambda = 0.0;
    std::vector<double> mean_deviance;   // aligned with the grid
};

/// K-fold cross-validation over a lambda grid using the penalty kind of p.
/// Fold assignment is a seeded permutation; ties go to the earlier grid entry.
CvResult cv_lambda(const DesignProblem& p, const std::vector<double>& grid, std::size_t folds,
                   std::uint64_t seed, const GlmOptions& opts = {});

/// Deterministic fold labels in [0, folds) for n observations.
std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed);

/// Geometric grid from hi down to lo.
std::vector<double> geometric_grid(double hi, double lo, std::size_t count);

}  // namespace tenreg
