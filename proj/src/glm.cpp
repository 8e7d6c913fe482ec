#include "tenreg/glm.hpp"

#include "tenreg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tenreg {

double cumulant(GlmFamily family, double theta) {
    switch (family) {
        case GlmFamily::gaussian: return 0.5 * theta * theta;
        case GlmFamily::binomial:
            return theta > 0.0 ? theta + std::log1p(std::exp(-theta)) : std::log1p(std::exp(theta));
        case GlmFamily::poisson: return std::exp(theta);
    }
    return 0.0;
}

double mean_of(GlmFamily family, double theta) {
    switch (family) {
        case GlmFamily::gaussian: return theta;
        case GlmFamily::binomial:
            if (theta >= 0.0) return 1.0 / (1.0 + std::exp(-theta));
            else {
                const double e = std::exp(theta);
                return e / (1.0 + e);
            }
        case GlmFamily::poisson: return std::exp(theta);
    }
    return 0.0;
}

double variance_of(GlmFamily family, double theta) {
    switch (family) {
        case GlmFamily::gaussian: return 1.0;
        case GlmFamily::binomial: {
            const double mu = mean_of(family, theta);
            return mu * (1.0 - mu);
        }
        case GlmFamily::poisson: return std::exp(theta);
    }
    return 1.0;
}

namespace {

double weight_at(const Eigen::VectorXd& w, Eigen::Index i) { return w.size() ? w[i] : 1.0; }

void check_lengths(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    if (eta.size() != y.size() || (w.size() && w.size() != y.size()))
        throw DomainError("linear predictor, response, and weight lengths differ");
}

double log_or_zero(double v) { return v > 0.0 ? std::log(v) : 0.0; }

}  // namespace

double neg_loglik(GlmFamily family, const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& weights) {
    check_lengths(eta, y, weights);
    double total = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double th = eta[i];
        if (!std::isfinite(th)) throw DomainError("non-finite linear predictor at row " + std::to_string(i));
        const double term = family == GlmFamily::gaussian ? 0.5 * (y[i] - th) * (y[i] - th)
                                                          : cumulant(family, th) - y[i] * th;
        total += weight_at(weights, i) * term;
    }
    return total;
}

double deviance(GlmFamily family, const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                const Eigen::VectorXd& weights) {
    check_lengths(eta, y, weights);
    double total = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double th = eta[i], yi = y[i];
        double d = 0.0;
        switch (family) {
            case GlmFamily::gaussian: d = (yi - th) * (yi - th); break;
            case GlmFamily::binomial:
                // -2 log-likelihood; the saturated binary model has likelihood 1.
                d = 2.0 * (cumulant(family, th) - yi * th);
                break;
            case GlmFamily::poisson: {
                const double mu = std::exp(th);
                d = 2.0 * (yi * (log_or_zero(yi) - th) - (yi - mu));
                break;
            }
        }
        total += weight_at(weights, i) * d;
    }
    return total;
}

Eigen::VectorXd predict_mean(GlmFamily family, const Eigen::VectorXd& coefficients,
                             const Eigen::MatrixXd& rows) {
    if (rows.cols() != coefficients.size())
        throw DomainError("design has " + std::to_string(rows.cols()) + " columns but " +
                          std::to_string(coefficients.size()) + " coefficients");
    Eigen::VectorXd eta = rows * coefficients;
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = mean_of(family, eta[i]);
    return eta;
}

std::string penalty_name(PenaltyKind kind) {
    switch (kind) {
        case PenaltyKind::none: return "none";
        case PenaltyKind::ridge: return "ridge";
        case PenaltyKind::lasso: return "lasso";
    }
    return "unknown";
}

void DesignProblem::validate() const {
    if (x.rows() != y.size())
        throw DomainError("design has " + std::to_string(x.rows()) + " rows but " +
                          std::to_string(y.size()) + " responses");
    if (weights.size() && weights.size() != y.size())
        throw DomainError("weight vector length differs from response length");
    if (weights.size() && (weights.array() < 0.0).any()) throw DomainError("negative observation weight");
    if (!unpenalized.empty() && static_cast<Eigen::Index>(unpenalized.size()) != x.cols())
        throw DomainError("unpenalized mask length differs from column count");
    if (penalty.lambda < 0.0 || !std::isfinite(penalty.lambda))
        throw DomainError("penalty must be a finite nonnegative number");
    if (x.rows() == 0) throw DomainError("design has no rows");
}

bool DesignProblem::is_penalized(Eigen::Index column) const {
    return unpenalized.empty() || !unpenalized[static_cast<std::size_t>(column)];
}

Eigen::VectorXd DesignProblem::weight_vector() const {
    return weights.size() ? weights : Eigen::VectorXd::Ones(y.size());
}

double DesignProblem::objective(const Eigen::VectorXd& beta) const {
    const Eigen::VectorXd w = weight_vector();
    const Eigen::VectorXd eta = x * beta;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
        if (!std::isfinite(eta[i])) return std::numeric_limits<double>::infinity();
    double value = neg_loglik(family, eta, y, w) / w.sum();
    double pen = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        if (!is_penalized(j)) continue;
        if (penalty.kind == PenaltyKind::ridge) pen += 0.5 * beta[j] * beta[j];
        if (penalty.kind == PenaltyKind::lasso) pen += std::abs(beta[j]);
    }
    value += penalty.lambda * pen;
    return std::isfinite(value) ? value : std::numeric_limits<double>::infinity();
}

Eigen::VectorXd DesignProblem::smooth_gradient(const Eigen::VectorXd& beta) const {
    const Eigen::VectorXd w = weight_vector();
    const Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd resid(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) resid[i] = w[i] * (mean_of(family, eta[i]) - y[i]);
    Eigen::VectorXd g = x.transpose() * resid / w.sum();
    if (penalty.kind == PenaltyKind::ridge)
        for (Eigen::Index j = 0; j < g.size(); ++j)
            if (is_penalized(j)) g[j] += penalty.lambda * beta[j];
    return g;
}

namespace {

Eigen::VectorXd initial_eta(GlmFamily family, const Eigen::VectorXd& y) {
    Eigen::VectorXd eta(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        switch (family) {
            case GlmFamily::gaussian: eta[i] = y[i]; break;
            case GlmFamily::binomial: {
                const double mu = (y[i] + 0.5) / 2.0;
                eta[i] = std::log(mu / (1.0 - mu));
                break;
            }
            case GlmFamily::poisson: eta[i] = std::log(y[i] + 0.1); break;
        }
    }
    return eta;
}

struct WorkingModel {
    Eigen::VectorXd v;  // working weights, already divided by sum(w)
    Eigen::VectorXd z;  // working response
};

WorkingModel working_model(const DesignProblem& p, const Eigen::VectorXd& w, double wsum,
                           const Eigen::VectorXd& eta) {
    WorkingModel m{Eigen::VectorXd(eta.size()), Eigen::VectorXd(eta.size())};
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double var = std::max(variance_of(p.family, eta[i]), 1e-12);
        m.v[i] = w[i] * var / wsum;
        m.z[i] = eta[i] + (p.y[i] - mean_of(p.family, eta[i])) / var;
    }
    return m;
}

// Solves min_b sum_i v_i (z_i - x_i b)^2 + ridge * |b_P|^2 by pivoted QR.
Eigen::VectorXd weighted_solve(const DesignProblem& p, const WorkingModel& m, double ridge) {
    const Eigen::Index n = p.rows(), k = p.cols();
    const Eigen::Index extra = ridge > 0.0 ? k : 0;
    Eigen::MatrixXd a(n + extra, k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + extra);
    const Eigen::ArrayXd sv = m.v.array().sqrt();
    a.topRows(n) = p.x.array().colwise() * sv;
    rhs.head(n) = (m.z.array() * sv).matrix();
    if (extra) {
        a.bottomRows(k).setZero();
        for (Eigen::Index j = 0; j < k; ++j)
            if (p.is_penalized(j)) a(n + j, j) = std::sqrt(ridge);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-11);
    if (qr.rank() < k) {
        if (ridge > 0.0 && extra)
            throw RankDeficientError("weighted design is rank deficient even with the ridge term");
        throw RankDeficientError("design is rank deficient (rank " + std::to_string(qr.rank()) +
                                 " of " + std::to_string(k) +
                                 " columns); add a ridge penalty or drop collinear columns");
    }
    return qr.solve(rhs);
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double residual_dispersion(const DesignProblem& p, const Eigen::VectorXd& beta) {
    if (p.family != GlmFamily::gaussian) return 1.0;
    const Eigen::VectorXd w = p.weight_vector();
    const Eigen::VectorXd r = p.y - p.x * beta;
    const double dof = std::max(1.0, w.sum() - static_cast<double>(p.cols()));
    return (w.array() * r.array().square()).sum() / dof;
}

}  // namespace

GlmFit irls_fit(const DesignProblem& p, const GlmOptions& opts) {
    p.validate();
    if (p.penalty.kind == PenaltyKind::lasso) return lasso_fit(p, opts);
    const double ridge = p.penalty.kind == PenaltyKind::ridge ? p.penalty.lambda : 0.0;
    const Eigen::VectorXd w = p.weight_vector();
    const double wsum = w.sum();
    if (!(wsum > 0.0)) throw DomainError("observation weights sum to zero");

    GlmFit fit;
    if (p.family == GlmFamily::gaussian) {
        // Identity link with constant variance: one weighted solve is exact.
        const WorkingModel m{w / wsum, p.y};
        fit.coefficients = weighted_solve(p, m, ridge);
        fit.objective = p.objective(fit.coefficients);
        fit.objective_trace.push_back(fit.objective);
        fit.iterations = 1;
        fit.gradient_norm = max_abs(p.smooth_gradient(fit.coefficients));
        fit.converged = true;
        fit.dispersion = residual_dispersion(p, fit.coefficients);
        return fit;
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p.cols());
    double obj = std::numeric_limits<double>::infinity();
    Eigen::VectorXd eta = initial_eta(p.family, p.y);
    bool first = true;

    for (int it = 1; it <= opts.max_iter; ++it) {
        const WorkingModel m = working_model(p, w, wsum, eta);
        Eigen::VectorXd candidate = weighted_solve(p, m, ridge);
        const Eigen::VectorXd newton_step = candidate - beta;
        double cand_obj = p.objective(candidate);
        int halvings = 0;
        // First step has no accepted iterate yet; halve toward zero only when
        // the objective overflows.
        auto acceptable = [&](double value) {
            return std::isfinite(value) && (first || value <= obj + 1e-13 * std::abs(obj));
        };
        while (!acceptable(cand_obj) && halvings < opts.max_halvings) {
            candidate = 0.5 * (candidate + beta);
            cand_obj = p.objective(candidate);
            ++halvings;
        }
        if (!acceptable(cand_obj)) {
            // Noise rows can be huge, so an absolute gradient test is not
            // scale-free; a negligible Newton decrement also means optimal.
            const Eigen::VectorXd grad = p.smooth_gradient(beta);
            const double decrement = std::abs(grad.dot(newton_step));
            if (!first && (max_abs(grad) <= std::max(opts.tol, 1e-6) || decrement <= 1e-10 * (std::abs(obj) + 1.0))) {
                fit.converged = true;
                break;
            }
            throw GlmError("IRLS diverged at iteration " + std::to_string(it) +
                           ": step halving exhausted after " + std::to_string(halvings) + " halvings");
        }
        const double change = std::abs(obj - cand_obj);
        beta = std::move(candidate);
        const double prev = obj;
        obj = cand_obj;
        fit.objective_trace.push_back(obj);
        fit.iterations = it;
        eta = p.x * beta;
        const double g = max_abs(p.smooth_gradient(beta));
        if (g <= opts.tol || (!first && std::isfinite(prev) && change <= 1e-15 * (std::abs(obj) + 1.0))) {
            fit.converged = true;
            break;
        }
        first = false;
    }
    fit.coefficients = beta;
    fit.objective = obj;
    fit.gradient_norm = max_abs(p.smooth_gradient(beta));
    fit.dispersion = 1.0;
    return fit;
}

namespace {

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

double lasso_kkt_violation(const DesignProblem& p, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd g = p.smooth_gradient(beta);
    const double lam = p.penalty.lambda;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        double v;
        if (!p.is_penalized(j)) v = std::abs(g[j]);
        else if (beta[j] == 0.0) v = std::max(0.0, std::abs(g[j]) - lam);
        else v = std::abs(g[j] + lam * (beta[j] > 0.0 ? 1.0 : -1.0));
        worst = std::max(worst, v);
    }
    return worst;
}

// Coordinate descent on 1/2 sum v_i (z_i - x_i b)^2 + lam |b_P|_1 from `beta`.
Eigen::VectorXd coordinate_descent(const DesignProblem& p, const WorkingModel& m, double lam,
                                   Eigen::VectorXd beta) {
    const Eigen::Index k = p.cols();
    Eigen::VectorXd resid = m.z - p.x * beta;
    Eigen::VectorXd curvature(k);
    for (Eigen::Index j = 0; j < k; ++j) curvature[j] = (p.x.col(j).array().square() * m.v.array()).sum();
    for (int cycle = 0; cycle < 100000; ++cycle) {
        double max_move = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            const double c = curvature[j];
            if (c <= 0.0) {
                if (beta[j] != 0.0) {
                    resid += beta[j] * p.x.col(j);
                    beta[j] = 0.0;
                }
                continue;
            }
            const double rho = (p.x.col(j).array() * m.v.array() * resid.array()).sum() + c * beta[j];
            const double next = p.is_penalized(j) ? soft_threshold(rho, lam) / c : rho / c;
            const double delta = next - beta[j];
            if (delta != 0.0) {
                resid -= delta * p.x.col(j);
                beta[j] = next;
                max_move = std::max(max_move, c * delta * delta);
            }
        }
        if (max_move < 1e-24) break;
    }
    return beta;
}

}  // namespace

GlmFit lasso_fit(const DesignProblem& p, const GlmOptions& opts, const Eigen::VectorXd& warm_start) {
    p.validate();
    if (p.penalty.kind != PenaltyKind::lasso) throw DomainError("lasso_fit needs a lasso penalty");
    if (!(p.penalty.lambda > 0.0)) throw DomainError("lasso penalty must be positive");
    const Eigen::VectorXd w = p.weight_vector();
    const double wsum = w.sum();
    const double lam = p.penalty.lambda;

    Eigen::VectorXd beta = warm_start.size() == p.cols() ? warm_start : Eigen::VectorXd::Zero(p.cols());
    double obj = p.objective(beta);
    GlmFit fit;
    for (int it = 1; it <= opts.max_iter; ++it) {
        const Eigen::VectorXd eta = p.x * beta;
        const WorkingModel m = working_model(p, w, wsum, eta);
        const Eigen::VectorXd target = coordinate_descent(p, m, lam, beta);
        const Eigen::VectorXd dir = target - beta;
        double step = 1.0;
        Eigen::VectorXd candidate = target;
        double cand_obj = p.objective(candidate);
        int halvings = 0;
        while (!(cand_obj <= obj + 1e-13 * std::abs(obj)) && halvings < opts.max_halvings) {
            step *= 0.5;
            candidate = beta + step * dir;
            cand_obj = p.objective(candidate);
            ++halvings;
        }
        fit.iterations = it;
        if (!(cand_obj <= obj + 1e-13 * std::abs(obj))) break;  // no further descent possible
        beta = std::move(candidate);
        obj = cand_obj;
        fit.objective_trace.push_back(obj);
        if (lasso_kkt_violation(p, beta) <= opts.tol) break;
    }
    fit.coefficients = beta;
    fit.objective = obj;
    fit.gradient_norm = lasso_kkt_violation(p, beta);
    fit.converged = fit.gradient_norm <= opts.tol;
    fit.dispersion = residual_dispersion(p, beta);
    return fit;
}

GlmFit fit_glm(const DesignProblem& p, const GlmOptions& opts) {
    return p.penalty.kind == PenaltyKind::lasso ? lasso_fit(p, opts) : irls_fit(p, opts);
}

double lasso_lambda_max(const DesignProblem& p) {
    p.validate();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p.cols());
    std::vector<Eigen::Index> free_cols;
    for (Eigen::Index j = 0; j < p.cols(); ++j)
        if (!p.is_penalized(j)) free_cols.push_back(j);
    if (!free_cols.empty()) {
        DesignProblem sub;
        sub.family = p.family;
        sub.y = p.y;
        sub.weights = p.weights;
        sub.x.resize(p.rows(), static_cast<Eigen::Index>(free_cols.size()));
        for (std::size_t c = 0; c < free_cols.size(); ++c) sub.x.col(c) = p.x.col(free_cols[c]);
        const auto f = irls_fit(sub);
        for (std::size_t c = 0; c < free_cols.size(); ++c) beta[free_cols[c]] = f.coefficients[c];
    }
    DesignProblem smooth = p;
    smooth.penalty = Penalty::none();
    const Eigen::VectorXd g = smooth.smooth_gradient(beta);
    double hi = 0.0;
    for (Eigen::Index j = 0; j < g.size(); ++j)
        if (p.is_penalized(j)) hi = std::max(hi, std::abs(g[j]));
    return hi;
}

std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed) {
    if (folds < 2) throw DomainError("need at least 2 folds");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto rng = make_stream(seed, {stream::folds});
    // Fisher-Yates with an explicit draw so the permutation does not depend on
    // the standard library's shuffle implementation.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(perm[i - 1], perm[j]);
    }
    std::vector<std::size_t> label(n);
    for (std::size_t pos = 0; pos < n; ++pos) label[perm[pos]] = pos % folds;
    return label;
}

namespace {

DesignProblem subset(const DesignProblem& p, const std::vector<std::size_t>& labels, std::size_t fold,
                     bool keep_fold) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if ((labels[i] == fold) == keep_fold) rows.push_back(static_cast<Eigen::Index>(i));
    DesignProblem out;
    out.family = p.family;
    out.penalty = p.penalty;
    out.unpenalized = p.unpenalized;
    out.x.resize(static_cast<Eigen::Index>(rows.size()), p.cols());
    out.y.resize(static_cast<Eigen::Index>(rows.size()));
    if (p.weights.size()) out.weights.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(r);
        out.x.row(i) = p.x.row(rows[r]);
        out.y[i] = p.y[rows[r]];
        if (p.weights.size()) out.weights[i] = p.weights[rows[r]];
    }
    return out;
}

}  // namespace

CvResult cv_lambda(const DesignProblem& p, const std::vector<double>& grid, std::size_t folds,
                   std::uint64_t seed, const GlmOptions& opts) {
    p.validate();
    if (grid.empty()) throw DomainError("cv_lambda: empty lambda grid");
    if (static_cast<std::size_t>(p.rows()) < folds)
        throw DomainError("cv_lambda: fewer observations than folds");
    CvResult res;
    if (grid.size() == 1) {
        res.best_lambda = grid.front();
        res.mean_deviance.assign(1, 0.0);
        return res;
    }
    const auto labels = fold_assignment(static_cast<std::size_t>(p.rows()), folds, seed);
    res.mean_deviance.assign(grid.size(), 0.0);
    for (std::size_t f = 0; f < folds; ++f) {
        DesignProblem train = subset(p, labels, f, false);
        const DesignProblem held = subset(p, labels, f, true);
        Eigen::VectorXd warm;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            train.penalty.lambda = grid[g];
            double dev;
            try {
                GlmFit fit;
                if (train.penalty.kind == PenaltyKind::lasso) {
                    fit = lasso_fit(train, opts, warm);
                    warm = fit.coefficients;
                } else {
                    fit = irls_fit(train, opts);
                }
                dev = deviance(p.family, held.x * fit.coefficients, held.y, held.weights) /
                      static_cast<double>(held.rows());
            } catch (const GlmError&) {
                dev = std::numeric_limits<double>::infinity();
            }
            res.mean_deviance[g] += dev / static_cast<double>(folds);
        }
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g)
        if (res.mean_deviance[g] < res.mean_deviance[best]) best = g;
    res.best_lambda = grid[best];
    return res;
}

std::vector<double> geometric_grid(double hi, double lo, std::size_t count) {
    if (count == 0) return {};
    if (count == 1) return {hi};
    std::vector<double> out(count);
    const double ratio = std::pow(lo / hi, 1.0 / static_cast<double>(count - 1));
    for (std::size_t i = 0; i < count; ++i) out[i] = hi * std::pow(ratio, static_cast<double>(i));
    return out;
}

}  // namespace tenreg
