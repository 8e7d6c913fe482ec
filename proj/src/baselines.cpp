#include "tenreg/baselines.hpp"

#include <cmath>
#include <limits>

namespace tenreg {

void BlockRelaxConfig::validate() const {
    if (max_iter < 1) throw DomainError("max_iter T must be at least 1");
    if (!(eta > 0.0)) throw DomainError("stop threshold eta must be positive");
    if (lambda < 0.0) throw DomainError("penalty must be nonnegative");
    if (cross_validate && folds < 2) throw DomainError("cross-validation needs at least 2 folds");
}

nlohmann::ordered_json BlockRelaxConfig::to_json() const {
    return {{"ranks", ranks}, {"T", max_iter}, {"eta", eta},   {"lambda", lambda}, {"cv", cross_validate},
            {"grid", grid},   {"folds", folds}, {"seed", seed}, {"intercept", intercept}, {"scale", scale_mode_name(scale)}};
}

namespace {

Eigen::MatrixXd kr_except(const std::vector<Eigen::MatrixXd>& factors, std::size_t skip) {
    std::vector<Eigen::MatrixXd> mats;
    for (std::size_t k = factors.size(); k-- > 0;)
        if (k != skip) mats.push_back(factors[k]);
    if (mats.empty()) return Eigen::MatrixXd::Ones(1, factors.front().cols());
    return khatri_rao(mats);
}

void check_mode(const std::vector<DenseTensor>& xs, std::size_t mode, std::size_t order) {
    if (mode >= order) throw DomainError("mode " + std::to_string(mode + 1) + " out of range");
    for (const auto& x : xs)
        if (x.order() != order)
            throw DomainError("predictor order " + std::to_string(x.order()) + " differs from model order " +
                              std::to_string(order));
}

}  // namespace

Eigen::MatrixXd factor_block_design(const std::vector<DenseTensor>& xs, const TuckerFactors& f,
                                    std::size_t mode) {
    check_mode(xs, mode, f.factors.size());
    const Eigen::MatrixXd g_d = matricize(f.core, mode);
    const auto cols = f.factors[mode].size();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), cols);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].shape() != f.full_shape())
            throw DomainError("predictor shape " + shape_to_string(xs[i].shape()) + " differs from " +
                              shape_to_string(f.full_shape()));
        DenseTensor y = xs[i];
        for (std::size_t k = 0; k < f.factors.size(); ++k)
            if (k != mode) y = mode_product(y, f.factors[k].transpose(), k);
        const Eigen::MatrixXd row = matricize(y, mode) * g_d.transpose();
        out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), row.size());
    }
    return out;
}

Eigen::MatrixXd factor_block_design(const std::vector<DenseTensor>& xs, const CpFactors& f, std::size_t mode) {
    check_mode(xs, mode, f.factors.size());
    Eigen::MatrixXd kr = kr_except(f.factors, mode);
    kr = kr * f.weights.asDiagonal();
    const auto cols = f.factors[mode].size();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), cols);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].shape() != f.full_shape())
            throw DomainError("predictor shape " + shape_to_string(xs[i].shape()) + " differs from " +
                              shape_to_string(f.full_shape()));
        const Eigen::MatrixXd row = matricize(xs[i], mode) * kr;
        out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), row.size());
    }
    return out;
}

Eigen::MatrixXd core_block_design(const std::vector<DenseTensor>& xs, const std::vector<Eigen::MatrixXd>& factors) {
    std::size_t cols = 1;
    for (const auto& u : factors) cols *= static_cast<std::size_t>(u.cols());
    Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].order() != factors.size())
            throw DomainError("predictor order differs from factor count");
        const DenseTensor y = multi_mode_product(xs[i], factors, /*transpose=*/true);
        out.row(static_cast<Eigen::Index>(i)) = y.as_vector().transpose();
    }
    return out;
}

namespace {

struct BlockSolution {
    double intercept = 0.0;
    Eigen::VectorXd coefficients;
    bool converged = true;
};

// Fits one block with the intercept refreshed alongside. Columns that are
// identically zero are dropped and their coefficients pinned at 0.
BlockSolution solve_block(const Eigen::MatrixXd& block, const PreparedData& prep, GlmFamily family, Penalty penalty,
                          double intercept, const Eigen::VectorXd& current, const GlmOptions& opts) {
    const Eigen::Index off = prep.offset();
    const Eigen::VectorXd norms = block.colwise().norm();
    const double scale = std::max(1.0, norms.size() ? norms.maxCoeff() : 0.0);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < block.cols(); ++j)
        if (norms[j] > 1e-12 * scale) keep.push_back(j);

    DesignProblem p;
    p.family = family;
    p.y = prep.y;
    p.penalty = penalty;
    p.x.resize(block.rows(), static_cast<Eigen::Index>(keep.size()) + off);
    if (off) p.x.col(0).setOnes();
    Eigen::VectorXd warm(p.x.cols());
    if (off) warm[0] = intercept;
    for (std::size_t c = 0; c < keep.size(); ++c) {
        p.x.col(static_cast<Eigen::Index>(c) + off) = block.col(keep[c]);
        warm[static_cast<Eigen::Index>(c) + off] = current[keep[c]];
    }
    p.unpenalized = intercept_mask(p.cols(), prep.intercept);

    GlmFit fit;
    if (penalty.kind == PenaltyKind::lasso && penalty.lambda > 0.0) {
        fit = lasso_fit(p, opts, warm);
    } else {
        if (penalty.kind == PenaltyKind::lasso) p.penalty = Penalty::none();
        try {
            fit = irls_fit(p, opts);
        } catch (const RankDeficientError&) {
            p.penalty = Penalty::ridge(1e-8);
            fit = irls_fit(p, opts);
        }
    }
    BlockSolution out;
    out.intercept = off ? fit.coefficients[0] : 0.0;
    out.coefficients = Eigen::VectorXd::Zero(block.cols());
    for (std::size_t c = 0; c < keep.size(); ++c)
        out.coefficients[keep[c]] = fit.coefficients[static_cast<Eigen::Index>(c) + off];
    out.converged = fit.converged;
    return out;
}

Eigen::MatrixXd reshape_factor(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

FitResult base_result(const std::string& method, const TensorDataset& ds, const PreparedData& prep) {
    FitResult fr;
    fr.method = method;
    fr.family = ds.family;
    fr.has_intercept = prep.intercept;
    fr.transform = prep.standardized.transform;
    fr.converged = false;
    return fr;
}

TensorDataset subset_rows(const TensorDataset& ds, const std::vector<std::size_t>& labels, std::size_t fold,
                          bool keep_fold) {
    TensorDataset out;
    out.family = ds.family;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if ((labels[i] == fold) == keep_fold) {
            out.predictors.push_back(ds.predictors[i]);
            out.responses.push_back(ds.responses[i]);
        }
    return out;
}

// Whole-model K-fold CV: refits the estimator per (lambda, fold) and scores
// mean held-out deviance. Ties keep the earlier grid entry.
template <class Fitter>
double cross_validate_lambda(const TensorDataset& ds, const std::vector<double>& grid, std::size_t folds,
                             std::uint64_t seed, Fitter&& fitter) {
    const auto labels = fold_assignment(ds.size(), folds, seed);
    double best = grid.front(), best_score = std::numeric_limits<double>::infinity();
    for (double lam : grid) {
        double score = 0.0;
        for (std::size_t f = 0; f < folds && std::isfinite(score); ++f) {
            const TensorDataset train = subset_rows(ds, labels, f, false);
            const TensorDataset held = subset_rows(ds, labels, f, true);
            try {
                const FitResult fr = fitter(train, lam);
                const Eigen::VectorXd eta = linear_predictors(fr, held.predictors);
                const Eigen::VectorXd y =
                    Eigen::Map<const Eigen::VectorXd>(held.responses.data(), static_cast<Eigen::Index>(held.size()));
                score += deviance(ds.family, eta, y) / static_cast<double>(held.size()) / static_cast<double>(folds);
            } catch (const std::runtime_error&) {
                score = std::numeric_limits<double>::infinity();
            }
        }
        if (score < best_score) {
            best_score = score;
            best = lam;
        }
    }
    return best;
}

double vectorized_lambda_max(const PreparedData& prep, GlmFamily family) {
    DesignProblem p;
    p.x = prep.design;
    p.y = prep.y;
    p.family = family;
    p.unpenalized = intercept_mask(p.cols(), prep.intercept);
    return lasso_lambda_max(p);
}

}  // namespace

FitResult fit_tucker_tr(const TensorDataset& ds, const BlockRelaxConfig& cfg) {
    ds.validate();
    cfg.validate();
    const Shape shape = ds.shape();
    const auto ranks = cfg.ranks.empty() ? shape : cfg.ranks;
    const PreparedData prep = prepare(ds, cfg.intercept, cfg.scale);

    if (cfg.cross_validate) {
        std::vector<double> grid = cfg.grid;
        if (grid.empty()) {
            const double hi = vectorized_lambda_max(prep, ds.family);
            grid = geometric_grid(hi, hi * 1e-3, 5);
        }
        BlockRelaxConfig inner = cfg;
        inner.cross_validate = false;
        const double best = cross_validate_lambda(ds, grid, cfg.folds, cfg.seed, [&](const TensorDataset& train, double lam) {
            inner.lambda = lam;
            return fit_tucker_tr(train, inner);
        });
        inner.lambda = best;
        FitResult fr = fit_tucker_tr(ds, inner);
        fr.config["cv_grid"] = grid;
        return fr;
    }

    const std::string method = cfg.lambda > 0.0 ? "tucker-l1" : "tucker";
    FitResult fr = base_result(method, ds, prep);
    fr.config = cfg.to_json();
    const auto& xs = prep.standardized.data.predictors;

    const GlmFit init = vectorized_start(prep, ds.family, cfg.glm);
    auto [icpt, b0] = split_coefficients(init.coefficients, shape, cfg.intercept);
    TuckerFactors f = hosvd(b0, ranks);
    DenseTensor b = tucker_reconstruct(f);
    const Penalty core_penalty = cfg.lambda > 0.0 ? Penalty::lasso(cfg.lambda) : Penalty::none();

    for (int t = 1; t <= cfg.max_iter; ++t) {
        try {
            for (std::size_t d = 0; d < shape.size(); ++d) {
                const Eigen::MatrixXd block = factor_block_design(xs, f, d);
                const Eigen::VectorXd cur = Eigen::Map<const Eigen::VectorXd>(f.factors[d].data(), f.factors[d].size());
                const BlockSolution s = solve_block(block, prep, ds.family, Penalty::none(), icpt, cur, cfg.glm);
                icpt = s.intercept;
                f.factors[d] = reshape_factor(s.coefficients, f.factors[d].rows(), f.factors[d].cols());
            }
            const Eigen::MatrixXd block = core_block_design(xs, f.factors);
            const BlockSolution s = solve_block(block, prep, ds.family, core_penalty, icpt, f.core.as_vector(), cfg.glm);
            icpt = s.intercept;
            f.core.as_vector() = s.coefficients;
        } catch (const GlmError& err) {
            throw GlmError(method + " block update failed at iteration " + std::to_string(t) + ": " + err.what());
        }
        DenseTensor next = tucker_reconstruct(f);
        const double change = (next - b).l1_norm();
        b = std::move(next);
        fr.trace.push_back(data_loss(prep, ds.family, icpt, b));
        fr.iterations = t;
        if (change <= cfg.eta) {
            fr.converged = true;
            break;
        }
    }
    fr.coefficients = b;
    fr.intercept = cfg.intercept ? icpt : 0.0;
    fr.tucker = std::move(f);
    return fr;
}

FitResult fit_cp_tr(const TensorDataset& ds, const BlockRelaxConfig& cfg) {
    ds.validate();
    cfg.validate();
    const Shape shape = ds.shape();
    if (cfg.ranks.size() != 1) throw DomainError("CP regression takes a single rank");
    const std::size_t rank = cfg.ranks.front();
    if (rank < 1) throw DomainError("CP rank must be at least 1");
    const PreparedData prep = prepare(ds, cfg.intercept, cfg.scale);

    if (cfg.cross_validate) {
        const std::vector<double> grid = cfg.grid.empty() ? geometric_grid(1.0, 1e-4, 5) : cfg.grid;
        BlockRelaxConfig inner = cfg;
        inner.cross_validate = false;
        const double best = cross_validate_lambda(ds, grid, cfg.folds, cfg.seed, [&](const TensorDataset& train, double lam) {
            inner.lambda = lam;
            return fit_cp_tr(train, inner);
        });
        inner.lambda = best;
        FitResult fr = fit_cp_tr(ds, inner);
        fr.config["cv_grid"] = grid;
        return fr;
    }

    const std::string method = cfg.lambda > 0.0 ? "cp-l2" : "cp";
    FitResult fr = base_result(method, ds, prep);
    fr.config = cfg.to_json();
    const auto& xs = prep.standardized.data.predictors;

    const GlmFit init = vectorized_start(prep, ds.family, cfg.glm);
    auto [icpt, b0] = split_coefficients(init.coefficients, shape, cfg.intercept);
    CpAlsOptions als;
    als.seed = cfg.seed;
    CpFactors f = cp_als(b0, rank, als);
    // Spread each weight evenly over the modes so the blocks start balanced.
    const double root = 1.0 / static_cast<double>(shape.size());
    for (Eigen::Index r = 0; r < f.weights.size(); ++r) {
        const double w = f.weights[r];
        const double s = std::pow(std::abs(w), root);
        for (std::size_t d = 0; d < shape.size(); ++d) f.factors[d].col(r) *= s;
        if (w < 0.0) f.factors[0].col(r) *= -1.0;
        f.weights[r] = 1.0;
    }
    DenseTensor b = cp_reconstruct(f);
    const Penalty factor_penalty = cfg.lambda > 0.0 ? Penalty::ridge(cfg.lambda) : Penalty::none();

    for (int t = 1; t <= cfg.max_iter; ++t) {
        try {
            for (std::size_t d = 0; d < shape.size(); ++d) {
                const Eigen::MatrixXd block = factor_block_design(xs, f, d);
                const Eigen::VectorXd cur = Eigen::Map<const Eigen::VectorXd>(f.factors[d].data(), f.factors[d].size());
                const BlockSolution s = solve_block(block, prep, ds.family, factor_penalty, icpt, cur, cfg.glm);
                icpt = s.intercept;
                f.factors[d] = reshape_factor(s.coefficients, f.factors[d].rows(), f.factors[d].cols());
            }
        } catch (const GlmError& err) {
            throw GlmError(method + " block update failed at iteration " + std::to_string(t) + ": " + err.what());
        }
        DenseTensor next = cp_reconstruct(f);
        const double change = (next - b).l1_norm();
        b = std::move(next);
        fr.trace.push_back(data_loss(prep, ds.family, icpt, b));
        fr.iterations = t;
        if (change <= cfg.eta) {
            fr.converged = true;
            break;
        }
    }
    // Report unit-norm columns with magnitudes moved into the weights.
    for (Eigen::Index r = 0; r < f.weights.size(); ++r)
        for (std::size_t d = 0; d < shape.size(); ++d) {
            const double nrm = f.factors[d].col(r).norm();
            if (nrm > 0.0) {
                f.factors[d].col(r) /= nrm;
                f.weights[r] *= nrm;
            } else {
                f.weights[r] = 0.0;
            }
        }
    fr.coefficients = b;
    fr.intercept = cfg.intercept ? icpt : 0.0;
    fr.cp = std::move(f);
    return fr;
}

FitResult fit_vectorized(const TensorDataset& ds, const VectorizedConfig& cfg) {
    ds.validate();
    const PreparedData prep = prepare(ds, cfg.intercept, cfg.scale);
    FitResult fr = base_result(cfg.lasso ? "vec-l1" : "vec", ds, prep);

    DesignProblem p;
    p.x = prep.design;
    p.y = prep.y;
    p.family = ds.family;
    p.unpenalized = intercept_mask(p.cols(), cfg.intercept);

    GlmFit fit;
    double lambda = 0.0;
    if (cfg.lasso) {
        if (cfg.lambda) {
            lambda = *cfg.lambda;
        } else {
            const double hi = lasso_lambda_max(p);
            p.penalty = Penalty::lasso(hi);
            const auto grid = geometric_grid(hi, hi * 1e-3, cfg.grid_size);
            lambda = cv_lambda(p, grid, cfg.folds, cfg.seed, cfg.glm).best_lambda;
        }
        p.penalty = Penalty::lasso(lambda);
        fit = lasso_fit(p, cfg.glm);
    } else {
        fit = irls_fit(p, cfg.glm);
    }
    std::tie(fr.intercept, fr.coefficients) = split_coefficients(fit.coefficients, ds.shape(), cfg.intercept);
    fr.trace = fit.objective_trace;
    fr.iterations = fit.iterations;
    fr.converged = fit.converged;
    fr.config = {{"lasso", cfg.lasso}, {"lambda", lambda}, {"folds", cfg.folds}, {"seed", cfg.seed},
                 {"intercept", cfg.intercept}, {"scale", scale_mode_name(cfg.scale)}};
    return fr;
}

}  // namespace tenreg
