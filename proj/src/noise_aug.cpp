#include "tenreg/noise_aug.hpp"

#include <cmath>
#include <deque>

namespace tenreg {

NaConfig NaConfig::full_scale(GlmFamily family) {
    NaConfig cfg;
    switch (family) {
        case GlmFamily::gaussian: cfg.max_iter = 30000; break;
        case GlmFamily::binomial: cfg.max_iter = 5000; break;
        case GlmFamily::poisson: cfg.max_iter = 10000; break;
    }
    return cfg;
}

NaConfig NaConfig::desk_scale(GlmFamily family) {
    NaConfig cfg = full_scale(family);
    cfg.window = 200;
    switch (family) {
        case GlmFamily::gaussian: cfg.max_iter = 3000; break;
        case GlmFamily::binomial: cfg.max_iter = 1000; break;
        case GlmFamily::poisson: cfg.max_iter = 2000; break;
    }
    return cfg;
}

std::vector<std::size_t> NaConfig::resolved_ranks(const Shape& shape) const {
    return ranks.empty() ? shape : ranks;
}

void NaConfig::validate(const Shape& shape) const {
    const auto r = resolved_ranks(shape);
    if (r.size() != shape.size())
        throw DomainError("expected " + std::to_string(shape.size()) + " ranks, got " + std::to_string(r.size()));
    std::size_t core = 1;
    for (std::size_t d = 0; d < shape.size(); ++d) {
        if (r[d] < 1 || r[d] > shape[d])
            throw DomainError("rank " + std::to_string(r[d]) + " for mode " + std::to_string(d + 1) +
                              " outside [1, " + std::to_string(shape[d]) + "]");
        core *= r[d];
    }
    if (n_e >= core)
        throw DomainError("noise block size n_e = " + std::to_string(n_e) +
                          " must be smaller than the core size " + std::to_string(core));
    if (!(lambda > 0.0)) throw DomainError("noise scale lambda must be positive");
    if (window < 1) throw DomainError("window m must be at least 1");
    if (!(tau0 > 0.0)) throw DomainError("zero threshold tau0 must be positive");
    if (!(c > 0.0)) throw DomainError("floor guard c must be positive");
    if (max_iter < 1) throw DomainError("max_iter T must be at least 1");
    if (tau < 0.0 || eta < 0.0) throw DomainError("stopping thresholds must be nonnegative");
}

nlohmann::ordered_json NaConfig::to_json() const {
    return {{"n_e", n_e},     {"lambda", lambda}, {"ranks", ranks},         {"T", max_iter},
            {"m", window},    {"tau", tau},       {"eta", eta},             {"tau0", tau0},
            {"c", c},         {"seed", seed},     {"intercept", intercept}, {"scale", scale_mode_name(scale)}};
}

Eigen::VectorXd noise_responses(GlmFamily family, std::size_t n_e) {
    const auto n = static_cast<Eigen::Index>(n_e);
    switch (family) {
        case GlmFamily::gaussian: return Eigen::VectorXd::Zero(n);
        case GlmFamily::binomial: {
            Eigen::VectorXd e = Eigen::VectorXd::Ones(n);
            e.head((n + 1) / 2).setZero();
            return e;
        }
        case GlmFamily::poisson: return Eigen::VectorXd::Ones(n);
    }
    throw DomainError("unknown family");
}

std::vector<DenseTensor> draw_noise_cores(const DenseTensor& g_bar, double lambda, std::size_t n_e,
                                          Rng& rng) {
    std::vector<double> sd(g_bar.size());
    for (std::size_t p = 0; p < g_bar.size(); ++p) {
        if (g_bar[p] == 0.0 || !std::isfinite(g_bar[p]))
            throw DomainError("averaged core entry " + std::to_string(p) + " is zero or non-finite");
        sd[p] = std::sqrt(lambda) / std::abs(g_bar[p]);
    }
    std::normal_distribution<double> normal;
    std::vector<DenseTensor> cores;
    cores.reserve(n_e);
    for (std::size_t j = 0; j < n_e; ++j) {
        DenseTensor e(g_bar.shape());
        for (std::size_t p = 0; p < e.size(); ++p) e[p] = sd[p] * normal(rng);
        cores.push_back(std::move(e));
    }
    return cores;
}

std::vector<DenseTensor> build_noise_predictors(const std::vector<DenseTensor>& cores,
                                                const std::vector<Eigen::MatrixXd>& factors) {
    std::vector<DenseTensor> z;
    z.reserve(cores.size());
    for (const auto& e : cores) {
        if (e.order() != factors.size())
            throw DomainError("noise core order " + std::to_string(e.order()) + " but " +
                              std::to_string(factors.size()) + " factors");
        z.push_back(multi_mode_product(e, factors));
    }
    return z;
}

TensorDataset augment(const TensorDataset& ds, const std::vector<DenseTensor>& z, const Eigen::VectorXd& e_y) {
    if (static_cast<Eigen::Index>(z.size()) != e_y.size())
        throw DomainError("augment: " + std::to_string(z.size()) + " noise predictors but " +
                          std::to_string(e_y.size()) + " noise responses");
    TensorDataset out = ds;
    for (const auto& zj : z)
        if (!ds.predictors.empty() && zj.shape() != ds.shape())
            throw DomainError("augment: noise predictor shape " + shape_to_string(zj.shape()) +
                              " differs from data shape " + shape_to_string(ds.shape()));
    for (int sign : {1, -1})
        for (std::size_t j = 0; j < z.size(); ++j) {
            out.predictors.push_back(static_cast<double>(sign) * z[j]);
            out.responses.push_back(e_y[static_cast<Eigen::Index>(j)]);
        }
    return out;
}

DenseTensor floor_magnitude(const DenseTensor& g, double floor) {
    DenseTensor out = g;
    for (std::size_t p = 0; p < out.size(); ++p)
        if (std::abs(out[p]) < floor) out[p] = out[p] < 0.0 ? -floor : floor;
    return out;
}

std::size_t core_zero_count(const DenseTensor& b, double tau0) {
    const TuckerFactors f = hosvd(b, b.shape());
    std::size_t count = 0;
    for (double g : f.core.values())
        if (std::abs(g) <= tau0) ++count;
    return count;
}

namespace {

DenseTensor window_mean(const std::deque<DenseTensor>& items) {
    DenseTensor acc = DenseTensor::zeros(items.front().shape());
    for (const auto& t : items) acc += t;
    acc *= 1.0 / static_cast<double>(items.size());
    return acc;
}

// Flips factor columns to agree in sign with the previous iteration's factors
// so that cores from successive iterations share a basis orientation.
void align_signs(TuckerFactors& dec, const std::vector<Eigen::MatrixXd>& previous) {
    if (previous.empty()) return;
    for (std::size_t d = 0; d < dec.factors.size(); ++d) {
        Eigen::MatrixXd slab = matricize(dec.core, d);
        bool flipped = false;
        for (Eigen::Index r = 0; r < dec.factors[d].cols(); ++r)
            if (dec.factors[d].col(r).dot(previous[d].col(r)) < 0.0) {
                dec.factors[d].col(r) *= -1.0;
                slab.row(r) *= -1.0;
                flipped = true;
            }
        if (flipped) dec.core = fold(slab, d, dec.core.shape());
    }
}

double window_mean(const std::deque<double>& items) {
    double s = 0.0;
    for (double v : items) s += v;
    return s / static_cast<double>(items.size());
}

}  // namespace

FitResult fit_na0ct2(const TensorDataset& ds, const NaConfig& cfg) {
    ds.validate();
    const Shape shape = ds.shape();
    cfg.validate(shape);
    const auto ranks = cfg.resolved_ranks(shape);
    const PreparedData prep = prepare(ds, cfg.intercept, cfg.scale);
    const Eigen::Index n = prep.design.rows(), k = prep.design.cols(), off = prep.offset();
    const auto ne = static_cast<Eigen::Index>(cfg.n_e);
    const double floor = std::max(cfg.c, cfg.tau0);

    FitResult fr;
    fr.method = "na0ct2";
    fr.family = ds.family;
    fr.has_intercept = cfg.intercept;
    fr.transform = prep.standardized.transform;
    fr.config = cfg.to_json();
    fr.converged = false;

    const GlmFit init = vectorized_start(prep, ds.family, cfg.glm);
    auto [icpt, b_hat] = split_coefficients(init.coefficients, shape, cfg.intercept);

    // Original rows stay fixed; noise rows are overwritten every iteration.
    DesignProblem aug;
    aug.family = ds.family;
    aug.x = Eigen::MatrixXd::Zero(n + 2 * ne, k);
    aug.x.topRows(n) = prep.design;
    aug.y.resize(n + 2 * ne);
    aug.y.head(n) = prep.y;
    const Eigen::VectorXd e_y = noise_responses(ds.family, cfg.n_e);
    aug.y.segment(n, ne) = e_y;
    aug.y.tail(ne) = e_y;
    aug.unpenalized = intercept_mask(k, cfg.intercept);

    std::deque<DenseTensor> cores, b_hist;
    std::vector<Eigen::MatrixXd> prev_factors;
    std::deque<double> loss_hist, icpt_hist;
    DenseTensor b_bar, b_bar_prev;
    double l_bar = 0.0, l_bar_prev = 0.0, icpt_bar = icpt;
    const std::size_t m = cfg.window;

    for (int t = 1; t <= cfg.max_iter; ++t) {
        TuckerFactors dec = hosvd(b_hat, ranks);
        align_signs(dec, prev_factors);
        prev_factors = dec.factors;
        cores.push_back(dec.core);
        if (cores.size() > m) cores.pop_front();
        // Mean over the cores held so far, so the noise variances are smoothed
        // from the first iteration on.
        const DenseTensor g_bar = floor_magnitude(window_mean(cores), floor);

        if (ne > 0) {
            Rng rng = make_stream(cfg.seed, {stream::noise, static_cast<std::uint64_t>(t)});
            const auto e = draw_noise_cores(g_bar, cfg.lambda, cfg.n_e, rng);
            const auto z = build_noise_predictors(e, dec.factors);
            for (Eigen::Index j = 0; j < ne; ++j) {
                const auto zj = z[static_cast<std::size_t>(j)].as_vector();
                aug.x.row(n + j).tail(k - off) = zj.transpose();
                aug.x.row(n + ne + j).tail(k - off) = -zj.transpose();
            }
        }

        GlmFit step;
        try {
            step = irls_fit(aug, cfg.glm);
        } catch (const GlmError& err) {
            throw GlmError("inner GLM fit failed at iteration " + std::to_string(t) + ": " + err.what());
        }
        std::tie(icpt, b_hat) = split_coefficients(step.coefficients, shape, cfg.intercept);
        const double loss = data_loss(prep, ds.family, icpt, b_hat);
        if (!std::isfinite(loss)) throw GlmError("non-finite data loss at iteration " + std::to_string(t));

        b_hist.push_back(b_hat);
        loss_hist.push_back(loss);
        icpt_hist.push_back(icpt);
        if (b_hist.size() > m) {
            b_hist.pop_front();
            loss_hist.pop_front();
            icpt_hist.pop_front();
        }
        const bool full = static_cast<std::size_t>(t) > m;
        b_bar_prev = std::move(b_bar);
        l_bar_prev = l_bar;
        b_bar = full ? window_mean(b_hist) : b_hat;
        l_bar = full ? window_mean(loss_hist) : loss;
        icpt_bar = full ? window_mean(icpt_hist) : icpt;
        fr.trace.push_back(l_bar);
        fr.iterations = t;

        // Before the window fills, l_bar and b_bar are single noisy iterates.
        if (full) {
            const bool loss_stop = std::abs(l_bar - l_bar_prev) <= cfg.tau;
            const bool coef_stop = cfg.eta > 0.0 && (b_bar - b_bar_prev).l1_norm() <= cfg.eta;
            if (loss_stop || coef_stop) {
                fr.converged = true;
                break;
            }
        }
    }

    TuckerFactors final_dec = hosvd(b_bar, ranks);
    for (double& g : final_dec.core.data())
        if (std::abs(g) <= cfg.tau0) g = 0.0;
    fr.coefficients = tucker_reconstruct(final_dec);
    fr.raw_average = b_bar;
    fr.tucker = std::move(final_dec);
    fr.intercept = cfg.intercept ? icpt_bar : 0.0;
    return fr;
}

}  // namespace tenreg
