#include "tenreg/simbench.hpp"

#include "tenreg/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace tenreg {

DenseTensor tile_base_values(const std::vector<double>& base, const Shape& shape) {
    if (base.empty()) throw DomainError("tile_base_values: no base values");
    DenseTensor b(shape);
    for (std::size_t p = 0; p < b.size(); ++p) b[p] = base[p % base.size()];
    return b;
}

DenseTensor make_true_B(GlmFamily family, std::uint64_t seed) {
    Rng rng = make_stream(seed, {stream::truth, static_cast<std::uint64_t>(family)});
    std::vector<double> base(8);
    if (family == GlmFamily::poisson) {
        std::uniform_real_distribution<double> u(0.0, 0.3);
        for (double& v : base) v = u(rng);
    } else {
        std::normal_distribution<double> z;
        for (double& v : base) v = z(rng);
    }
    DenseTensor b = tile_base_values(base, {4, 4, 4});
    const std::size_t nonzero = b.size() - core_zero_count(b, 1e-8);
    if (nonzero != 2)
        throw std::logic_error("true coefficient construction produced " + std::to_string(nonzero) +
                               " nonzero core entries instead of 2 (seed " + std::to_string(seed) + ")");
    return b;
}

const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> names{"na0ct2", "tucker", "tucker-l1", "cp", "cp-l2", "vec", "vec-l1"};
    return names;
}

SimDesign SimDesign::defaults(GlmFamily family, bool full_scale) {
    SimDesign d;
    d.family = family;
    d.methods = known_methods();
    d.na = full_scale ? NaConfig::full_scale(family) : NaConfig::desk_scale(family);
    switch (family) {
        case GlmFamily::gaussian: break;
        case GlmFamily::binomial:
            d.x_sd = 0.25;
            d.zero_tau = 0.05;
            break;
        case GlmFamily::poisson:
            d.n_train = 200;
            d.zero_tau = 0.05;
            d.tucker_l1_lambda = 1e-3;
            break;
    }
    d.cp.ranks = {d.cp_rank};
    if (full_scale) d.repeats = 200;
    return d;
}

void SimDesign::validate() const {
    validate_shape(shape);
    if (n_train < 2 || n_test < 1) throw DomainError("need n_train >= 2 and n_test >= 1");
    if (repeats < 1) throw DomainError("repeats must be at least 1");
    if (methods.empty()) throw DomainError("no methods selected");
    for (const auto& m : methods)
        if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
            throw DomainError("unknown method '" + m + "'");
    if (!(zero_tau > 0.0)) throw DomainError("zero threshold must be positive");
    if (std::find(methods.begin(), methods.end(), "na0ct2") != methods.end()) na.validate(shape);
}

nlohmann::ordered_json SimDesign::to_json() const {
    return {{"family", family_name(family)},
            {"shape", shape},
            {"n_train", n_train},
            {"n_test", n_test},
            {"b_seed", b_seed},
            {"seed", seed},
            {"repeats", repeats},
            {"methods", methods},
            {"zero_tau", zero_tau},
            {"intercept", intercept},
            {"scale", scale_mode_name(scale)},
            {"na0ct2", na.to_json()},
            {"tucker", tucker.to_json()},
            {"cp", cp.to_json()},
            {"tucker_l1_lambda", tucker_l1_lambda}};
}

namespace {

TensorDataset draw_set(const SimDesign& design, const DenseTensor& b, std::size_t n, Rng& rng) {
    TensorDataset ds;
    ds.family = design.family;
    std::normal_distribution<double> x_dist(design.family == GlmFamily::poisson ? design.x_loc : 0.0,
                                            design.family == GlmFamily::poisson ? design.x_spread : design.x_sd);
    std::normal_distribution<double> noise(0.0, design.noise_sd);
    for (std::size_t i = 0; i < n; ++i) {
        DenseTensor x(design.shape);
        for (double& v : x.data()) {
            v = x_dist(rng);
            if (design.family == GlmFamily::poisson) v = design.x_scale * std::abs(v) + design.x_shift;
        }
        const double theta = inner(x, b);
        double y = 0.0;
        switch (design.family) {
            case GlmFamily::gaussian: y = theta + noise(rng); break;
            case GlmFamily::binomial: y = std::bernoulli_distribution(mean_of(design.family, theta))(rng) ? 1.0 : 0.0; break;
            case GlmFamily::poisson: y = static_cast<double>(std::poisson_distribution<long>(std::exp(theta))(rng)); break;
        }
        ds.predictors.push_back(std::move(x));
        ds.responses.push_back(y);
    }
    return ds;
}

}  // namespace

SimData gen_dataset(const SimDesign& design, std::size_t repeat) {
    if (design.shape != Shape{4, 4, 4}) throw DomainError("the simulation truth is defined for shape 4x4x4");
    SimData out;
    out.true_b = make_true_B(design.family, design.b_seed);
    const auto r = static_cast<std::uint64_t>(repeat);
    Rng train_rng = make_stream(design.seed, {r, stream::train});
    Rng test_rng = make_stream(design.seed, {r, stream::test});
    out.train = draw_set(design, out.true_b, design.n_train, train_rng);
    out.test = draw_set(design, out.true_b, design.n_test, test_rng);
    return out;
}

double prediction_error(GlmFamily family, const std::vector<double>& predicted, const std::vector<double>& observed) {
    if (predicted.size() != observed.size()) throw DomainError("prediction and response counts differ");
    if (predicted.empty()) throw DomainError("no predictions to score");
    double total = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (family == GlmFamily::binomial) total += ((predicted[i] > 0.5 ? 1.0 : 0.0) != observed[i]) ? 1.0 : 0.0;
        else total += std::abs(predicted[i] - observed[i]);
    }
    return total / static_cast<double>(predicted.size());
}

MetricRecord metrics(const FitResult& fitted, const TensorDataset& test, const DenseTensor& true_b, double tau0) {
    MetricRecord m;
    m.prediction_error = prediction_error(fitted.family, predict(fitted, test.predictors), test.responses);
    const DenseTensor raw = fitted.transform.unscale_coefficients(fitted.coefficients);
    m.mse_b = (raw - true_b).as_vector().squaredNorm() / static_cast<double>(raw.size());
    m.zero_count = core_zero_count(fitted.coefficients, tau0);
    return m;
}

FitResult fit_method(const std::string& method, const TensorDataset& train, const SimDesign& design,
                     std::size_t repeat) {
    const std::uint64_t seed = make_stream(design.seed, {static_cast<std::uint64_t>(repeat), stream::noise})();
    if (method == "na0ct2") {
        NaConfig cfg = design.na;
        cfg.seed = seed;
        cfg.intercept = design.intercept;
        cfg.scale = design.scale;
        return fit_na0ct2(train, cfg);
    }
    if (method == "tucker" || method == "tucker-l1") {
        BlockRelaxConfig cfg = design.tucker;
        cfg.seed = seed;
        cfg.intercept = design.intercept;
        cfg.scale = design.scale;
        cfg.lambda = 0.0;
        cfg.cross_validate = false;
        if (method == "tucker-l1") {
            if (design.tucker_l1_lambda > 0.0) cfg.lambda = design.tucker_l1_lambda;
            else cfg.cross_validate = true;
        }
        return fit_tucker_tr(train, cfg);
    }
    if (method == "cp" || method == "cp-l2") {
        BlockRelaxConfig cfg = design.cp;
        cfg.seed = seed;
        cfg.intercept = design.intercept;
        cfg.scale = design.scale;
        cfg.lambda = 0.0;
        cfg.cross_validate = method == "cp-l2";
        return fit_cp_tr(train, cfg);
    }
    if (method == "vec" || method == "vec-l1") {
        VectorizedConfig cfg;
        cfg.lasso = method == "vec-l1";
        cfg.seed = seed;
        cfg.intercept = design.intercept;
        cfg.scale = design.scale;
        return fit_vectorized(train, cfg);
    }
    throw DomainError("unknown method '" + method + "'");
}

const MethodSummary& BenchReport::method(const std::string& name) const {
    for (const auto& m : methods)
        if (m.method == name) return m;
    throw DomainError("report has no method '" + name + "'");
}

namespace {

void summarize(MethodSummary& s) {
    std::vector<double> errs, zeros;
    double mse_sum = 0.0;
    for (const auto& r : s.repeats) {
        if (r.failed) {
            ++s.failures;
            continue;
        }
        if (!r.converged) ++s.nonconverged;
        errs.push_back(r.metrics.prediction_error);
        zeros.push_back(static_cast<double>(r.metrics.zero_count));
        mse_sum += r.metrics.mse_b;
    }
    auto mean_sd = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = sd = 0.0;
        if (v.empty()) return;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        if (v.size() < 2) return;
        for (double x : v) sd += (x - mean) * (x - mean);
        sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
    };
    mean_sd(errs, s.mean_error, s.sd_error);
    mean_sd(zeros, s.mean_zero_count, s.sd_zero_count);
    if (!errs.empty()) s.mean_mse_b = mse_sum / static_cast<double>(errs.size());
    s.mse_of_mean_b = std::nan("");
}

}  // namespace

BenchReport run_benchmark(const SimDesign& design) {
    design.validate();
    const std::size_t nm = design.methods.size(), nr = design.repeats;
    BenchReport report;
    report.design = design;
    report.methods.resize(nm);
    for (std::size_t k = 0; k < nm; ++k) {
        report.methods[k].method = design.methods[k];
        report.methods[k].repeats.resize(nr);
    }
    const DenseTensor truth = make_true_B(design.family, design.b_seed);

    // Each repeat's data is generated once and shared across methods; every
    // task writes only its own slot.
    std::vector<SimData> data(nr);
    std::atomic<std::size_t> next_data{0}, next_task{0};
    std::size_t threads = design.threads ? design.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, nm * nr);

    auto data_worker = [&] {
        for (std::size_t r; (r = next_data++) < nr;) data[r] = gen_dataset(design, r);
    };
    auto fit_worker = [&] {
        for (std::size_t task; (task = next_task++) < nm * nr;) {
            const std::size_t k = task % nm, r = task / nm;
            RepeatOutcome& out = report.methods[k].repeats[r];
            try {
                const FitResult fr = fit_method(design.methods[k], data[r].train, design, r);
                out.metrics = metrics(fr, data[r].test, data[r].true_b, design.zero_tau);
                out.raw_b = fr.transform.unscale_coefficients(fr.coefficients);
                out.converged = fr.converged;
            } catch (const std::exception& e) {
                out.failed = true;
                out.error = e.what();
            }
        }
    };
    auto run_pool = [&](auto& fn) {
        std::vector<std::thread> pool;
        for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(fn);
        fn();
        for (auto& t : pool) t.join();
    };
    run_pool(data_worker);
    run_pool(fit_worker);

    for (auto& s : report.methods) {
        summarize(s);
        DenseTensor mean_b = DenseTensor::zeros(truth.shape());
        std::size_t ok = 0;
        for (const auto& r : s.repeats)
            if (!r.failed) {
                mean_b += r.raw_b;
                ++ok;
            }
        if (ok) {
            mean_b *= 1.0 / static_cast<double>(ok);
            s.mse_of_mean_b = (mean_b - truth).as_vector().squaredNorm() / static_cast<double>(truth.size());
        }
    }
    return report;
}

nlohmann::ordered_json BenchReport::to_json() const {
    nlohmann::ordered_json out;
    out["design"] = design.to_json();
    out["methods"] = nlohmann::ordered_json::array();
    for (const auto& s : methods) {
        nlohmann::ordered_json m;
        m["method"] = s.method;
        m["mean_prediction_error"] = s.mean_error;
        m["sd_prediction_error"] = s.sd_error;
        m["mse_b_of_mean_estimate"] = s.mse_of_mean_b;
        m["mean_per_repeat_mse_b"] = s.mean_mse_b;
        m["mean_zero_count"] = s.mean_zero_count;
        m["sd_zero_count"] = s.sd_zero_count;
        m["failures"] = s.failures;
        m["nonconverged"] = s.nonconverged;
        nlohmann::ordered_json reps = nlohmann::ordered_json::array();
        for (const auto& r : s.repeats) {
            nlohmann::ordered_json j;
            j["failed"] = r.failed;
            if (r.failed) {
                j["error"] = r.error;
            } else {
                j["converged"] = r.converged;
                j["prediction_error"] = r.metrics.prediction_error;
                j["mse_b"] = r.metrics.mse_b;
                j["zero_count"] = r.metrics.zero_count;
            }
            reps.push_back(std::move(j));
        }
        m["repeats"] = std::move(reps);
        out["methods"].push_back(std::move(m));
    }
    return out;
}

std::string BenchReport::to_markdown() const {
    const char* err_label = design.family == GlmFamily::binomial ? "Misclassification" : "Prediction error";
    std::ostringstream md;
    md << "| Method | " << err_label << " (SD) | MSE of B | Zeros in core (SD) | Failures |\n";
    md << "|---|---|---|---|---|\n";
    char buf[256];
    for (const auto& s : methods) {
        std::snprintf(buf, sizeof buf, "| %s | %.4f (%.4f) | %.6f | %.2f (%.2f) | %zu |\n", s.method.c_str(),
                      s.mean_error, s.sd_error, s.mse_of_mean_b, s.mean_zero_count, s.sd_zero_count, s.failures);
        md << buf;
    }
    std::snprintf(buf, sizeof buf,
                  "\nFamily %s, %zu repeats, seed %llu. MSE of B uses the across-repeat mean estimate; "
                  "zeros counted at |g| <= %g.\n",
                  family_name(design.family).c_str(), design.repeats,
                  static_cast<unsigned long long>(design.seed), design.zero_tau);
    md << buf;
    return md.str();
}

}  // namespace tenreg
