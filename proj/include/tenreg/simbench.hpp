#pragma once

#include "tenreg/baselines.hpp"
#include "tenreg/noise_aug.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tenreg {

/// Fills a tensor of `shape` by repeating `base` in vectorization order.
DenseTensor tile_base_values(const std::vector<double>& base, const Shape& shape);

/// 8 base values (N(0,1), or U(0, 0.3) for poisson) tiled over 4x4x4. Throws
/// std::logic_error unless the full-rank HOSVD core has exactly 2 entries
/// above 1e-8.
DenseTensor make_true_B(GlmFamily family, std::uint64_t seed);

/// Methods understood by the runner and the command line.
const std::vector<std::string>& known_methods();

struct SimDesign {
    GlmFamily family = GlmFamily::gaussian;
    Shape shape{4, 4, 4};
    std::size_t n_train = 300;
    std::size_t n_test = 200;
    double noise_sd = 0.5;          // gaussian response noise
    double x_sd = 1.0;              // gaussian / binomial predictor sd
    double x_loc = 0.1;             // poisson: X = x_scale * |N(x_loc, x_spread^2)| + x_shift
    double x_spread = 0.3;
    double x_scale = -2.0;
    double x_shift = 0.6;
    std::uint64_t b_seed = 1;
    std::uint64_t seed = 1;
    std::size_t repeats = 10;
    std::size_t threads = 0;        // 0 means hardware concurrency
    std::vector<std::string> methods;
    NaConfig na;
    BlockRelaxConfig tucker;
    BlockRelaxConfig cp;
    std::size_t cp_rank = 6;
    double tucker_l1_lambda = 0.0;  // > 0 fixes the tucker-l1 penalty instead of CV
    double zero_tau = 0.005;        // core-zero threshold for the metric
    bool intercept = true;          // applied to every method
    ScaleMode scale = ScaleMode::pooled;  // applied to every method

    /// Simulation study settings for a family at reduced iteration budget,
    /// or at the published budget when full_scale is set.
    static SimDesign defaults(GlmFamily family, bool full_scale = false);
    void validate() const;
    nlohmann::ordered_json to_json() const;
};

struct SimData {
    TensorDataset train;
    TensorDataset test;
    DenseTensor true_b;
};

/// Deterministic in (design.seed, repeat); the truth depends on b_seed only.
SimData gen_dataset(const SimDesign& design, std::size_t repeat);

/// Mean |y_hat - y| for gaussian/poisson, misclassification rate at 0.5 for
/// binomial.
double prediction_error(GlmFamily family, const std::vector<double>& predicted, const std::vector<double>& observed);

struct MetricRecord {
    double prediction_error = 0.0;
    double mse_b = 0.0;           // mean squared entry error of the raw-scale estimate
    std::size_t zero_count = 0;   // full-rank core entries of the fitted tensor with |g| <= tau0
};

MetricRecord metrics(const FitResult& fitted, const TensorDataset& test, const DenseTensor& true_b, double tau0);

/// Fits one named method with per-repeat seeding.
FitResult fit_method(const std::string& method, const TensorDataset& train, const SimDesign& design,
                     std::size_t repeat);

struct RepeatOutcome {
    bool failed = false;
    bool converged = true;
    std::string error;
    MetricRecord metrics;
    DenseTensor raw_b;            // raw-scale coefficient estimate
};

struct MethodSummary {
    std::string method;
    std::vector<RepeatOutcome> repeats;
    double mean_error = 0.0;
    double sd_error = 0.0;
    double mse_of_mean_b = 0.0;   // MSE of the across-repeat mean estimate
    double mean_mse_b = 0.0;      // mean of per-repeat MSEs
    double mean_zero_count = 0.0;
    double sd_zero_count = 0.0;
    std::size_t failures = 0;
    std::size_t nonconverged = 0;
};

struct BenchReport {
    SimDesign design;
    std::vector<MethodSummary> methods;

    const MethodSummary& method(const std::string& name) const;
    nlohmann::ordered_json to_json() const;
    std::string to_markdown() const;
};

BenchReport run_benchmark(const SimDesign& design);

}  // namespace tenreg
