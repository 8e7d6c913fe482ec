#pragma once

#include "tenreg/model.hpp"
#include "tenreg/rng.hpp"

#include <cstdint>
#include <vector>

namespace tenreg {

struct NaConfig {
    std::size_t n_e = 62;          // noise rows per block
    double lambda = 50.0;          // noise scale
    std::vector<std::size_t> ranks;  // empty means full ranks
    int max_iter = 30000;          // T
    std::size_t window = 600;      // m
    double tau = 0.01;             // stop on |change in averaged loss|
    double eta = 0.0;              // stop on l1 change in averaged B; 0 disables
    double tau0 = 1e-6;            // final core threshold
    double c = 1e-7;               // magnitude floor guard for averaged core entries
    std::uint64_t seed = 0;
    bool intercept = true;
    ScaleMode scale = ScaleMode::pooled;
    GlmOptions glm;

    /// Defaults of the published simulation study for a family.
    static NaConfig full_scale(GlmFamily family);
    /// Reduced iteration budget for quick runs (shorter T and window).
    static NaConfig desk_scale(GlmFamily family);

    std::vector<std::size_t> resolved_ranks(const Shape& shape) const;
    void validate(const Shape& shape) const;
    nlohmann::ordered_json to_json() const;
};

/// e_y values for the noise rows: gaussian zeros, binomial ceil(n_e/2) zeros
/// then ones, poisson ones.
Eigen::VectorXd noise_responses(GlmFamily family, std::size_t n_e);

/// n_e cores with independent entries e_p ~ N(0, lambda / g_p^2).
std::vector<DenseTensor> draw_noise_cores(const DenseTensor& g_bar, double lambda, std::size_t n_e,
                                          Rng& rng);

/// Z_j = E_j x_1 U_1 ... x_D U_D.
std::vector<DenseTensor> build_noise_predictors(const std::vector<DenseTensor>& cores,
                                                const std::vector<Eigen::MatrixXd>& factors);

/// Original rows, then (Z_j, e_y_j) for each j, then (-Z_j, e_y_j).
TensorDataset augment(const TensorDataset& ds, const std::vector<DenseTensor>& z,
                      const Eigen::VectorXd& e_y);

/// Replaces each entry by sign(g) * max(|g|, floor); zero maps to +floor.
DenseTensor floor_magnitude(const DenseTensor& g, double floor);

/// Runs the noise-augmented iteration on ds (standardized internally).
/// Noise variances come from the mean of the last `window` cores; the stop
/// rules are checked only once the window is full.
FitResult fit_na0ct2(const TensorDataset& ds, const NaConfig& cfg);

/// Number of full-rank HOSVD core entries with |g| <= tau0.
std::size_t core_zero_count(const DenseTensor& b, double tau0);

}  // namespace tenreg
