#pragma once

#include "tenreg/model.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace tenreg {

struct BlockRelaxConfig {
    std::vector<std::size_t> ranks;  // Tucker ranks per mode, or {R} for CP; empty means full Tucker ranks
    int max_iter = 200;              // T
    double eta = 1e-4;               // stop on l1 change of B between sweeps
    double lambda = 0.0;             // core l1 (Tucker) or factor l2 (CP) strength
    bool cross_validate = false;     // choose lambda by K-fold CV over `grid`
    std::vector<double> grid;        // empty means an automatic geometric grid
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    bool intercept = true;
    ScaleMode scale = ScaleMode::pooled;
    GlmOptions glm;

    void validate() const;
    nlohmann::ordered_json to_json() const;
};

/// Design whose rows satisfy row_i . vec(U_d) = <X_i, core x_1 U_1 ... x_D U_D>
/// for any U_d, vec taken column-major.
Eigen::MatrixXd factor_block_design(const std::vector<DenseTensor>& xs, const TuckerFactors& f,
                                    std::size_t mode);

/// CP analogue: row_i . vec(U_d) = <X_i, sum_r w_r u_1r o ... o u_Dr>.
Eigen::MatrixXd factor_block_design(const std::vector<DenseTensor>& xs, const CpFactors& f,
                                    std::size_t mode);

/// Rows vectorize(X_i x_1 U_1^T ... x_D U_D^T), linear in vec(core).
Eigen::MatrixXd core_block_design(const std::vector<DenseTensor>& xs,
                                  const std::vector<Eigen::MatrixXd>& factors);

/// Tucker block relaxation. With lambda > 0 the core block carries an l1
/// penalty ("tucker-l1"); factor blocks are unpenalized.
FitResult fit_tucker_tr(const TensorDataset& ds, const BlockRelaxConfig& cfg);

/// CP block relaxation with an optional l2 penalty on every factor block
/// ("cp-l2").
FitResult fit_cp_tr(const TensorDataset& ds, const BlockRelaxConfig& cfg);

struct VectorizedConfig {
    bool lasso = false;
    std::optional<double> lambda;   // lasso strength; CV when absent
    std::size_t grid_size = 10;
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    bool intercept = true;
    ScaleMode scale = ScaleMode::pooled;
    GlmOptions glm;
};

/// GLM on vectorized predictors ("vec" or "vec-l1").
FitResult fit_vectorized(const TensorDataset& ds, const VectorizedConfig& cfg);

}  // namespace tenreg
