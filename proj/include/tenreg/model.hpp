#pragma once

#include "tenreg/decomp.hpp"
#include "tenreg/glm.hpp"
#include "tenreg/tensor.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace tenreg {

/// A fitted tensor regression. Coefficients live on the standardized
/// predictor scale; `transform` maps raw predictors onto that scale.
struct FitResult {
    std::string method;
    GlmFamily family = GlmFamily::gaussian;
    DenseTensor coefficients;
    bool has_intercept = false;
    double intercept = 0.0;
    DenseTensor raw_average;               // pre-threshold window average (na0ct2 only)
    std::optional<TuckerFactors> tucker;
    std::optional<CpFactors> cp;
    std::vector<double> trace;
    int iterations = 0;
    bool converged = true;
    StandardizationTransform transform;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();

    const Shape& shape() const { return coefficients.shape(); }
};

/// Standardized predictors laid out as GLM design rows, with an optional
/// leading intercept column.
struct PreparedData {
    Standardized standardized;
    Eigen::MatrixXd design;
    Eigen::VectorXd y;
    bool intercept = false;

    Eigen::Index offset() const { return intercept ? 1 : 0; }
};

PreparedData prepare(const TensorDataset& ds, bool intercept, ScaleMode scale = ScaleMode::pooled);

/// Design rows for new predictors under an existing transform.
Eigen::MatrixXd design_rows(const std::vector<DenseTensor>& xs, const StandardizationTransform& tr,
                            bool intercept);

/// Splits a GLM coefficient vector into (intercept, tensor).
std::pair<double, DenseTensor> split_coefficients(const Eigen::VectorXd& beta, const Shape& shape,
                                                  bool intercept);
Eigen::VectorXd join_coefficients(double intercept, const DenseTensor& b, bool intercept_column);

/// Mask marking the intercept column (if any) as unpenalized.
std::vector<bool> intercept_mask(Eigen::Index cols, bool intercept);

/// Linear predictors intercept + <standardize(X_i), B>.
Eigen::VectorXd linear_predictors(const FitResult& fr, const std::vector<DenseTensor>& xs);

/// b'(linear predictor) per tensor.
std::vector<double> predict(const FitResult& fr, const std::vector<DenseTensor>& xs);

/// Negative log-likelihood of the original observations under (intercept, B).
double data_loss(const PreparedData& prep, GlmFamily family, double intercept, const DenseTensor& b);

/// Unpenalized GLM on the prepared design when it has fewer columns than rows
/// and the fit converges; ridge 1e-3 on the tensor coefficients otherwise.
GlmFit vectorized_start(const PreparedData& prep, GlmFamily family, const GlmOptions& opts = {});

}  // namespace tenreg
