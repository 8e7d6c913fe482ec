#pragma once

#include "tenreg/tensor.hpp"

#include <cstdint>
#include <vector>

namespace tenreg {

/// B = core x_1 U_1 x_2 ... x_D U_D, U_d of shape I_d x R_d with orthonormal
/// columns when produced by hosvd/hooi.
struct TuckerFactors {
    DenseTensor core;
    std::vector<Eigen::MatrixXd> factors;

    std::vector<std::size_t> ranks() const { return core.shape(); }
    Shape full_shape() const;
};

/// B = sum_r weights[r] * u_1^r o ... o u_D^r with unit-norm columns.
struct CpFactors {
    Eigen::VectorXd weights;
    std::vector<Eigen::MatrixXd> factors;

    std::size_t rank() const { return static_cast<std::size_t>(weights.size()); }
    Shape full_shape() const;
};

class DecompositionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flips each column so its largest-magnitude entry is positive (near-ties
/// resolved toward the lowest row index).
void canonicalize_signs(Eigen::MatrixXd& columns);

/// Leading `rank` left singular vectors of m, sign-canonicalized.
Eigen::MatrixXd leading_left_singular_vectors(const Eigen::MatrixXd& m, std::size_t rank);

/// Truncated higher-order SVD.
TuckerFactors hosvd(const DenseTensor& t, const std::vector<std::size_t>& ranks);

struct HooiOptions {
    int max_sweeps = 50;
    double tol = 1e-12;  // relative change in reconstruction error
};

/// HOSVD-initialized higher-order orthogonal iteration. When sweep_errors is
/// given it receives the Frobenius reconstruction error of the HOSVD start
/// followed by the error after every sweep.
TuckerFactors hooi(const DenseTensor& t, const std::vector<std::size_t>& ranks,
                   const HooiOptions& opts = {}, std::vector<double>* sweep_errors = nullptr);

DenseTensor tucker_reconstruct(const TuckerFactors& f);

struct CpAlsOptions {
    int max_sweeps = 500;
    double tol = 1e-12;        // relative change in reconstruction error
    double ridge = 1e-10;      // damping applied to near-singular normal equations
    std::uint64_t seed = 0;    // only used to pad initial factors when R > I_d
};

/// Alternating least squares. When sweep_errors is given it receives the
/// Frobenius reconstruction error after every sweep.
CpFactors cp_als(const DenseTensor& t, std::size_t rank, const CpAlsOptions& opts = {},
                 std::vector<double>* sweep_errors = nullptr);

DenseTensor cp_reconstruct(const CpFactors& f);

/// Column-wise Khatri-Rao product of mats in the given order; the row index of
/// the last matrix varies fastest.
Eigen::MatrixXd khatri_rao(const std::vector<Eigen::MatrixXd>& mats);

enum class ParamKind { tucker, cp, full };

/// Free-parameter counts for a coefficient tensor under each
/// parameterization. For cp, ranks holds the single CP rank.
std::size_t count_params(const Shape& shape, const std::vector<std::size_t>& ranks, ParamKind kind);

double relative_error(const DenseTensor& approx, const DenseTensor& exact);

}  // namespace tenreg
