#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tenreg {

using Shape = std::vector<std::size_t>;

/// Thrown for shape, mode, or index violations. Carries a human-readable
/// message naming the offending argument.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense D-way array stored in vectorization order: the first index varies
/// fastest, so element (i_1..i_D) (0-based) sits at
/// sum_d i_d * prod_{d'<d} I_{d'}.
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(Shape shape);
    DenseTensor(Shape shape, std::vector<double> data);

    static DenseTensor zeros(const Shape& shape) { return DenseTensor(shape); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t order() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t mode) const { return shape_.at(mode); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t linear) { return data_[linear]; }
    double operator[](std::size_t linear) const { return data_[linear]; }

    /// 0-based multi-index access.
    double& at(std::span<const std::size_t> index);
    double at(std::span<const std::size_t> index) const;
    double& at(std::initializer_list<std::size_t> index) {
        return at(std::span<const std::size_t>(index.begin(), index.size()));
    }
    double at(std::initializer_list<std::size_t> index) const {
        return at(std::span<const std::size_t>(index.begin(), index.size()));
    }

    Eigen::Map<const Eigen::VectorXd> as_vector() const {
        return {data_.data(), static_cast<Eigen::Index>(data_.size())};
    }
    Eigen::Map<Eigen::VectorXd> as_vector() {
        return {data_.data(), static_cast<Eigen::Index>(data_.size())};
    }

    DenseTensor& operator+=(const DenseTensor& other);
    DenseTensor& operator-=(const DenseTensor& other);
    DenseTensor& operator*=(double s);

    double frobenius_norm() const { return as_vector().norm(); }
    double l1_norm() const { return as_vector().lpNorm<1>(); }

    friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

DenseTensor operator+(DenseTensor a, const DenseTensor& b);
DenseTensor operator-(DenseTensor a, const DenseTensor& b);
DenseTensor operator*(double s, DenseTensor a);

std::size_t num_elements(const Shape& shape);
void validate_shape(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// 1-based linear position of a 1-based multi-index, first index fastest.
std::size_t vec_index(std::span<const std::size_t> multi_index, const Shape& shape);

/// Inverse of vec_index for 0-based indices.
std::vector<std::size_t> unravel(std::size_t linear, const Shape& shape);

std::vector<double> vectorize(const DenseTensor& t);

/// Mode-d unfolding (0-based mode). Column index runs over the remaining
/// modes in increasing order with the earliest fastest.
Eigen::MatrixXd matricize(const DenseTensor& t, std::size_t mode);

/// Inverse of matricize.
DenseTensor fold(const Eigen::MatrixXd& m, std::size_t mode, const Shape& shape);

/// t x_mode a, with a of shape J x I_mode.
DenseTensor mode_product(const DenseTensor& t, const Eigen::MatrixXd& a, std::size_t mode);

/// Applies a[k] along mode k for every k in turn.
DenseTensor multi_mode_product(const DenseTensor& t, std::span<const Eigen::MatrixXd> mats,
                               bool transpose = false);

double inner(const DenseTensor& x, const DenseTensor& y);

DenseTensor outer_rank1(std::span<const Eigen::VectorXd> vectors);

enum class GlmFamily { gaussian, binomial, poisson };

GlmFamily parse_family(const std::string& name);
std::string family_name(GlmFamily family);

struct TensorDataset {
    std::vector<DenseTensor> predictors;
    std::vector<double> responses;
    GlmFamily family = GlmFamily::gaussian;

    std::size_t size() const noexcept { return responses.size(); }
    const Shape& shape() const;

    /// Throws DomainError when counts, shapes, or response support disagree.
    void validate() const;

    /// Row i is vectorize(predictors[i]).
    Eigen::MatrixXd design() const;
};

struct StandardizationTransform {
    DenseTensor means;
    DenseTensor sds;

    DenseTensor apply(const DenseTensor& x) const;
    /// Converts a coefficient tensor fitted on standardized predictors back
    /// to the raw predictor scale (elementwise division by sds).
    DenseTensor unscale_coefficients(const DenseTensor& b) const;
    /// The constant the raw-scale model absorbs: -<means / sds, b>.
    double centering_offset(const DenseTensor& b) const;
};

struct Standardized {
    TensorDataset data;
    StandardizationTransform transform;
};

/// position: every position scaled by its own sd. pooled: one sd shared by
/// all positions, which keeps the multilinear rank of the coefficient tensor.
enum class ScaleMode { position, pooled };

ScaleMode parse_scale_mode(const std::string& name);
std::string scale_mode_name(ScaleMode mode);

/// Per-position centering, then scaling (n-1 denominator) per `mode`.
/// Zero-variance positions are centered only and recorded with sd = 1.
Standardized standardize(const TensorDataset& ds, ScaleMode mode = ScaleMode::position);

TensorDataset apply_standardization(const TensorDataset& ds, const StandardizationTransform& tr);

}  // namespace tenreg
