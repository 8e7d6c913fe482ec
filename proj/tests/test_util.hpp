#pragma once

#include "tenreg/tensor.hpp"

#include <random>
#include <vector>

namespace tenreg::testing {

inline Shape random_shape(std::mt19937_64& rng, std::size_t max_order = 4, std::size_t max_dim = 4) {
    std::uniform_int_distribution<std::size_t> order(1, max_order), dim(1, max_dim);
    Shape s(order(rng));
    for (auto& d : s) d = dim(rng);
    return s;
}

/// Small integers keep every sum and product exact in double precision.
inline DenseTensor random_int_tensor(const Shape& shape, std::mt19937_64& rng, int lo = -9, int hi = 9) {
    std::uniform_int_distribution<int> v(lo, hi);
    DenseTensor t(shape);
    for (double& x : t.data()) x = v(rng);
    return t;
}

inline DenseTensor random_tensor(const Shape& shape, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    DenseTensor t(shape);
    for (double& x : t.data()) x = z(rng);
    return t;
}

inline Eigen::MatrixXd random_int_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> v(-9, 9);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = v(rng);
    return m;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
    return m;
}

/// I x R with orthonormal columns.
inline Eigen::MatrixXd random_orthonormal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(rows, rows, rng));
    return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

/// Brute-force 1-based position of a 0-based multi-index.
inline std::size_t oracle_position(const std::vector<std::size_t>& idx, const Shape& shape) {
    std::size_t pos = 1, stride = 1;
    for (std::size_t d = 0; d < shape.size(); ++d) {
        pos += idx[d] * stride;
        stride *= shape[d];
    }
    return pos;
}

/// Calls f(idx) for every 0-based multi-index, first index fastest.
template <class F>
void for_each_index(const Shape& shape, F&& f) {
    std::vector<std::size_t> idx(shape.size(), 0);
    const std::size_t total = num_elements(shape);
    for (std::size_t n = 0; n < total; ++n) {
        f(idx);
        for (std::size_t d = 0; d < shape.size(); ++d) {
            if (++idx[d] < shape[d]) break;
            idx[d] = 0;
        }
    }
}

/// Entry (i_d, j) with j = sum_{k != d} i_k prod_{m < k, m != d} I_m.
inline Eigen::MatrixXd oracle_matricize(const DenseTensor& t, std::size_t mode) {
    const Shape& s = t.shape();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(s[mode]), static_cast<Eigen::Index>(t.size() / s[mode]));
    for_each_index(s, [&](const std::vector<std::size_t>& idx) {
        std::size_t j = 0, stride = 1;
        for (std::size_t k = 0; k < s.size(); ++k) {
            if (k == mode) continue;
            j += idx[k] * stride;
            stride *= s[k];
        }
        m(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(j)) = t[oracle_position(idx, s) - 1];
    });
    return m;
}

/// (t x_d a)_{..j..} = sum_i t_{..i..} a_{j i} by direct summation.
inline DenseTensor oracle_mode_product(const DenseTensor& t, const Eigen::MatrixXd& a, std::size_t mode) {
    Shape out_shape = t.shape();
    out_shape[mode] = static_cast<std::size_t>(a.rows());
    DenseTensor out(out_shape);
    for_each_index(out_shape, [&](const std::vector<std::size_t>& idx) {
        std::vector<std::size_t> src = idx;
        double sum = 0.0;
        for (std::size_t i = 0; i < t.dim(mode); ++i) {
            src[mode] = i;
            sum += t[oracle_position(src, t.shape()) - 1] * a(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(i));
        }
        out[oracle_position(idx, out_shape) - 1] = sum;
    });
    return out;
}

inline double oracle_inner(const DenseTensor& x, const DenseTensor& y) {
    double sum = 0.0;
    for_each_index(x.shape(), [&](const std::vector<std::size_t>& idx) {
        const std::size_t p = oracle_position(idx, x.shape()) - 1;
        sum += x[p] * y[p];
    });
    return sum;
}

}  // namespace tenreg::testing
