#include "tenreg/decomp.hpp"

#include "tenreg/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace tenreg {

Shape TuckerFactors::full_shape() const {
    Shape s;
    for (const auto& u : factors) s.push_back(static_cast<std::size_t>(u.rows()));
    return s;
}

Shape CpFactors::full_shape() const {
    Shape s;
    for (const auto& u : factors) s.push_back(static_cast<std::size_t>(u.rows()));
    return s;
}

void canonicalize_signs(Eigen::MatrixXd& columns) {
    for (Eigen::Index c = 0; c < columns.cols(); ++c) {
        auto col = columns.col(c);
        const double peak = col.cwiseAbs().maxCoeff();
        if (peak == 0.0) continue;
        for (Eigen::Index r = 0; r < col.size(); ++r) {
            if (std::abs(col[r]) >= peak * (1.0 - 1e-9)) {
                if (col[r] < 0.0) col = -col;
                break;
            }
        }
    }
}

Eigen::MatrixXd leading_left_singular_vectors(const Eigen::MatrixXd& m, std::size_t rank) {
    if (rank == 0 || rank > static_cast<std::size_t>(m.rows()))
        throw DomainError("rank " + std::to_string(rank) + " out of range [1, " +
                          std::to_string(m.rows()) + "]");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU);
    if (svd.info() != Eigen::Success) throw DecompositionError("SVD did not converge");
    Eigen::MatrixXd u = svd.matrixU().leftCols(static_cast<Eigen::Index>(rank));
    canonicalize_signs(u);
    return u;
}

namespace {

void check_ranks(const Shape& shape, const std::vector<std::size_t>& ranks) {
    if (ranks.size() != shape.size())
        throw DomainError("expected " + std::to_string(shape.size()) + " ranks, got " +
                          std::to_string(ranks.size()));
    for (std::size_t d = 0; d < shape.size(); ++d)
        if (ranks[d] < 1 || ranks[d] > shape[d])
            throw DomainError("rank " + std::to_string(ranks[d]) + " for mode " +
                              std::to_string(d + 1) + " outside [1, " + std::to_string(shape[d]) + "]");
}

DenseTensor project_core(const DenseTensor& t, const std::vector<Eigen::MatrixXd>& factors) {
    return multi_mode_product(t, factors, /*transpose=*/true);
}

}  // namespace

TuckerFactors hosvd(const DenseTensor& t, const std::vector<std::size_t>& ranks) {
    check_ranks(t.shape(), ranks);
    TuckerFactors f;
    f.factors.reserve(t.order());
    for (std::size_t d = 0; d < t.order(); ++d)
        f.factors.push_back(leading_left_singular_vectors(matricize(t, d), ranks[d]));
    f.core = project_core(t, f.factors);
    return f;
}

TuckerFactors hooi(const DenseTensor& t, const std::vector<std::size_t>& ranks,
                   const HooiOptions& opts, std::vector<double>* sweep_errors) {
    TuckerFactors f = hosvd(t, ranks);
    const double norm = t.frobenius_norm();
    double err = (tucker_reconstruct(f) - t).frobenius_norm();
    if (sweep_errors) sweep_errors->assign(1, err);
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        TuckerFactors next = f;
        for (std::size_t d = 0; d < t.order(); ++d) {
            DenseTensor y = t;
            for (std::size_t k = 0; k < t.order(); ++k)
                if (k != d) y = mode_product(y, next.factors[k].transpose(), k);
            next.factors[d] = leading_left_singular_vectors(matricize(y, d), ranks[d]);
        }
        next.core = project_core(t, next.factors);
        const double next_err = (tucker_reconstruct(next) - t).frobenius_norm();
        // Keep the previous iterate if rounding made this sweep worse.
        if (next_err > err) break;
        const double change = err - next_err;
        f = std::move(next);
        err = next_err;
        if (sweep_errors) sweep_errors->push_back(err);
        if (change <= opts.tol * std::max(norm, std::numeric_limits<double>::min())) break;
    }
    return f;
}

DenseTensor tucker_reconstruct(const TuckerFactors& f) {
    if (f.factors.size() != f.core.order())
        throw DomainError("tucker_reconstruct: core order " + std::to_string(f.core.order()) +
                          " but " + std::to_string(f.factors.size()) + " factors");
    return multi_mode_product(f.core, f.factors);
}

Eigen::MatrixXd khatri_rao(const std::vector<Eigen::MatrixXd>& mats) {
    if (mats.empty()) throw DomainError("khatri_rao: no matrices");
    const Eigen::Index r = mats.front().cols();
    Eigen::MatrixXd out = mats.front();
    for (std::size_t k = 1; k < mats.size(); ++k) {
        const auto& b = mats[k];
        if (b.cols() != r) throw DomainError("khatri_rao: column counts differ");
        Eigen::MatrixXd next(out.rows() * b.rows(), r);
        for (Eigen::Index c = 0; c < r; ++c)
            for (Eigen::Index i = 0; i < out.rows(); ++i)
                next.col(c).segment(i * b.rows(), b.rows()) = out(i, c) * b.col(c);
        out = std::move(next);
    }
    return out;
}

namespace {

// Khatri-Rao of every factor except `skip`, ordered so the row index matches
// the column index of matricize(t, skip).
Eigen::MatrixXd khatri_rao_except(const std::vector<Eigen::MatrixXd>& factors, std::size_t skip) {
    std::vector<Eigen::MatrixXd> mats;
    for (std::size_t k = factors.size(); k-- > 0;)
        if (k != skip) mats.push_back(factors[k]);
    if (mats.empty()) return Eigen::MatrixXd::Ones(1, factors.front().cols());
    return khatri_rao(mats);
}

}  // namespace

CpFactors cp_als(const DenseTensor& t, std::size_t rank, const CpAlsOptions& opts,
                 std::vector<double>* sweep_errors) {
    if (rank < 1) throw DomainError("CP rank must be at least 1");
    const std::size_t order = t.order();
    const auto r = static_cast<Eigen::Index>(rank);

    std::vector<Eigen::MatrixXd> factors(order);
    auto rng = make_stream(opts.seed, {0x43505f414c53ULL});
    std::normal_distribution<double> normal;
    for (std::size_t d = 0; d < order; ++d) {
        const auto extent = static_cast<Eigen::Index>(t.dim(d));
        const auto lead = std::min(extent, r);
        Eigen::MatrixXd u(extent, r);
        u.leftCols(lead) = leading_left_singular_vectors(matricize(t, d), static_cast<std::size_t>(lead));
        for (Eigen::Index c = lead; c < r; ++c) {
            for (Eigen::Index i = 0; i < extent; ++i) u(i, c) = normal(rng);
            u.col(c).normalize();
        }
        factors[d] = std::move(u);
    }

    std::vector<Eigen::MatrixXd> unfoldings;
    for (std::size_t d = 0; d < order; ++d) unfoldings.push_back(matricize(t, d));

    const double norm = t.frobenius_norm();
    Eigen::VectorXd weights = Eigen::VectorXd::Ones(r);
    double prev_err = std::numeric_limits<double>::infinity();
    if (sweep_errors) sweep_errors->clear();

    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        for (std::size_t d = 0; d < order; ++d) {
            Eigen::MatrixXd gram = Eigen::MatrixXd::Ones(r, r);
            for (std::size_t k = 0; k < order; ++k)
                if (k != d) gram = gram.cwiseProduct(factors[k].transpose() * factors[k]);
            const Eigen::MatrixXd mttkrp = unfoldings[d] * khatri_rao_except(factors, d);
            Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
            const double scale = std::max(gram.diagonal().maxCoeff(), 1.0);
            Eigen::MatrixXd solved;
            if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
                ldlt.vectorD().minCoeff() > opts.ridge * scale) {
                solved = ldlt.solve(mttkrp.transpose()).transpose();
            } else {
                Eigen::MatrixXd damped = gram;
                damped.diagonal().array() += opts.ridge * scale;
                solved = damped.ldlt().solve(mttkrp.transpose()).transpose();
            }
            weights = solved.colwise().norm().transpose();
            for (Eigen::Index c = 0; c < r; ++c)
                if (weights[c] > 0.0) solved.col(c) /= weights[c];
                else {
                    solved.col(c).setZero();
                    solved(0, c) = 1.0;
                }
            factors[d] = std::move(solved);
        }
        CpFactors current{weights, factors};
        const double err = (cp_reconstruct(current) - t).frobenius_norm();
        if (sweep_errors) sweep_errors->push_back(err);
        const bool done = std::abs(prev_err - err) <= opts.tol * std::max(norm, 1e-300);
        prev_err = err;
        if (done) break;
    }

    return CpFactors{weights, factors};
}

DenseTensor cp_reconstruct(const CpFactors& f) {
    if (f.factors.empty()) throw DomainError("cp_reconstruct: no factors");
    const auto r = f.weights.size();
    for (const auto& u : f.factors)
        if (u.cols() != r) throw DomainError("cp_reconstruct: factor column count differs from weights");
    const Shape shape = f.full_shape();
    const Eigen::VectorXd flat = khatri_rao_except(f.factors, f.factors.size()) * f.weights;
    return DenseTensor(shape, std::vector<double>(flat.data(), flat.data() + flat.size()));
}

std::size_t count_params(const Shape& shape, const std::vector<std::size_t>& ranks, ParamKind kind) {
    validate_shape(shape);
    const std::size_t order = shape.size();
    if (kind == ParamKind::full || order == 1) return num_elements(shape);
    if (kind == ParamKind::cp) {
        if (ranks.size() != 1) throw DomainError("cp parameter count takes a single rank");
        const std::size_t r = ranks[0];
        const std::size_t sum_i = std::accumulate(shape.begin(), shape.end(), std::size_t{0});
        if (order == 2) return r * (shape[0] + shape[1]) - r * r;
        return r * (sum_i - order + 1);
    }
    if (ranks.size() != order) throw DomainError("tucker parameter count needs one rank per mode");
    std::size_t total = 0, core = 1, sq = 0;
    for (std::size_t d = 0; d < order; ++d) {
        total += shape[d] * ranks[d];
        core *= ranks[d];
        sq += ranks[d] * ranks[d];
    }
    return total + core - sq;
}

double relative_error(const DenseTensor& approx, const DenseTensor& exact) {
    const double denom = exact.frobenius_norm();
    const double num = (approx - exact).frobenius_norm();
    return denom > 0.0 ? num / denom : num;
}

}  // namespace tenreg
