#include "tenreg/model.hpp"

namespace tenreg {

PreparedData prepare(const TensorDataset& ds, bool intercept, ScaleMode scale) {
    ds.validate();
    PreparedData out;
    out.standardized = standardize(ds, scale);
    out.intercept = intercept;
    const Eigen::MatrixXd raw = out.standardized.data.design();
    out.design.resize(raw.rows(), raw.cols() + (intercept ? 1 : 0));
    if (intercept) out.design.col(0).setOnes();
    out.design.rightCols(raw.cols()) = raw;
    out.y = Eigen::Map<const Eigen::VectorXd>(ds.responses.data(), static_cast<Eigen::Index>(ds.size()));
    return out;
}

Eigen::MatrixXd design_rows(const std::vector<DenseTensor>& xs, const StandardizationTransform& tr,
                            bool intercept) {
    const Eigen::Index p = static_cast<Eigen::Index>(tr.means.size());
    const Eigen::Index off = intercept ? 1 : 0;
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(xs.size()), p + off);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].shape() != tr.means.shape())
            throw DomainError("predictor " + std::to_string(i) + " has shape " + shape_to_string(xs[i].shape()) +
                              ", model expects " + shape_to_string(tr.means.shape()));
        const auto r = static_cast<Eigen::Index>(i);
        if (intercept) rows(r, 0) = 1.0;
        rows.row(r).tail(p) = tr.apply(xs[i]).as_vector().transpose();
    }
    return rows;
}

std::pair<double, DenseTensor> split_coefficients(const Eigen::VectorXd& beta, const Shape& shape,
                                                  bool intercept) {
    const Eigen::Index off = intercept ? 1 : 0;
    const Eigen::VectorXd tail = beta.tail(beta.size() - off);
    return {intercept ? beta[0] : 0.0,
            DenseTensor(shape, std::vector<double>(tail.data(), tail.data() + tail.size()))};
}

Eigen::VectorXd join_coefficients(double intercept, const DenseTensor& b, bool intercept_column) {
    const Eigen::Index off = intercept_column ? 1 : 0;
    Eigen::VectorXd beta(static_cast<Eigen::Index>(b.size()) + off);
    if (intercept_column) beta[0] = intercept;
    beta.tail(static_cast<Eigen::Index>(b.size())) = b.as_vector();
    return beta;
}

std::vector<bool> intercept_mask(Eigen::Index cols, bool intercept) {
    std::vector<bool> mask(static_cast<std::size_t>(cols), false);
    if (intercept && cols > 0) mask[0] = true;
    return mask;
}

Eigen::VectorXd linear_predictors(const FitResult& fr, const std::vector<DenseTensor>& xs) {
    const Eigen::MatrixXd rows = design_rows(xs, fr.transform, false);
    Eigen::VectorXd eta = rows * fr.coefficients.as_vector();
    eta.array() += fr.intercept;
    return eta;
}

std::vector<double> predict(const FitResult& fr, const std::vector<DenseTensor>& xs) {
    const Eigen::VectorXd eta = linear_predictors(fr, xs);
    std::vector<double> out(static_cast<std::size_t>(eta.size()));
    for (Eigen::Index i = 0; i < eta.size(); ++i) out[static_cast<std::size_t>(i)] = mean_of(fr.family, eta[i]);
    return out;
}

double data_loss(const PreparedData& prep, GlmFamily family, double intercept, const DenseTensor& b) {
    const auto p = static_cast<Eigen::Index>(b.size());
    Eigen::VectorXd eta = prep.design.rightCols(p) * b.as_vector();
    eta.array() += intercept;
    return neg_loglik(family, eta, prep.y);
}

GlmFit vectorized_start(const PreparedData& prep, GlmFamily family, const GlmOptions& opts) {
    DesignProblem p;
    p.x = prep.design;
    p.y = prep.y;
    p.family = family;
    p.unpenalized = intercept_mask(p.cols(), prep.intercept);
    if (p.cols() < p.rows()) {
        try {
            GlmFit f = irls_fit(p, opts);
            if (f.converged) return f;
        } catch (const GlmError&) {
        }
    }
    p.penalty = Penalty::ridge(1e-3);
    return irls_fit(p, opts);
}

}  // namespace tenreg
