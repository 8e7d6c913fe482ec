#include "tenreg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tenreg {

std::size_t num_elements(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw DomainError("tensor order must be at least 1");
    for (std::size_t d = 0; d < shape.size(); ++d)
        if (shape[d] == 0)
            throw DomainError("mode " + std::to_string(d + 1) + " has zero extent");
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t d = 0; d < shape.size(); ++d) os << (d ? "," : "") << shape[d];
    os << ')';
    return os.str();
}

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(num_elements(shape_), 0.0);
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != num_elements(shape_))
        throw DomainError("data length " + std::to_string(data_.size()) + " does not match shape " +
                          shape_to_string(shape_));
}

namespace {

std::size_t offset_of(std::span<const std::size_t> index, const Shape& shape) {
    if (index.size() != shape.size())
        throw DomainError("index has " + std::to_string(index.size()) + " modes, tensor has " +
                          std::to_string(shape.size()));
    std::size_t off = 0, stride = 1;
    for (std::size_t d = 0; d < shape.size(); ++d) {
        if (index[d] >= shape[d])
            throw DomainError("index out of range in mode " + std::to_string(d + 1));
        off += index[d] * stride;
        stride *= shape[d];
    }
    return off;
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b)
        throw DomainError(std::string(what) + ": shape mismatch " + shape_to_string(a) + " vs " +
                          shape_to_string(b));
}

}  // namespace

double& DenseTensor::at(std::span<const std::size_t> index) { return data_[offset_of(index, shape_)]; }
double DenseTensor::at(std::span<const std::size_t> index) const {
    return data_[offset_of(index, shape_)];
}

DenseTensor& DenseTensor::operator+=(const DenseTensor& other) {
    require_same_shape(shape_, other.shape_, "operator+=");
    as_vector() += other.as_vector();
    return *this;
}

DenseTensor& DenseTensor::operator-=(const DenseTensor& other) {
    require_same_shape(shape_, other.shape_, "operator-=");
    as_vector() -= other.as_vector();
    return *this;
}

DenseTensor& DenseTensor::operator*=(double s) {
    as_vector() *= s;
    return *this;
}

DenseTensor operator+(DenseTensor a, const DenseTensor& b) { return a += b; }
DenseTensor operator-(DenseTensor a, const DenseTensor& b) { return a -= b; }
DenseTensor operator*(double s, DenseTensor a) { return a *= s; }

std::size_t vec_index(std::span<const std::size_t> multi_index, const Shape& shape) {
    if (multi_index.size() != shape.size())
        throw DomainError("index has " + std::to_string(multi_index.size()) +
                          " modes, shape has " + std::to_string(shape.size()));
    std::size_t pos = 1, stride = 1;
    for (std::size_t d = 0; d < shape.size(); ++d) {
        if (multi_index[d] < 1 || multi_index[d] > shape[d])
            throw DomainError("index " + std::to_string(multi_index[d]) + " out of range in mode " +
                              std::to_string(d + 1) + " (extent " + std::to_string(shape[d]) + ")");
        pos += (multi_index[d] - 1) * stride;
        stride *= shape[d];
    }
    return pos;
}

std::vector<std::size_t> unravel(std::size_t linear, const Shape& shape) {
    std::vector<std::size_t> idx(shape.size());
    for (std::size_t d = 0; d < shape.size(); ++d) {
        idx[d] = linear % shape[d];
        linear /= shape[d];
    }
    return idx;
}

std::vector<double> vectorize(const DenseTensor& t) { return t.values(); }

namespace {

struct ModeSplit {
    std::size_t left = 1;   // prod of extents before the mode
    std::size_t extent = 1;
    std::size_t right = 1;  // prod of extents after the mode
};

ModeSplit split_at(const Shape& shape, std::size_t mode) {
    if (mode >= shape.size())
        throw DomainError("mode " + std::to_string(mode + 1) + " invalid for order-" +
                          std::to_string(shape.size()) + " tensor");
    ModeSplit s;
    for (std::size_t k = 0; k < mode; ++k) s.left *= shape[k];
    s.extent = shape[mode];
    for (std::size_t k = mode + 1; k < shape.size(); ++k) s.right *= shape[k];
    return s;
}

}  // namespace

Eigen::MatrixXd matricize(const DenseTensor& t, std::size_t mode) {
    const auto s = split_at(t.shape(), mode);
    Eigen::MatrixXd m(s.extent, s.left * s.right);
    const auto src = t.data();
    for (std::size_t r = 0; r < s.right; ++r)
        for (std::size_t i = 0; i < s.extent; ++i)
            for (std::size_t l = 0; l < s.left; ++l)
                m(i, l + s.left * r) = src[l + s.left * (i + s.extent * r)];
    return m;
}

DenseTensor fold(const Eigen::MatrixXd& m, std::size_t mode, const Shape& shape) {
    validate_shape(shape);
    const auto s = split_at(shape, mode);
    if (static_cast<std::size_t>(m.rows()) != s.extent ||
        static_cast<std::size_t>(m.cols()) != s.left * s.right)
        throw DomainError("fold: matrix is " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + ", expected " + std::to_string(s.extent) +
                          "x" + std::to_string(s.left * s.right));
    DenseTensor t(shape);
    auto dst = t.data();
    for (std::size_t r = 0; r < s.right; ++r)
        for (std::size_t i = 0; i < s.extent; ++i)
            for (std::size_t l = 0; l < s.left; ++l)
                dst[l + s.left * (i + s.extent * r)] = m(i, l + s.left * r);
    return t;
}

DenseTensor mode_product(const DenseTensor& t, const Eigen::MatrixXd& a, std::size_t mode) {
    const auto s = split_at(t.shape(), mode);
    if (static_cast<std::size_t>(a.cols()) != s.extent)
        throw DomainError("mode_product: matrix has " + std::to_string(a.cols()) +
                          " columns, mode " + std::to_string(mode + 1) + " has extent " +
                          std::to_string(s.extent));
    if (a.rows() == 0) throw DomainError("mode_product: matrix has no rows");
    Shape out_shape = t.shape();
    out_shape[mode] = static_cast<std::size_t>(a.rows());
    DenseTensor out(out_shape);
    const auto J = static_cast<std::size_t>(a.rows());
    using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
    using Map = Eigen::Map<Eigen::MatrixXd>;
    // Each trailing slab r is a (left x extent) column-major block.
    for (std::size_t r = 0; r < s.right; ++r) {
        ConstMap in(t.data().data() + s.left * s.extent * r, s.left, s.extent);
        Map res(out.data().data() + s.left * J * r, s.left, J);
        res.noalias() = in * a.transpose();
    }
    return out;
}

DenseTensor multi_mode_product(const DenseTensor& t, std::span<const Eigen::MatrixXd> mats,
                               bool transpose) {
    if (mats.size() != t.order())
        throw DomainError("multi_mode_product: expected " + std::to_string(t.order()) +
                          " matrices, got " + std::to_string(mats.size()));
    DenseTensor out = t;
    for (std::size_t d = 0; d < mats.size(); ++d)
        out = transpose ? mode_product(out, mats[d].transpose(), d) : mode_product(out, mats[d], d);
    return out;
}

double inner(const DenseTensor& x, const DenseTensor& y) {
    require_same_shape(x.shape(), y.shape(), "inner");
    return x.as_vector().dot(y.as_vector());
}

DenseTensor outer_rank1(std::span<const Eigen::VectorXd> vectors) {
    if (vectors.empty()) throw DomainError("outer_rank1: no vectors given");
    Shape shape;
    for (const auto& v : vectors) {
        if (v.size() == 0) throw DomainError("outer_rank1: empty vector");
        shape.push_back(static_cast<std::size_t>(v.size()));
    }
    DenseTensor out(shape);
    auto dst = out.data();
    std::vector<std::size_t> idx(shape.size(), 0);
    for (std::size_t k = 0; k < dst.size(); ++k) {
        double prod = 1.0;
        for (std::size_t d = 0; d < shape.size(); ++d) prod *= vectors[d][idx[d]];
        dst[k] = prod;
        for (std::size_t d = 0; d < shape.size(); ++d) {
            if (++idx[d] < shape[d]) break;
            idx[d] = 0;
        }
    }
    return out;
}

GlmFamily parse_family(const std::string& name) {
    if (name == "gaussian" || name == "linear") return GlmFamily::gaussian;
    if (name == "binomial" || name == "logistic") return GlmFamily::binomial;
    if (name == "poisson") return GlmFamily::poisson;
    throw DomainError("unknown family '" + name + "'");
}

std::string family_name(GlmFamily family) {
    switch (family) {
        case GlmFamily::gaussian: return "gaussian";
        case GlmFamily::binomial: return "binomial";
        case GlmFamily::poisson: return "poisson";
    }
    return "unknown";
}

const Shape& TensorDataset::shape() const {
    if (predictors.empty()) throw DomainError("dataset has no predictors");
    return predictors.front().shape();
}

void TensorDataset::validate() const {
    if (predictors.size() != responses.size())
        throw DomainError("dataset has " + std::to_string(predictors.size()) + " predictors but " +
                          std::to_string(responses.size()) + " responses");
    if (predictors.empty()) return;
    const Shape& s = predictors.front().shape();
    for (std::size_t i = 0; i < predictors.size(); ++i) {
        if (predictors[i].shape() != s)
            throw DomainError("predictor " + std::to_string(i) + " has shape " +
                              shape_to_string(predictors[i].shape()) + ", expected " +
                              shape_to_string(s));
        for (double v : predictors[i].data())
            if (!std::isfinite(v))
                throw DomainError("predictor " + std::to_string(i) + " has a non-finite entry");
    }
    for (std::size_t i = 0; i < responses.size(); ++i) {
        const double y = responses[i];
        if (!std::isfinite(y)) throw DomainError("response " + std::to_string(i) + " is not finite");
        if (family == GlmFamily::binomial && y != 0.0 && y != 1.0)
            throw DomainError("binomial response " + std::to_string(i) + " is not 0 or 1");
        if (family == GlmFamily::poisson && (y < 0.0 || y != std::floor(y)))
            throw DomainError("poisson response " + std::to_string(i) +
                              " is not a nonnegative integer");
    }
}

Eigen::MatrixXd TensorDataset::design() const {
    const std::size_t n = predictors.size();
    const std::size_t p = n ? predictors.front().size() : 0;
    Eigen::MatrixXd x(n, p);
    for (std::size_t i = 0; i < n; ++i) x.row(i) = predictors[i].as_vector().transpose();
    return x;
}

DenseTensor StandardizationTransform::apply(const DenseTensor& x) const {
    if (x.shape() != means.shape())
        throw DomainError("standardization: predictor shape " + shape_to_string(x.shape()) +
                          " does not match " + shape_to_string(means.shape()));
    DenseTensor out(x.shape());
    out.as_vector() = (x.as_vector() - means.as_vector()).cwiseQuotient(sds.as_vector());
    return out;
}

DenseTensor StandardizationTransform::unscale_coefficients(const DenseTensor& b) const {
    require_same_shape(b.shape(), sds.shape(), "unscale_coefficients");
    DenseTensor out(b.shape());
    out.as_vector() = b.as_vector().cwiseQuotient(sds.as_vector());
    return out;
}

double StandardizationTransform::centering_offset(const DenseTensor& b) const {
    require_same_shape(b.shape(), sds.shape(), "centering_offset");
    return -means.as_vector().cwiseQuotient(sds.as_vector()).dot(b.as_vector());
}

ScaleMode parse_scale_mode(const std::string& name) {
    if (name == "position") return ScaleMode::position;
    if (name == "pooled") return ScaleMode::pooled;
    throw DomainError("unknown standardization mode '" + name + "' (expected position or pooled)");
}

std::string scale_mode_name(ScaleMode mode) {
    return mode == ScaleMode::position ? "position" : "pooled";
}

Standardized standardize(const TensorDataset& ds, ScaleMode mode) {
    ds.validate();
    const std::size_t n = ds.size();
    if (n < 2) throw DomainError("standardize needs at least 2 observations, got " + std::to_string(n));
    const Shape& shape = ds.shape();
    const Eigen::MatrixXd x = ds.design();
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    Eigen::RowVectorXd sd =
        (centered.colwise().squaredNorm() / static_cast<double>(n - 1)).cwiseSqrt();
    if (mode == ScaleMode::pooled) {
        const double pooled = std::sqrt(centered.squaredNorm() / static_cast<double>((n - 1) * sd.size()));
        sd.setConstant(pooled > 1e-12 * std::max(1.0, mean.cwiseAbs().maxCoeff()) ? pooled : 1.0);
    }
    for (Eigen::Index j = 0; j < sd.size(); ++j)
        if (!(sd[j] > 1e-12 * std::max(1.0, std::abs(mean[j])))) sd[j] = 1.0;

    Standardized out;
    out.transform.means = DenseTensor(shape, std::vector<double>(mean.data(), mean.data() + mean.size()));
    out.transform.sds = DenseTensor(shape, std::vector<double>(sd.data(), sd.data() + sd.size()));
    out.data.family = ds.family;
    out.data.responses = ds.responses;
    out.data.predictors.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        DenseTensor t(shape);
        t.as_vector() = centered.row(i).cwiseQuotient(sd).transpose();
        out.data.predictors.push_back(std::move(t));
    }
    return out;
}

TensorDataset apply_standardization(const TensorDataset& ds, const StandardizationTransform& tr) {
    TensorDataset out;
    out.family = ds.family;
    out.responses = ds.responses;
    out.predictors.reserve(ds.predictors.size());
    for (const auto& x : ds.predictors) out.predictors.push_back(tr.apply(x));
    return out;
}

}  // namespace tenreg
