#include "tenreg/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace tenreg {

namespace {

const Json& field(const Json& j, const char* key) {
    if (!j.is_object()) throw SchemaError(std::string("expected an object holding '") + key + "'");
    const auto it = j.find(key);
    if (it == j.end()) throw SchemaError(std::string("missing field '") + key + "'");
    return *it;
}

template <class T>
T as(const Json& j, const char* what) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw SchemaError(std::string("field '") + what + "' has the wrong type");
    }
}

Shape shape_from(const Json& j) {
    const auto v = as<std::vector<long long>>(j, "shape");
    Shape s;
    for (long long d : v) {
        if (d < 1) throw SchemaError("shape entries must be positive integers");
        s.push_back(static_cast<std::size_t>(d));
    }
    validate_shape(s);
    return s;
}

}  // namespace

Json tensor_to_json(const DenseTensor& t) {
    return {{"shape", t.shape()}, {"data", t.values()}};
}

DenseTensor tensor_from_json(const Json& j) {
    const Shape s = shape_from(field(j, "shape"));
    auto data = as<std::vector<double>>(field(j, "data"), "data");
    if (data.size() != num_elements(s))
        throw SchemaError("tensor data has " + std::to_string(data.size()) + " entries, shape " + shape_to_string(s) +
                          " needs " + std::to_string(num_elements(s)));
    return DenseTensor(s, std::move(data));
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(row);
    }
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
    const auto r = as<long long>(field(j, "rows"), "rows");
    const auto c = as<long long>(field(j, "cols"), "cols");
    const auto data = as<std::vector<std::vector<double>>>(field(j, "data"), "data");
    if (r < 0 || c < 0 || static_cast<long long>(data.size()) != r)
        throw SchemaError("matrix row count does not match its data");
    Eigen::MatrixXd m(r, c);
    for (long long i = 0; i < r; ++i) {
        if (static_cast<long long>(data[static_cast<std::size_t>(i)].size()) != c)
            throw SchemaError("matrix row " + std::to_string(i + 1) + " has the wrong length");
        for (long long k = 0; k < c; ++k) m(i, k) = data[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    return m;
}

Json dataset_to_json(const TensorDataset& ds) {
    Json preds = Json::array();
    for (const auto& x : ds.predictors) preds.push_back(x.values());
    return {{"shape", ds.predictors.empty() ? Shape{} : ds.shape()},
            {"family", family_name(ds.family)},
            {"predictors", preds},
            {"responses", ds.responses}};
}

TensorDataset dataset_from_json(const Json& j) {
    TensorDataset ds;
    const Shape s = shape_from(field(j, "shape"));
    try {
        ds.family = parse_family(as<std::string>(field(j, "family"), "family"));
    } catch (const SchemaError&) {
        throw;
    } catch (const DomainError& e) {
        throw SchemaError(e.what());
    }
    const auto preds = as<std::vector<std::vector<double>>>(field(j, "predictors"), "predictors");
    ds.responses = as<std::vector<double>>(field(j, "responses"), "responses");
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].size() != num_elements(s))
            throw SchemaError("predictor " + std::to_string(i + 1) + " has " + std::to_string(preds[i].size()) +
                              " entries, shape needs " + std::to_string(num_elements(s)));
        ds.predictors.emplace_back(s, preds[i]);
    }
    try {
        ds.validate();
    } catch (const DomainError& e) {
        throw SchemaError(e.what());
    }
    return ds;
}

Json tucker_to_json(const TuckerFactors& f) {
    Json factors = Json::array();
    for (const auto& u : f.factors) factors.push_back(matrix_to_json(u));
    return {{"core", tensor_to_json(f.core)}, {"factors", factors}};
}

TuckerFactors tucker_from_json(const Json& j) {
    TuckerFactors f;
    f.core = tensor_from_json(field(j, "core"));
    for (const auto& u : field(j, "factors")) f.factors.push_back(matrix_from_json(u));
    if (f.factors.size() != f.core.order()) throw SchemaError("factor count differs from core order");
    for (std::size_t d = 0; d < f.factors.size(); ++d)
        if (static_cast<std::size_t>(f.factors[d].cols()) != f.core.dim(d))
            throw SchemaError("factor " + std::to_string(d + 1) + " column count differs from core extent");
    return f;
}

Json cp_to_json(const CpFactors& f) {
    Json factors = Json::array();
    for (const auto& u : f.factors) factors.push_back(matrix_to_json(u));
    return {{"weights", std::vector<double>(f.weights.data(), f.weights.data() + f.weights.size())},
            {"factors", factors}};
}

CpFactors cp_from_json(const Json& j) {
    CpFactors f;
    const auto w = as<std::vector<double>>(field(j, "weights"), "weights");
    f.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    for (const auto& u : field(j, "factors")) {
        f.factors.push_back(matrix_from_json(u));
        if (f.factors.back().cols() != f.weights.size()) throw SchemaError("CP factor column count differs from rank");
    }
    return f;
}

Json model_to_json(const FitResult& fr) {
    Json j;
    j["family"] = family_name(fr.family);
    j["method"] = fr.method;
    j["shape"] = fr.shape();
    j["coefficients"] = fr.coefficients.values();
    if (fr.has_intercept) j["intercept"] = fr.intercept;
    if (fr.tucker) {
        j["core"] = tensor_to_json(fr.tucker->core);
        Json factors = Json::array();
        for (const auto& u : fr.tucker->factors) factors.push_back(matrix_to_json(u));
        j["factors"] = factors;
    } else if (fr.cp) {
        const auto cp = cp_to_json(*fr.cp);
        j["weights"] = cp["weights"];
        j["factors"] = cp["factors"];
    }
    if (fr.raw_average.size()) j["raw_average"] = fr.raw_average.values();
    j["standardization"] = {{"means", tensor_to_json(fr.transform.means)}, {"sds", tensor_to_json(fr.transform.sds)}};
    j["trace"] = fr.trace;
    j["iterations"] = fr.iterations;
    j["converged"] = fr.converged;
    j["config"] = fr.config;
    return j;
}

FitResult model_from_json(const Json& j) {
    FitResult fr;
    try {
        fr.family = parse_family(as<std::string>(field(j, "family"), "family"));
    } catch (const SchemaError&) {
        throw;
    } catch (const DomainError& e) {
        throw SchemaError(e.what());
    }
    fr.method = as<std::string>(field(j, "method"), "method");
    const Shape s = shape_from(field(j, "shape"));
    auto coef = as<std::vector<double>>(field(j, "coefficients"), "coefficients");
    if (coef.size() != num_elements(s)) throw SchemaError("coefficient count does not match shape");
    fr.coefficients = DenseTensor(s, std::move(coef));
    if (j.contains("intercept")) {
        fr.intercept = as<double>(j["intercept"], "intercept");
        fr.has_intercept = true;
    }
    const Json& st = field(j, "standardization");
    fr.transform.means = tensor_from_json(field(st, "means"));
    fr.transform.sds = tensor_from_json(field(st, "sds"));
    if (fr.transform.means.shape() != s || fr.transform.sds.shape() != s)
        throw SchemaError("standardization shape differs from coefficient shape");
    if (j.contains("core")) fr.tucker = tucker_from_json(j);
    else if (j.contains("weights")) fr.cp = cp_from_json(j);
    if (j.contains("raw_average")) {
        auto raw = as<std::vector<double>>(j["raw_average"], "raw_average");
        if (raw.size() != num_elements(s)) throw SchemaError("raw_average count does not match shape");
        fr.raw_average = DenseTensor(s, std::move(raw));
    }
    if (j.contains("trace")) fr.trace = as<std::vector<double>>(j["trace"], "trace");
    if (j.contains("iterations")) fr.iterations = as<int>(j["iterations"], "iterations");
    if (j.contains("converged")) fr.converged = as<bool>(j["converged"], "converged");
    if (j.contains("config")) fr.config = j["config"];
    return fr;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
    return ss.str();
}

Json read_json_file(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("failed writing '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move output into place at '" + path.string() + "'");
    }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
    write_file_atomic(path, j.dump(2) + "\n");
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace tenreg
