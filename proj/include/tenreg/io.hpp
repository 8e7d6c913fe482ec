#pragma once

#include "tenreg/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace tenreg {

using Json = nlohmann::ordered_json;

/// File-system failure (missing file, unwritable directory).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Well-formed file whose content violates the expected layout.
class SchemaError : public DomainError {
public:
    using DomainError::DomainError;
};

Json tensor_to_json(const DenseTensor& t);
DenseTensor tensor_from_json(const Json& j);

/// {"rows": r, "cols": c, "data": [[row 1], ...]}.
Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j);

Json dataset_to_json(const TensorDataset& ds);
TensorDataset dataset_from_json(const Json& j);

Json tucker_to_json(const TuckerFactors& f);
TuckerFactors tucker_from_json(const Json& j);
Json cp_to_json(const CpFactors& f);
CpFactors cp_from_json(const Json& j);

Json model_to_json(const FitResult& fr);
FitResult model_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
void write_json_file(const std::filesystem::path& path, const Json& j);

/// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

}  // namespace tenreg
