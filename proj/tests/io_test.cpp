#include "tenreg/baselines.hpp"
#include "tenreg/io.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <limits>

using namespace tenreg;
using namespace tenreg::testing;

namespace {

std::filesystem::path scratch_dir() {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("tenreg_io_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                      ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir);
    return dir;
}

TensorDataset small_dataset(std::mt19937_64& rng) {
    TensorDataset ds;
    ds.family = GlmFamily::poisson;
    for (int i = 0; i < 4; ++i) {
        ds.predictors.push_back(random_tensor({2, 3}, rng));
        ds.responses.push_back(i);
    }
    return ds;
}

}  // namespace

TEST(TensorJson, RoundTripIsExact) {
    std::mt19937_64 rng(1);
    DenseTensor t = random_tensor({2, 3, 2}, rng);
    t[0] = 0.1;
    t[1] = std::numeric_limits<double>::denorm_min();
    t[2] = -1e300;
    const Json j = tensor_to_json(t);
    EXPECT_EQ(tensor_from_json(Json::parse(j.dump())), t);
}

TEST(TensorJson, SchemaErrors) {
    EXPECT_THROW(tensor_from_json(Json::parse(R"({"shape":[2,2],"data":[1,2,3]})")), SchemaError);
    EXPECT_THROW(tensor_from_json(Json::parse(R"({"shape":[2,0],"data":[]})")), SchemaError);
    EXPECT_THROW(tensor_from_json(Json::parse(R"({"data":[1]})")), SchemaError);
    EXPECT_THROW(tensor_from_json(Json::parse(R"({"shape":[1],"data":["x"]})")), SchemaError);
    EXPECT_THROW(tensor_from_json(Json::parse("[1,2]")), SchemaError);
}

TEST(MatrixJson, RowMajorLayout) {
    Eigen::MatrixXd m(2, 3);
    m << 1, 2, 3, 4, 5, 6;
    const Json j = matrix_to_json(m);
    EXPECT_EQ(j["data"][1][0], 4.0);
    EXPECT_EQ(matrix_from_json(j), m);
    EXPECT_THROW(matrix_from_json(Json::parse(R"({"rows":2,"cols":2,"data":[[1,2],[3]]})")), SchemaError);
    EXPECT_THROW(matrix_from_json(Json::parse(R"({"rows":3,"cols":1,"data":[[1],[2]]})")), SchemaError);
}

TEST(DatasetJson, RoundTripAndErrors) {
    std::mt19937_64 rng(2);
    const TensorDataset ds = small_dataset(rng);
    const TensorDataset back = dataset_from_json(Json::parse(dataset_to_json(ds).dump()));
    EXPECT_EQ(back.family, ds.family);
    EXPECT_EQ(back.predictors, ds.predictors);
    EXPECT_EQ(back.responses, ds.responses);

    Json bad = dataset_to_json(ds);
    bad["family"] = "gamma";
    EXPECT_THROW(dataset_from_json(bad), SchemaError);
    bad = dataset_to_json(ds);
    bad["predictors"][1].erase(0);
    EXPECT_THROW(dataset_from_json(bad), SchemaError);
    bad = dataset_to_json(ds);
    bad["responses"].erase(0);
    EXPECT_THROW(dataset_from_json(bad), SchemaError);
    bad = dataset_to_json(ds);
    bad["responses"][0] = -1;
    EXPECT_THROW(dataset_from_json(bad), SchemaError);
}

TEST(FactorJson, TuckerAndCpRoundTrip) {
    std::mt19937_64 rng(3);
    const TuckerFactors t = hosvd(random_tensor({3, 2, 2}, rng), {2, 2, 1});
    const TuckerFactors tb = tucker_from_json(Json::parse(tucker_to_json(t).dump()));
    EXPECT_EQ(tb.core, t.core);
    for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(tb.factors[d], t.factors[d]);

    CpFactors c;
    c.weights = random_matrix(2, 1, rng);
    c.factors = {random_matrix(3, 2, rng), random_matrix(4, 2, rng)};
    const CpFactors cb = cp_from_json(Json::parse(cp_to_json(c).dump()));
    EXPECT_EQ(cb.weights, c.weights);
    EXPECT_EQ(cb.factors[1], c.factors[1]);

    Json bad = tucker_to_json(t);
    bad["factors"].erase(2);
    EXPECT_THROW(tucker_from_json(bad), SchemaError);
}

TEST(ModelJson, RoundTripPreservesPredictions) {
    std::mt19937_64 rng(4);
    TensorDataset ds = small_dataset(rng);
    ds.family = GlmFamily::gaussian;
    for (bool intercept : {true, false}) {
        BlockRelaxConfig cfg;
        cfg.ranks = {1, 2};
        cfg.intercept = intercept;
        const FitResult fr = fit_tucker_tr(ds, cfg);
        const FitResult back = model_from_json(Json::parse(model_to_json(fr).dump()));
        EXPECT_EQ(back.method, fr.method);
        EXPECT_EQ(back.has_intercept, fr.has_intercept);
        EXPECT_EQ(back.coefficients, fr.coefficients);
        EXPECT_EQ(back.trace, fr.trace);
        EXPECT_EQ(back.config, fr.config);
        ASSERT_TRUE(back.tucker.has_value());
        EXPECT_EQ(back.tucker->core, fr.tucker->core);
        EXPECT_EQ(predict(back, ds.predictors), predict(fr, ds.predictors));
        EXPECT_EQ(model_to_json(back).dump(), model_to_json(fr).dump());
    }
}

TEST(ModelJson, SchemaErrors) {
    std::mt19937_64 rng(5);
    TensorDataset ds = small_dataset(rng);
    VectorizedConfig cfg;
    cfg.lasso = true;
    cfg.lambda = 0.1;
    const FitResult fr = fit_vectorized(ds, cfg);
    Json bad = model_to_json(fr);
    bad["coefficients"].erase(0);
    EXPECT_THROW(model_from_json(bad), SchemaError);
    bad = model_to_json(fr);
    bad.erase("standardization");
    EXPECT_THROW(model_from_json(bad), SchemaError);
    bad = model_to_json(fr);
    bad["family"] = 3;
    EXPECT_THROW(model_from_json(bad), SchemaError);
}

TEST(Files, AtomicWriteAndErrors) {
    const auto dir = scratch_dir();
    const auto path = dir / "t.json";
    write_json_file(path, tensor_to_json(DenseTensor({1}, {2.5})));
    EXPECT_EQ(tensor_from_json(read_json_file(path)), DenseTensor({1}, {2.5}));
    EXPECT_FALSE(std::filesystem::exists(dir / "t.json.tmp"));
    write_file_atomic(path, "{not json");
    EXPECT_THROW(read_json_file(path), SchemaError);
    EXPECT_THROW(read_json_file(dir / "missing.json"), IoError);
    EXPECT_THROW(write_file_atomic(dir / "no" / "such" / "dir.json", "x"), IoError);
    std::filesystem::remove_all(dir);
}

TEST(FormatDouble, RoundTrips) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> z;
    for (int i = 0; i < 1000; ++i) {
        const double v = z(rng) * std::pow(10.0, i % 40 - 20);
        EXPECT_EQ(std::stod(format_double(v)), v);
    }
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}
