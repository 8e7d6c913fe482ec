#include "tenreg/baselines.hpp"
#include "tenreg/io.hpp"
#include "tenreg/noise_aug.hpp"
#include "tenreg/simbench.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace tenreg;

namespace {

// Exit codes form a stable scripting contract.
constexpr int kOk = 0;
constexpr int kIo = 1;
constexpr int kInvalid = 2;
constexpr int kNotConverged = 3;

struct NotConverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Optional overrides shared by fit and bench; unset flags keep the defaults
// of the chosen configuration.
struct NaFlags {
    std::optional<std::size_t> n_e, window;
    std::optional<int> max_iter;
    std::optional<double> lambda, tau, eta, tau0, c;

    void add(CLI::App* cmd) {
        cmd->add_option("--ne", n_e, "noise rows per block (na0ct2)");
        cmd->add_option("--noise-scale", lambda, "noise scale lambda (na0ct2)");
        cmd->add_option("--window", window, "moving-average window m (na0ct2)");
        cmd->add_option("--tau", tau, "stop when the averaged loss changes by at most this (na0ct2)");
        cmd->add_option("--tau0", tau0, "final core zero threshold (na0ct2)");
        cmd->add_option("--c", c, "magnitude floor for averaged core entries (na0ct2)");
        cmd->add_option("--max-iter", max_iter, "iteration limit T");
        cmd->add_option("--eta", eta, "stop when the l1 change in B is at most this; 0 disables for na0ct2");
    }
    void apply(NaConfig& cfg) const {
        if (n_e) cfg.n_e = *n_e;
        if (lambda) cfg.lambda = *lambda;
        if (window) cfg.window = *window;
        if (max_iter) cfg.max_iter = *max_iter;
        if (tau) cfg.tau = *tau;
        if (eta) cfg.eta = *eta;
        if (tau0) cfg.tau0 = *tau0;
        if (c) cfg.c = *c;
    }
    void apply(BlockRelaxConfig& cfg) const {
        if (max_iter) cfg.max_iter = *max_iter;
        if (eta) cfg.eta = *eta;
    }
};

std::vector<std::size_t> parse_ranks(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        long long v = 0;
        try {
            v = std::stoll(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != item.size() || pos == 0 || v < 1) throw DomainError("ranks must be positive integers, got '" + text + "'");
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw DomainError("empty rank list");
    return out;
}

void check_shape_ranks(const Shape& shape, const std::vector<std::size_t>& ranks) {
    if (ranks.size() != shape.size())
        throw DomainError("need one rank per mode (" + std::to_string(shape.size()) + "), got " +
                          std::to_string(ranks.size()));
    for (std::size_t d = 0; d < ranks.size(); ++d)
        if (ranks[d] > shape[d]) throw DomainError("rank " + std::to_string(d + 1) + " exceeds the mode extent");
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
    fs::path out = p;
    out.replace_extension();
    out += suffix;
    return out;
}

std::string trace_csv(const std::vector<double>& trace) {
    std::string out = "iteration,loss\n";
    for (std::size_t i = 0; i < trace.size(); ++i) out += std::to_string(i + 1) + "," + format_double(trace[i]) + "\n";
    return out;
}

// ---- simulate ----

struct SimulateArgs {
    std::string family = "gaussian";
    std::uint64_t seed = 1, b_seed = 1;
    std::size_t repeat = 0;
    std::optional<std::size_t> n_train, n_test;
    std::string out_dir;
};

int cmd_simulate(const SimulateArgs& a) {
    SimDesign d = SimDesign::defaults(parse_family(a.family));
    d.seed = a.seed;
    d.b_seed = a.b_seed;
    if (a.n_train) d.n_train = *a.n_train;
    if (a.n_test) d.n_test = *a.n_test;
    d.validate();
    const SimData data = gen_dataset(d, a.repeat);
    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    if (ec) throw IoError("cannot create directory '" + a.out_dir + "'");
    const fs::path dir(a.out_dir);
    write_json_file(dir / "train.json", dataset_to_json(data.train));
    write_json_file(dir / "test.json", dataset_to_json(data.test));
    write_json_file(dir / "true_b.json", tensor_to_json(data.true_b));
    return kOk;
}

// ---- fit ----

struct FitArgs {
    std::string data, out, trace, method = "na0ct2", ranks, standardize = "pooled";
    std::optional<double> lambda;
    std::optional<std::size_t> rank;
    bool cv = false, no_intercept = false;
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    NaFlags na;
};

FitResult run_fit(const FitArgs& a, const TensorDataset& ds) {
    const Shape shape = ds.shape();
    const bool intercept = !a.no_intercept;
    const ScaleMode scale = parse_scale_mode(a.standardize);
    std::vector<std::size_t> ranks;
    if (!a.ranks.empty()) {
        ranks = parse_ranks(a.ranks);
        check_shape_ranks(shape, ranks);
    }
    const std::string& m = a.method;
    if (m == "na0ct2") {
        NaConfig cfg = NaConfig::full_scale(ds.family);
        a.na.apply(cfg);
        cfg.ranks = ranks;
        cfg.seed = a.seed;
        cfg.intercept = intercept;
        cfg.scale = scale;
        return fit_na0ct2(ds, cfg);
    }
    BlockRelaxConfig br;
    a.na.apply(br);
    br.seed = a.seed;
    br.folds = a.folds;
    br.intercept = intercept;
    br.scale = scale;
    if (m == "tucker" || m == "tucker-l1") {
        br.ranks = ranks;
        if (m == "tucker-l1") {
            if (a.lambda) br.lambda = *a.lambda;
            else br.cross_validate = true;
        }
        return fit_tucker_tr(ds, br);
    }
    if (m == "cp" || m == "cp-l2") {
        br.ranks = {a.rank.value_or(6)};
        if (m == "cp-l2") {
            if (a.lambda) br.lambda = *a.lambda;
            else br.cross_validate = true;
        }
        return fit_cp_tr(ds, br);
    }
    if (m == "vec" || m == "vec-l1") {
        VectorizedConfig vc;
        vc.lasso = m == "vec-l1";
        if (vc.lasso) vc.lambda = a.lambda;
        vc.folds = a.folds;
        vc.seed = a.seed;
        vc.intercept = intercept;
        vc.scale = scale;
        return fit_vectorized(ds, vc);
    }
    throw DomainError("unknown method '" + m + "'");
}

int cmd_fit(const FitArgs& a) {
    const TensorDataset ds = dataset_from_json(read_json_file(a.data));
    const FitResult fr = run_fit(a, ds);
    write_json_file(a.out, model_to_json(fr));
    write_file_atomic(a.trace.empty() ? sibling(a.out, ".trace.csv") : fs::path(a.trace), trace_csv(fr.trace));
    if (!fr.converged) {
        std::cerr << "warning: " << fr.method << " reached the iteration limit without converging\n";
        return kNotConverged;
    }
    return kOk;
}

// ---- predict / evaluate ----

void check_model_data(const FitResult& fr, const TensorDataset& ds) {
    if (ds.shape() != fr.shape())
        throw DomainError("dataset shape " + shape_to_string(ds.shape()) + " differs from model shape " +
                          shape_to_string(fr.shape()));
    if (ds.family != fr.family) throw DomainError("dataset family differs from model family");
}

struct PredictArgs {
    std::string model, data, out;
};

std::string predictions_csv(const std::vector<double>& yhat) {
    std::string out = "index,prediction\n";
    for (std::size_t i = 0; i < yhat.size(); ++i) out += std::to_string(i) + "," + format_double(yhat[i]) + "\n";
    return out;
}

std::vector<double> read_predictions_csv(const fs::path& path) {
    std::stringstream ss(read_text_file(path));
    std::string line;
    if (!std::getline(ss, line) || line != "index,prediction") throw SchemaError("predictions file lacks the header");
    std::vector<double> out;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        std::size_t pos = 0;
        double v = 0.0;
        try {
            if (comma == std::string::npos || std::stoull(line.substr(0, comma)) != out.size())
                throw SchemaError("predictions must be indexed 0, 1, ... in order");
            v = std::stod(line.substr(comma + 1), &pos);
        } catch (const SchemaError&) {
            throw;
        } catch (const std::exception&) {
            throw SchemaError("malformed predictions row '" + line + "'");
        }
        if (pos != line.size() - comma - 1) throw SchemaError("malformed predictions row '" + line + "'");
        out.push_back(v);
    }
    return out;
}

int cmd_predict(const PredictArgs& a) {
    const FitResult fr = model_from_json(read_json_file(a.model));
    const TensorDataset ds = dataset_from_json(read_json_file(a.data));
    check_model_data(fr, ds);
    write_file_atomic(a.out, predictions_csv(predict(fr, ds.predictors)));
    return kOk;
}

struct EvaluateArgs {
    std::string model, data, predictions, true_b, out;
    std::optional<double> tau0;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const FitResult fr = model_from_json(read_json_file(a.model));
    const TensorDataset ds = dataset_from_json(read_json_file(a.data));
    check_model_data(fr, ds);
    const std::vector<double> yhat =
        a.predictions.empty() ? predict(fr, ds.predictors) : read_predictions_csv(a.predictions);
    if (yhat.size() != ds.size()) throw DomainError("prediction count differs from dataset size");
    const double tau0 = a.tau0.value_or(fr.family == GlmFamily::gaussian ? 0.005 : 0.05);
    if (!(tau0 > 0.0)) throw DomainError("zero threshold must be positive");

    Json out;
    out["family"] = family_name(fr.family);
    out["method"] = fr.method;
    out["n"] = ds.size();
    out[fr.family == GlmFamily::binomial ? "misclassification" : "prediction_error"] =
        prediction_error(fr.family, yhat, ds.responses);
    if (!a.true_b.empty()) {
        const DenseTensor truth = tensor_from_json(read_json_file(a.true_b));
        if (truth.shape() != fr.shape()) throw DomainError("true coefficient shape differs from model shape");
        const DenseTensor raw = fr.transform.unscale_coefficients(fr.coefficients);
        out["mse_b"] = (raw - truth).as_vector().squaredNorm() / static_cast<double>(truth.size());
    }
    out["zero_threshold"] = tau0;
    out["zero_count"] = core_zero_count(fr.coefficients, tau0);
    if (a.out.empty()) std::cout << out.dump(2) << "\n";
    else write_json_file(a.out, out);
    return kOk;
}

// ---- decompose ----

struct DecomposeArgs {
    std::string tensor, out, kind = "tucker", ranks;
    std::size_t rank = 1;
    std::uint64_t seed = 0;
};

int cmd_decompose(const DecomposeArgs& a) {
    const DenseTensor t = tensor_from_json(read_json_file(a.tensor));
    Json out;
    double err = 0.0;
    if (a.kind == "tucker") {
        std::vector<std::size_t> ranks = a.ranks.empty() ? t.shape() : parse_ranks(a.ranks);
        check_shape_ranks(t.shape(), ranks);
        const TuckerFactors f = hosvd(t, ranks);
        err = relative_error(tucker_reconstruct(f), t);
        out = tucker_to_json(f);
    } else if (a.kind == "cp") {
        if (a.rank < 1) throw DomainError("CP rank must be at least 1");
        CpAlsOptions opts;
        opts.seed = a.seed;
        const CpFactors f = cp_als(t, a.rank, opts);
        err = relative_error(cp_reconstruct(f), t);
        out = cp_to_json(f);
    } else {
        throw DomainError("unknown decomposition '" + a.kind + "'");
    }
    out["kind"] = a.kind;
    out["relative_error"] = err;
    write_json_file(a.out, out);
    std::cout << "relative reconstruction error " << format_double(err) << "\n";
    return kOk;
}

// ---- bench ----

struct BenchArgs {
    std::string family = "gaussian", out, standardize = "pooled";
    std::optional<std::size_t> repeats;
    std::uint64_t seed = 1, b_seed = 1;
    std::size_t threads = 0;
    std::vector<std::string> methods;
    bool full_scale = false, no_intercept = false;
    NaFlags na;
};

int cmd_bench(const BenchArgs& a) {
    SimDesign d = SimDesign::defaults(parse_family(a.family), a.full_scale);
    if (a.repeats) d.repeats = *a.repeats;
    d.seed = a.seed;
    d.b_seed = a.b_seed;
    d.threads = a.threads;
    if (!a.methods.empty()) d.methods = a.methods;
    d.intercept = !a.no_intercept;
    d.scale = parse_scale_mode(a.standardize);
    a.na.apply(d.na);
    a.na.apply(d.tucker);
    a.na.apply(d.cp);
    d.validate();
    const BenchReport report = run_benchmark(d);
    const fs::path base(a.out);
    write_json_file(sibling(base, ".json"), report.to_json());
    write_file_atomic(sibling(base, ".md"), report.to_markdown());
    std::cout << report.to_markdown();
    for (const auto& s : report.methods)
        if (s.failures < s.repeats.size()) return kOk;
    throw NotConverged("every repeat of every method failed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tensor regression with noise-augmented l0 core regularization"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "generate train/test datasets and the true coefficient tensor");
    simulate->add_option("--family", sim.family, "gaussian | binomial | poisson");
    simulate->add_option("--seed", sim.seed, "data seed");
    simulate->add_option("--b-seed", sim.b_seed, "seed of the true coefficient tensor");
    simulate->add_option("--repeat", sim.repeat, "repeat index (selects the data stream)");
    simulate->add_option("--n-train", sim.n_train, "training size");
    simulate->add_option("--n-test", sim.n_test, "test size");
    simulate->add_option("--out-dir", sim.out_dir, "directory for train.json, test.json, true_b.json")->required();

    FitArgs fit;
    auto* fitc = app.add_subcommand("fit", "fit a tensor regression model");
    fitc->add_option("--data", fit.data, "dataset JSON")->required();
    fitc->add_option("--out", fit.out, "model JSON")->required();
    fitc->add_option("--trace", fit.trace, "loss trace CSV (default: <out>.trace.csv)");
    fitc->add_option("--method", fit.method, "na0ct2 | tucker | tucker-l1 | cp | cp-l2 | vec | vec-l1")
        ->check(CLI::IsMember(known_methods()));
    fitc->add_option("--ranks", fit.ranks, "comma-separated Tucker ranks (default: full)");
    fitc->add_option("--rank", fit.rank, "CP rank (default 6)");
    fitc->add_option("--lambda", fit.lambda, "penalty for tucker-l1, cp-l2, vec-l1; chosen by CV when absent");
    fitc->add_option("--folds", fit.folds, "cross-validation folds");
    fitc->add_option("--seed", fit.seed, "random seed");
    fitc->add_option("--standardize", fit.standardize, "pooled | position")->check(CLI::IsMember({"pooled", "position"}));
    fitc->add_flag("--no-intercept", fit.no_intercept, "fit without an intercept");
    fit.na.add(fitc);

    PredictArgs pred;
    auto* predc = app.add_subcommand("predict", "write mean predictions for a dataset");
    predc->add_option("--model", pred.model, "model JSON")->required();
    predc->add_option("--data", pred.data, "dataset JSON")->required();
    predc->add_option("--out", pred.out, "predictions CSV")->required();

    EvaluateArgs ev;
    auto* evc = app.add_subcommand("evaluate", "score a model on a dataset");
    evc->add_option("--model", ev.model, "model JSON")->required();
    evc->add_option("--data", ev.data, "dataset JSON")->required();
    evc->add_option("--predictions", ev.predictions, "score these predictions instead of recomputing");
    evc->add_option("--true-b", ev.true_b, "true coefficient tensor JSON, enables mse_b");
    evc->add_option("--tau0", ev.tau0, "core zero threshold (default 0.005 gaussian, 0.05 otherwise)");
    evc->add_option("--out", ev.out, "metrics JSON (default: stdout)");

    DecomposeArgs dec;
    auto* decc = app.add_subcommand("decompose", "Tucker (HOSVD) or CP (ALS) decomposition of a tensor");
    decc->add_option("--tensor", dec.tensor, "tensor JSON")->required();
    decc->add_option("--out", dec.out, "factors JSON")->required();
    decc->add_option("--kind", dec.kind, "tucker | cp")->check(CLI::IsMember({"tucker", "cp"}));
    decc->add_option("--ranks", dec.ranks, "comma-separated Tucker ranks (default: full)");
    decc->add_option("--rank", dec.rank, "CP rank");
    decc->add_option("--seed", dec.seed, "CP initialization seed");

    BenchArgs bench;
    auto* benchc = app.add_subcommand("bench", "run the simulation benchmark");
    benchc->add_option("--family", bench.family, "gaussian | binomial | poisson");
    benchc->add_option("--repeats", bench.repeats, "number of repeats");
    benchc->add_option("--seed", bench.seed, "data seed");
    benchc->add_option("--b-seed", bench.b_seed, "seed of the true coefficient tensor");
    benchc->add_option("--threads", bench.threads, "worker threads (0: hardware concurrency)");
    benchc->add_option("--methods", bench.methods, "methods to compare")->delimiter(',')->check(CLI::IsMember(known_methods()));
    benchc->add_option("--out", bench.out, "report path prefix; writes <out>.json and <out>.md")->required();
    benchc->add_option("--standardize", bench.standardize, "pooled | position")->check(CLI::IsMember({"pooled", "position"}));
    benchc->add_flag("--paper-scale", bench.full_scale, "published iteration budget and 200 repeats");
    benchc->add_flag("--no-intercept", bench.no_intercept, "fit without an intercept");
    bench.na.add(benchc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInvalid;
    }

    try {
        if (*simulate) return cmd_simulate(sim);
        if (*fitc) return cmd_fit(fit);
        if (*predc) return cmd_predict(pred);
        if (*evc) return cmd_evaluate(ev);
        if (*decc) return cmd_decompose(dec);
        if (*benchc) return cmd_bench(bench);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInvalid;
    } catch (const GlmError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNotConverged;
    } catch (const DecompositionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNotConverged;
    } catch (const NotConverged& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNotConverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    }
    return kInvalid;
}
