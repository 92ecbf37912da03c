#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "pglab/config.hpp"

using namespace pglab;
namespace fs = std::filesystem;

namespace {

const char* kFullConfig = R"(# regression run
network.input_dim = 2
network.widths = 4, 4
network.output_dim = 1
network.activation = relu
network.bias = true

prior.tau = 0.5, 1.0, 1.5
prior.bias_prior = flat
prior.bias_tau = 2.0

likelihood.family = gaussian
likelihood.sigma2 = 0.04

data.source = synthetic
data.beta = 1.25
data.noise_sd = 0.2
data.n = 40
data.split = 0.5, 0.25, 0.25
data.standardize = true

sampler.kind = mala
sampler.chains = 3
sampler.warmup = 100
sampler.samples = 250
sampler.thinning = 2
sampler.step_size = 0.05
sampler.leapfrog_steps = 7
sampler.init = map
sampler.map_steps = 50
sampler.map_learning_rate = 0.02
sampler.adapt = false
sampler.target_accept = 0.7

diagnostics.sections = balancedness, moments
diagnostics.grid_bins = 32
diagnostics.grid_lo = -2.0
diagnostics.grid_hi = 2.0
diagnostics.grid_singles = 0, 3
diagnostics.grid_pairs = 0:1, 2:3
diagnostics.cov_subset = 0, 1, 2

run.seed = 99
)";

struct TempFile {
    fs::path path;
    explicit TempFile(const std::string& name, const std::string& content)
        : path(fs::temp_directory_path() / name) {
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() {
        std::error_code ec;
        fs::remove(path, ec);
    }
};

int error_line(const std::string& text) {
    try {
        RunConfig::parse(text);
    } catch (const ConfigError& e) {
        return e.line;
    }
    return -1;
}

}  // namespace

TEST_CASE("parse fills every field from the text form") {
    const RunConfig cfg = RunConfig::parse(kFullConfig);
    CHECK(cfg.input_dim == 2);
    CHECK(cfg.widths == std::vector<int>{4, 4});
    CHECK(cfg.activation == Activation::kRelu);
    CHECK(cfg.bias);
    CHECK(cfg.tau == std::vector<double>{0.5, 1.0, 1.5});
    CHECK(cfg.bias_prior == BiasPrior::kFlat);
    CHECK(cfg.sigma2 == 0.04);
    CHECK(cfg.source == DataSource::kSynthetic);
    CHECK(cfg.beta == 1.25);
    CHECK(cfg.n_data == 40);
    CHECK(cfg.split[1] == 0.25);
    CHECK(cfg.standardize);
    CHECK(cfg.sampler == SamplerKind::kMala);
    CHECK(cfg.chains == 3);
    CHECK(cfg.samples == 250);
    CHECK(cfg.thinning == 2);
    CHECK(cfg.init == InitKind::kMapWarmstart);
    CHECK(!cfg.adapt);
    CHECK(cfg.target_accept == 0.7);
    CHECK(cfg.sections == std::vector<std::string>{"balancedness", "moments"});
    CHECK(cfg.grid_singles == std::vector<int>{0, 3});
    REQUIRE(cfg.grid_pairs.size() == 2);
    CHECK(cfg.grid_pairs[0] == std::pair<int, int>{0, 1});
    CHECK(cfg.cov_subset == std::vector<int>{0, 1, 2});
    CHECK(cfg.seed == 99);

    const NetworkSpec spec = cfg.network_spec();
    CHECK(spec.widths == std::vector<int>{4, 4});
    CHECK(spec.layer_bias == std::vector<bool>{true, true, true});
    const PriorSpec prior = cfg.prior_spec();
    CHECK(prior.tau(2) == 1.5);
    const ChainConfig cc = cfg.chain_config();
    CHECK(cc.kind == SamplerKind::kMala);
    CHECK(cc.n_chains == 3);
    CHECK(cc.seed == 99);
}

TEST_CASE("parse -> serialize -> parse is the identity") {
    const RunConfig a = RunConfig::parse(kFullConfig);
    const std::string text = a.serialize();
    const RunConfig b = RunConfig::parse(text);
    CHECK(b.serialize() == text);
    CHECK(a.hash() == b.hash());
    CHECK(a.run_id() == b.run_id());
    CHECK(a.run_id().size() == 12);

    // defaults serialize and round-trip too
    const RunConfig d;
    CHECK(RunConfig::parse(d.serialize()).serialize() == d.serialize());
}

TEST_CASE("hash distinguishes configs") {
    const RunConfig a = RunConfig::parse(kFullConfig);
    RunConfig b = a;
    b.seed = 100;
    CHECK(a.hash() != b.hash());
    CHECK(a.run_id() != b.run_id());
}

TEST_CASE("parse errors carry their line numbers") {
    CHECK(error_line("network.input_dim = 2\nnonsense line\n") == 2);
    CHECK(error_line("bad_key_without_section = 1\n") == 1);
    CHECK(error_line("network.made_up = 3\n") == 1);
    CHECK(error_line("run.seed = 1\nrun.seed = 2\n") == 2);
    CHECK(error_line("network.input_dim = abc\n") == 1);
    CHECK(error_line("\n\ndata.split = 0.5, 0.5, 0.5\n") == 3);
    CHECK(error_line("diagnostics.sections = balancedness, nope\n") == 1);
    CHECK(error_line("sampler.kind = nuts\n") == 1);
    CHECK(error_line("diagnostics.grid_pairs = 0-1\n") == 1);
}

TEST_CASE("load reads a file and missing files raise IoError") {
    TempFile f("pglab-test-config.txt", kFullConfig);
    const RunConfig cfg = RunConfig::load(f.path.string());
    CHECK(cfg.seed == 99);
    CHECK_THROWS_AS(RunConfig::load("/nonexistent/pglab.txt"), IoError);
}

TEST_CASE("synthetic splits are reproducible and sized by the fractions") {
    RunConfig cfg;
    cfg.input_dim = 1;
    cfg.widths = {2};
    cfg.n_data = 40;
    cfg.split = {0.5, 0.25, 0.25};
    cfg.seed = 7;
    const DataSplits a = build_splits(cfg);
    const DataSplits b = build_splits(cfg);
    CHECK(a.train.n() == 20);
    CHECK(a.val.n() == 10);
    CHECK(a.test.n() == 10);
    CHECK(a.train.X == b.train.X);
    CHECK(a.test.y == b.test.y);

    cfg.seed = 8;
    const DataSplits c = build_splits(cfg);
    CHECK((a.train.X - c.train.X).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("csv loading, shuffling and standardization") {
    const std::string csv =
        "x1,x2,target\n"
        "1.0,2.0,0.5\n"
        "2.0,1.0,1.5\n"
        "3.0,4.0,2.5\n"
        "4.0,3.0,3.5\n"
        "5.0,6.0,4.5\n"
        "6.0,5.0,5.5\n"
        "7.0,8.0,6.5\n"
        "8.0,7.0,7.5\n"
        "9.0,10.0,8.5\n"
        "10.0,9.0,9.5\n";
    TempFile f("pglab-test-data.csv", csv);

    const Dataset raw = load_csv(f.path.string(), "target");
    CHECK(raw.n() == 10);
    CHECK(raw.p() == 2);
    CHECK(raw.y(0, 0) == 0.5);
    CHECK(raw.X(9, 1) == 9.0);

    RunConfig cfg;
    cfg.input_dim = 2;
    cfg.widths = {2};
    cfg.source = DataSource::kCsv;
    cfg.csv_path = f.path.string();
    cfg.target_column = "target";
    cfg.split = {0.7, 0.1, 0.2};
    cfg.standardize = true;
    cfg.seed = 3;

    const DataSplits s = build_splits(cfg);
    CHECK(s.train.n() == 7);
    CHECK(s.val.n() == 1);
    CHECK(s.test.n() == 2);
    CHECK(s.train.standardization.active);
    CHECK(std::fabs(s.train.X.col(0).mean()) <= 1e-12);
    CHECK(std::fabs(s.train.y.col(0).mean()) <= 1e-12);
    // val and test reuse the train parameters, so their means are off zero
    const DataSplits t = build_splits(cfg);
    CHECK(s.train.X == t.train.X);

    CHECK_THROWS_AS(load_csv(f.path.string(), "missing"), IoError);
    CHECK_THROWS_AS(load_csv("/nonexistent/data.csv", "target"), IoError);
}

TEST_CASE("csv cell errors name the position") {
    const std::string bad =
        "a,b,target\n"
        "1.0,2.0,3.0\n"
        "1.0,oops,3.0\n";
    TempFile f("pglab-test-bad.csv", bad);
    try {
        load_csv(f.path.string(), "target");
        FAIL("expected an error");
    } catch (const IoError& e) {
        const std::string what = e.what();
        CHECK(what.find("row 3") != std::string::npos);
        CHECK(what.find("column 2") != std::string::npos);
    }
}

TEST_CASE("config validation beyond syntax") {
    CHECK_THROWS_AS(RunConfig::parse("network.widths = 0\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("network.widths = \n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("sampler.chains = 0\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("data.source = csv\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("diagnostics.grid_bins = 0\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("diagnostics.grid_lo = 2\ndiagnostics.grid_hi = -2\n"),
                    ConfigError);
}
