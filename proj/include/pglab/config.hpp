#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pglab/model.hpp"
#include "pglab/network.hpp"
#include "pglab/samplers.hpp"

namespace pglab {

enum class DataSource { kSynthetic, kCsv, kNone };

/// Resolved run configuration. The text format is line-oriented
/// `section.key = value` with `#` comment lines and comma-separated arrays;
/// unknown keys are rejected with their line number. `serialize` emits every
/// key in a fixed order, so parse -> serialize -> parse is the identity and
/// the SHA-256 of the serialization identifies the run.
struct RunConfig {
    // network
    int input_dim = 1;
    std::vector<int> widths = {4};
    int output_dim = 1;
    Activation activation = Activation::kRelu;
    bool bias = false;

    // prior
    std::vector<double> tau = {1.0};
    BiasPrior bias_prior = BiasPrior::kGaussian;
    double bias_tau = 1.0;

    // likelihood
    Family family = Family::kGaussian;
    double sigma2 = 0.01;

    // data
    DataSource source = DataSource::kSynthetic;
    std::string csv_path;
    std::string target_column;
    double beta = 1.0;
    double noise_sd = 0.1;
    int n_data = 64;
    std::array<double, 3> split = {0.7, 0.1, 0.2};
    bool standardize = false;

    // sampler
    SamplerKind sampler = SamplerKind::kHmc;
    int chains = 4;
    int warmup = 500;
    std::int64_t samples = 1000;
    int thinning = 1;
    double step_size = 0.1;
    int leapfrog_steps = 10;
    InitKind init = InitKind::kPriorDraw;
    int map_steps = 200;
    double map_learning_rate = 0.01;
    bool adapt = true;
    double target_accept = 0.0;  // 0 selects the sampler default

    // diagnostics
    std::vector<std::string> sections = {"balancedness", "covariance", "marginals"};
    int grid_bins = 60;
    double grid_lo = -3.0;
    double grid_hi = 3.0;
    std::vector<int> grid_singles;
    std::vector<std::pair<int, int>> grid_pairs;
    std::vector<int> cov_subset;

    // run
    std::uint64_t seed = 0;

    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);

    std::string serialize() const;
    std::array<std::uint8_t, 32> hash() const;
    std::string run_id() const;  // first 12 hex digits of the hash

    NetworkSpec network_spec() const;
    PriorSpec prior_spec() const;
    LikelihoodSpec likelihood_spec() const;
    ChainConfig chain_config() const;
};

struct DataSplits {
    Dataset train, val, test;
};

/// Raw CSV table: header row, numeric cells, target column selected by name.
/// Errors carry (row, column) positions.
Dataset load_csv(const std::string& path, const std::string& target_column);

/// Shuffled (CSV only), split, and optionally standardized datasets. The
/// shuffle stream is ("data/shuffle") from the run seed; standardization
/// parameters come from the train split alone.
DataSplits build_splits(const RunConfig& cfg);

}  // namespace pglab
