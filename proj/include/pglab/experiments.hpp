#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pglab/config.hpp"
#include "pglab/model.hpp"
#include "pglab/store.hpp"

namespace pglab::experiments {

/// One acceptance criterion: a hard pass/fail verdict plus the measured
/// numbers behind it, one finding per line.
struct CriterionResult {
    int index = 0;
    std::string name;
    bool pass = false;
    std::vector<std::string> lines;
};

int criterion_count();

/// Runs acceptance criterion `index` (1-based). Exported grids and tables go
/// under `out_dir` (created on demand); pass an empty string to skip exports.
CriterionResult run_criterion(int index, const std::string& out_dir, int n_threads);

/// Exact moments of the conjugate 1-2-1 posterior over (b, d, a, c): the
/// (a, c) block is integrated in closed form conditional on (b, d), and
/// (b, d) on a uniform grid over [lo, hi]^2 weighted by prior x marginal
/// likelihood.
struct Quadrature121 {
    Eigen::Vector4d mean;
    Eigen::Matrix4d cov;
};

Quadrature121 quadrature_121(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double sigma2,
                             int grid, double lo, double hi);

/// Posterior run of the bias-free 1-M-1 identity-activation product network
/// on the synthetic linear task; shared by the acceptance suite and the
/// `demo onemone` command.
struct OneMOneRun {
    RunConfig config;
    SampleStore store;
    Dataset train;
};

OneMOneRun run_one_m_one(int m, double tau, double beta, double noise_sd, double sigma2,
                         int n_data, int chains, std::int64_t samples, int warmup,
                         std::uint64_t seed, int n_threads);

}  // namespace pglab::experiments
