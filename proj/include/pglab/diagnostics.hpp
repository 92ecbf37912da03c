#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "pglab/model.hpp"
#include "pglab/network.hpp"
#include "pglab/stats.hpp"
#include "pglab/store.hpp"

namespace pglab {

/// One reported number. Statistical estimates carry a standard error and
/// pass when |value - target| <= 3 se; deterministic identities carry an
/// absolute tolerance instead.
struct Statistic {
    double value = 0.0;
    double se = 0.0;
    double tol = 0.0;
    double target = 0.0;
    bool pass = false;

    static Statistic with_se(double value, double se, double target);
    static Statistic with_tol(double value, double tol, double target);
};

struct LayerBalance {
    int layer = 0;
    int d_weights = 0;
    Statistic b_hat;  // tau^{-2} E||W_l||^2 - d_l, target 0
};

struct PairBalance {
    int layer = 0;  // compares affine layers (layer, layer+1)
    Statistic residual;   // B_l - B_{l+1}, target 0
    Statistic frob_diff;  // E||W_l||^2 - E||W_{l+1}||^2, target tau^2 (d_l - d_{l+1})
};

struct BalancednessReport {
    std::vector<LayerBalance> layers;
    std::vector<PairBalance> pairs;
    bool all_pass = false;
};

BalancednessReport balancedness_report(const SampleStore& store, const NetworkSpec& spec,
                                       const PriorSpec& prior);

struct UnitBalance {
    int layer = 0;
    int unit = 0;
    Statistic residual;  // unit-level balance identity, target 0
};

struct NeuronwiseReport {
    std::vector<UnitBalance> units;
    bool all_pass = false;
};

NeuronwiseReport neuronwise_balance(const SampleStore& store, const NetworkSpec& spec,
                                    const PriorSpec& prior);

struct DirichletGof {
    double alpha = 0.5;
    int k = 0;
    std::vector<stats::KsResult> marginals;  // per simplex coordinate vs Beta(a, (k-1)a)
    double min_p = 1.0;
    Statistic pairwise_cov;  // target -alpha^2 / (alpha0^2 (alpha0 + 1)), alpha0 = k alpha
    bool pass = false;       // all marginal p > 0.01 and covariance within 3 SE
};

/// rho: draws x k, each row on the simplex.
DirichletGof dirichlet_gof(const Eigen::MatrixXd& rho, double alpha);

struct BlockMomentPoint {
    int m_total = 0;
    stats::MeanSe mean_sqrt_rho;
    stats::MeanSe within_cov;
    stats::MeanSe between_cov;  // zero-length batches when only one group
    bool has_between = false;
};

/// group_rho: one draws x k_g matrix per group, rows aligned across groups.
BlockMomentPoint block_moments(const std::vector<Eigen::MatrixXd>& group_rho, int n_batches = 50);

struct ScalingReport {
    std::vector<BlockMomentPoint> points;
    stats::LineFit mean_fit;  // log E[sqrt rho] against log M
    stats::LineFit cov_fit;   // log |within-block cov| against log M
};

ScalingReport block_moment_scaling(const std::vector<BlockMomentPoint>& points);

struct ConstrainedMoments {
    Statistic mean_w;    // pooled over units and both factors, target 0
    Statistic var_w;     // pooled second moment (the sign-flip symmetry pins
                         // the mean at zero); target tau^2
    Statistic cov_pair;  // pooled E[w_{1,m} w_{2,m}], target beta / M
    std::vector<Statistic> unit_cov;
};

ConstrainedMoments constrained_moments(const SampleStore& store, const NetworkSpec& spec,
                                       double beta, double tau);

struct ConformityReport {
    std::vector<Statistic> variance_ratio;   // per kernel dimension, target 1
    std::vector<stats::KsResult> normality;  // pooled KS vs N(0, tau^2)
    bool all_pass = false;
};

/// projected: (K * S) x r chain-major rows from geometry::project_samples.
ConformityReport prior_conformity_test(const Eigen::MatrixXd& projected, double tau2,
                                       int n_chains);

struct CovarianceReport {
    std::vector<int> subset;
    Eigen::MatrixXd cov;
    Eigen::MatrixXd corr;
    std::vector<int> zero_variance;  // subset positions with degenerate variance
};

CovarianceReport sample_covariance(const SampleStore& store, const std::vector<int>& subset);

struct Grid1D {
    int index = 0;
    double lo = 0.0, hi = 0.0;
    std::vector<double> density;  // counts / (n_in * bin width)
    std::int64_t n_in = 0;
};

struct Grid2D {
    int index_x = 0, index_y = 0;
    double lo = 0.0, hi = 0.0;
    int bins = 0;
    std::vector<double> density;  // row-major bins x bins, counts / (n_in * cell area)
    std::int64_t n_in = 0;
};

struct MarginalGrids {
    std::vector<Grid1D> singles;
    std::vector<Grid2D> pairs;
};

MarginalGrids marginal_grids(const SampleStore& store, const std::vector<int>& singles,
                             const std::vector<std::pair<int, int>>& pairs, int bins, double lo,
                             double hi);

void write_grid_csv(std::ostream& os, const Grid1D& grid);
void write_grid_csv(std::ostream& os, const Grid2D& grid);

}  // namespace pglab
