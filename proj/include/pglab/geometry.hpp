#pragma once

#include <Eigen/Dense>
#include <vector>

#include "pglab/network.hpp"
#include "pglab/rng.hpp"
#include "pglab/store.hpp"

namespace pglab {

/// SVD split of a Jacobian into row space and kernel at a relative tolerance.
struct JacobianBundle {
    Eigen::MatrixXd J;
    Eigen::VectorXd singular_values;
    Eigen::MatrixXd Z;      // d x r orthonormal kernel basis
    Eigen::MatrixXd image;  // d x rank orthonormal row-space basis
    int rank = 0;

    int kernel_dim() const { return static_cast<int>(Z.cols()); }
};

/// Singular values below rel_tol * sigma_max are assigned to the kernel.
JacobianBundle kernel_basis(const Eigen::MatrixXd& J, double rel_tol = 1e-8);

struct GaussNewtonRestriction {
    Eigen::MatrixXd h_star;              // J^T Upsilon J + 2 lambda I
    Eigen::MatrixXd restricted;          // Z^T (H*)^{-1} Z
    double tau2 = 0.0;                   // 1 / (2 lambda)
    double max_deviation = 0.0;          // ||restricted - tau2 I||_max
};

/// On ker(J) the inverse Gauss-Newton curvature is exactly the prior
/// covariance tau^2 I; the deviation is asserted at 1e-8 (scaled by tau^2).
GaussNewtonRestriction gauss_newton_restriction(const Eigen::MatrixXd& J,
                                                const Eigen::MatrixXd& upsilon, double lambda,
                                                double rel_tol = 1e-8);
GaussNewtonRestriction gauss_newton_restriction(const Eigen::MatrixXd& J, double upsilon_scale,
                                                double lambda, double rel_tol = 1e-8);

/// Rows Z^T (w_s - w_ref) over every sample of the store (chain-major order).
Eigen::MatrixXd project_samples(const SampleStore& store, const Eigen::VectorXd& w_ref,
                                const Eigen::MatrixXd& Z);

struct ProbeCluster {
    std::vector<int> units;
    double s_min = 0.0;  // smallest singular value on the zero-sum subspace
};

struct ProbeResult {
    std::vector<ProbeCluster> clusters;  // multi-unit clusters only
    std::vector<int> dropped_units;      // dead or constant activation columns
    int n_active = 0;
    double threshold = 0.0;              // similarity cutoff actually used
    bool all_dead = false;
};

enum class ProbeNull { kGaussian, kPermutation };

struct ProbeOptions {
    double alpha = 0.05;                 // family-wise level over all unit pairs
    int layer = 0;
    ProbeNull null = ProbeNull::kGaussian;
    int n_permutations = 200;
    std::uint64_t permutation_seed = 0;
};

/// Clusters hidden units whose activation columns are correlated beyond a
/// Bonferroni-calibrated null, then scores each cluster by the minimum
/// singular value of the unstandardized activation columns restricted to
/// zero-sum reweightings. S == 0 means an exactly likelihood-flat direction.
ProbeResult flat_direction_probe(const NetworkSpec& spec, const WeightVector& w,
                                 const Eigen::MatrixXd& X, const ProbeOptions& options = {});

struct ProbeSummary {
    std::int64_t n_samples = 0;
    std::int64_t samples_with_clusters = 0;
    double median_min_s = 0.0;  // median over samples of the per-sample smallest S
};

ProbeSummary probe_store(const NetworkSpec& spec, const SampleStore& store,
                         const Eigen::MatrixXd& X, const ProbeOptions& options = {},
                         std::int64_t stride = 1);

}  // namespace pglab
