#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "pglab/model.hpp"
#include "pglab/network.hpp"
#include "pglab/rng.hpp"

namespace pglab {

struct SymmetryError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Surjective reallocation map from target hidden units [m] onto reference
/// units [m_star]; the preimages are the groups G with sizes k.
struct Assignment {
    int m_star = 1;
    std::vector<int> map;  // map[j] = reference unit of target unit j

    int m() const { return static_cast<int>(map.size()); }
    void validate() const;
    std::vector<std::vector<int>> groups() const;

    /// Contiguous near-equal blocks: unit j belongs to group (j * m_star) / m.
    static Assignment proportional(int m_star, int m);
};

/// Per-group reallocation coefficients, each on its simplex.
struct SimplexCoords {
    std::vector<Eigen::VectorXd> rho;

    void validate(double tol = 1e-9) const;
};

WeightVector permute_neurons(const NetworkSpec& spec, const WeightVector& w, int layer,
                             const std::vector<int>& perm);

/// Scales unit (layer, unit) incoming row (and its bias entry) by c and the
/// outgoing column by 1/c; function-preserving for positively homogeneous
/// activations when c > 0.
WeightVector rescale_unit(const NetworkSpec& spec, const WeightVector& w, int layer, int unit,
                          double c);

/// Sign-flip of one product pair; only defined for identity-activation
/// networks (the 1-M-1 linear example). ReLU refuses.
WeightVector sign_flip_pair(const NetworkSpec& spec, const WeightVector& w, int unit);

struct BalanceResult {
    WeightVector w;
    double scale = 1.0;
    bool degenerate = false;  // zero-norm layer: no-op
};

/// Applies the global rescale minimizing
/// lambda_l a^2 ||W_l||^2 + lambda_{l+1} a^{-2} ||W_{l+1}||^2 over a > 0;
/// afterwards the Frobenius norm ratio is sqrt(lambda_{l+1} / lambda_l).
BalanceResult balance_pair(const NetworkSpec& spec, const WeightVector& w, int layer,
                           double lambda_l, double lambda_next);

struct SplitResult {
    NetworkSpec spec;
    WeightVector w;
};

/// Replaces hidden unit `unit` of layer `layer` by k copies with in-weights
/// scaled by sqrt(rho_i) and out-weights scaled sign-preservingly by
/// sqrt(rho_i); preserves both the function and the squared-norm penalty.
SplitResult split_neuron(const NetworkSpec& spec, const WeightVector& w, int layer, int unit,
                         const Eigen::VectorXd& rho);

struct ManifoldSample {
    NetworkSpec spec;
    WeightVector w;
    SimplexCoords coords;
};

/// Splits every reference unit per the assignment with rho built from a
/// normalized squared Gaussian (rho_i = v_i^2 / ||v||^2), so each group's
/// coordinates are Dirichlet(1/2, ..., 1/2) distributed.
ManifoldSample sample_manifold(const NetworkSpec& ref_spec, const WeightVector& ref_w,
                               const Assignment& assignment, Rng& rng, int layer = 0);

/// Draw only the simplex coordinates of sample_manifold (one vector per group).
SimplexCoords sample_manifold_coords(const Assignment& assignment, Rng& rng);

/// Group-norm decomposition of an arbitrary weight vector: for unit j,
/// omega_j stacks its incoming row, bias entry and outgoing column, and
/// rho_j = ||omega_j||^2 normalized within its group.
SimplexCoords extract_rho(const NetworkSpec& spec, const WeightVector& w,
                          const Assignment& assignment, int layer = 0);

/// Weighted squared-norm regularizer sum_l lambda_l ||W_l||_F^2; biases are
/// included at the bias scale only under a Gaussian bias prior.
double penalty(const WeightVector& w, const PriorSpec& prior);

}  // namespace pglab
