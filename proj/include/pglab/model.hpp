#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pglab/network.hpp"
#include "pglab/rng.hpp"

namespace pglab {

enum class BiasPrior { kGaussian, kFlat };

/// Gaussian weight prior with per-layer scale tau_l; lambda_l = 1/(2 tau_l^2).
/// A flat bias prior contributes nothing to the log-density or its gradient.
struct PriorSpec {
    std::vector<double> layer_tau;  // one entry broadcasts to all affine layers
    BiasPrior bias_prior = BiasPrior::kGaussian;
    double bias_tau = 1.0;

    double tau(int layer) const;
    double lambda(int layer) const { double t = tau(layer); return 1.0 / (2.0 * t * t); }
    void validate(const NetworkSpec& spec) const;

    static PriorSpec isotropic(double tau_all);
};

enum class Family { kGaussian, kBernoulliLogit, kCategoricalLogit };

struct LikelihoodSpec {
    Family family = Family::kGaussian;
    double sigma2 = 1.0;  // Gaussian noise variance; the Gauss-Newton weight is I/sigma2

    void validate() const;
};

/// log p(y | f) for a single observation, including normalizing constants.
double log_predictive_density(const LikelihoodSpec& lik, const Eigen::VectorXd& f,
                              const Eigen::VectorXd& y);

enum class Split { kTrain, kVal, kTest };

struct Standardization {
    bool active = false;
    Eigen::VectorXd x_mean, x_scale;
    Eigen::VectorXd y_mean, y_scale;
};

struct Dataset {
    Eigen::MatrixXd X;  // n x p
    Eigen::MatrixXd y;  // n x output_dim; integer class labels live in column 0
    Standardization standardization;

    int n() const { return static_cast<int>(X.rows()); }
    int p() const { return static_cast<int>(X.cols()); }
};

/// y_i = beta * x_i + eps_i with x_i standard normal, reproducible from the seed.
struct SyntheticLinearTask {
    double beta = 1.0;
    double noise_sd = 0.1;
    int n = 64;
    std::uint64_t seed = 0;

    Dataset generate() const;
};

/// Immutable bundle of network, prior, likelihood and data; evaluates the
/// unnormalized log-posterior and its exact gradient. Additive constants of
/// all log-densities are dropped uniformly.
class PosteriorModel {
public:
    PosteriorModel(NetworkSpec spec, PriorSpec prior, LikelihoodSpec lik, Dataset data);

    const NetworkSpec& network() const { return spec_; }
    const PriorSpec& prior() const { return prior_; }
    const LikelihoodSpec& likelihood() const { return lik_; }
    const Dataset& data() const { return data_; }
    int dim() const { return spec_.dim(); }

    double log_prior(const WeightVector& w) const;
    WeightVector grad_log_prior(const WeightVector& w) const;
    double log_likelihood(const WeightVector& w) const;
    WeightVector grad_log_likelihood(const WeightVector& w) const;
    double log_posterior(const WeightVector& w) const;
    WeightVector grad_log_posterior(const WeightVector& w) const;

    /// Draw from the prior; flat-prior biases are initialized N(0, 1).
    WeightVector sample_prior(Rng& rng) const;

    /// Per-sample log predictive density log p(y | f(x; w)) for one output row.
    double predictive_logdens(const Eigen::VectorXd& f, const Eigen::VectorXd& y) const;

private:
    NetworkSpec spec_;
    PriorSpec prior_;
    LikelihoodSpec lik_;
    Dataset data_;
};

struct Conjugate121 {
    Eigen::Vector2d mean;
    Eigen::Matrix2d cov;
    double condition_number;
};

/// Conditional posterior of the outer weights (a, c) of
/// f(x) = a relu(b x) + c relu(d x) with standard normal priors.
Conjugate121 conjugate_121_conditional(double b, double d, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& y, double sigma2);

/// Log marginal likelihood log p(y | b, d) = log N(y; 0, sigma2 I + Phi Phi^T).
double conjugate_121_marginal(double b, double d, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& y, double sigma2);

/// Gradient of the marginal with respect to (b, d).
Eigen::Vector2d conjugate_121_marginal_grad(double b, double d, const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& y, double sigma2);

}  // namespace pglab
