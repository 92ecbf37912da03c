#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "pglab/model.hpp"
#include "pglab/rng.hpp"
#include "pglab/store.hpp"

namespace pglab {

/// Differentiable unnormalized log-density over a flat parameter vector.
/// logp may return -inf for a zero-density point; it must not return NaN.
class LogDensity {
public:
    virtual ~LogDensity() = default;
    virtual int dim() const = 0;
    virtual double logp(const Eigen::VectorXd& w) const = 0;
    virtual Eigen::VectorXd grad(const Eigen::VectorXd& w) const = 0;
};

/// PosteriorModel over its flat parametrization. Non-finite evaluations are
/// mapped to -inf so MH steps auto-reject instead of propagating exceptions.
class PosteriorDensity final : public LogDensity {
public:
    explicit PosteriorDensity(const PosteriorModel& model) : model_(model) {}
    int dim() const override { return model_.dim(); }
    double logp(const Eigen::VectorXd& w) const override;
    Eigen::VectorXd grad(const Eigen::VectorXd& w) const override;
    const PosteriorModel& model() const { return model_; }

private:
    const PosteriorModel& model_;
};

class IsotropicGaussianDensity final : public LogDensity {
public:
    IsotropicGaussianDensity(int dim, double variance) : dim_(dim), var_(variance) {}
    int dim() const override { return dim_; }
    double logp(const Eigen::VectorXd& w) const override { return -w.squaredNorm() / (2.0 * var_); }
    Eigen::VectorXd grad(const Eigen::VectorXd& w) const override { return -w / var_; }

private:
    int dim_;
    double var_;
};

/// 2-D target p(b, d | y) for the conjugate 1-2-1 model: standard normal
/// priors on (b, d) times the closed-form marginal likelihood.
class Conjugate121Density final : public LogDensity {
public:
    Conjugate121Density(Eigen::VectorXd x, Eigen::VectorXd y, double sigma2)
        : x_(std::move(x)), y_(std::move(y)), sigma2_(sigma2) {}
    int dim() const override { return 2; }
    double logp(const Eigen::VectorXd& w) const override {
        return -0.5 * w.squaredNorm() + conjugate_121_marginal(w[0], w[1], x_, y_, sigma2_);
    }
    Eigen::VectorXd grad(const Eigen::VectorXd& w) const override {
        return -w + conjugate_121_marginal_grad(w[0], w[1], x_, y_, sigma2_);
    }

private:
    Eigen::VectorXd x_, y_;
    double sigma2_;
};

enum class SamplerKind { kHmc, kMala };
enum class InitKind { kPriorDraw, kMapWarmstart };

struct ChainConfig {
    int n_chains = 4;
    int warmup_steps = 500;
    std::int64_t n_samples = 1000;
    int thinning = 1;
    double step_size = 0.1;
    int leapfrog_steps = 10;
    int map_steps = 200;
    double map_learning_rate = 0.01;
    InitKind init = InitKind::kPriorDraw;
    SamplerKind kind = SamplerKind::kHmc;
    std::uint64_t seed = 0;
    bool adapt_step_size = true;
    double target_accept = 0.0;  // 0 picks the per-kind default (0.8 HMC, 0.6 MALA)

    double resolved_target_accept() const {
        if (target_accept > 0.0) return target_accept;
        return kind == SamplerKind::kHmc ? 0.8 : 0.6;
    }
    void validate() const;
};

struct ChainState {
    Eigen::VectorXd w;
    double logp = 0.0;
    Eigen::VectorXd grad;
    bool accepted = false;
    bool diverged = false;
};

ChainState make_state(const LogDensity& target, Eigen::VectorXd w0);

/// Metropolis-adjusted Langevin step; the acceptance ratio includes the
/// asymmetric proposal densities. Returns the acceptance probability used.
double mala_step(ChainState& state, const LogDensity& target, double step_size, Rng& rng);

/// One HMC step: momentum resample, leapfrog, MH accept on the Hamiltonian
/// error. |dH| > 1000 or a non-finite trajectory rejects and flags divergence.
double hmc_step(ChainState& state, const LogDensity& target, double step_size,
                int leapfrog_steps, Rng& rng);

/// Leapfrog integrator exposed for reversibility / energy-scaling checks.
void leapfrog(const LogDensity& target, Eigen::VectorXd& w, Eigen::VectorXd& p,
              Eigen::VectorXd& grad, double step_size, int n_steps);

/// Dual-averaging step-size adaptation (used during warmup only).
class DualAveraging {
public:
    DualAveraging(double initial_step, double target_accept);
    void update(double accept_prob);
    double current() const { return current_; }
    double averaged() const { return averaged_; }

private:
    double target_;
    double mu_;
    double log_avg_ = 0.0;
    double h_bar_ = 0.0;
    double current_;
    double averaged_;
    int t_ = 0;
};

/// Fixed-step gradient ascent on the log-density; returns the best iterate
/// seen. A non-finite gradient aborts with the last finite best.
Eigen::VectorXd map_fit(const LogDensity& target, const Eigen::VectorXd& w0, int steps,
                        double learning_rate);

using InitSampler = std::function<Eigen::VectorXd(Rng&)>;

/// K independent chains. Chain k derives its stream from (seed, "chain", k);
/// step size is dual-averaged during warmup and frozen for retained sampling.
SampleStore run_chains(const LogDensity& target, const std::vector<LayerShape>& shapes,
                       const ChainConfig& cfg, const InitSampler& init_sampler,
                       int n_threads = 1,
                       std::array<std::uint8_t, 32> config_hash = {});

/// Convenience wrapper: prior-draw or MAP-warmstart initialization from the
/// model's own prior, store shapes from the network.
SampleStore run_chains(const PosteriorModel& model, const ChainConfig& cfg, int n_threads = 1,
                       std::array<std::uint8_t, 32> config_hash = {});

struct TrapEstimate {
    double estimate = 0.0;
    double se = 0.0;
    std::int64_t n_draws = 0;
};

/// Monte-Carlo estimate of the probability that every first-layer
/// pre-activation at input x is negative under the given weight draw.
TrapEstimate trap_probability(const NetworkSpec& spec,
                              const std::function<Eigen::MatrixXd(Rng&)>& first_layer_sampler,
                              const Eigen::VectorXd& x, std::int64_t n_draws, Rng& rng);

/// First-layer sampler with iid N(0, tau^2) entries (the symmetric case).
std::function<Eigen::MatrixXd(Rng&)> gaussian_first_layer(int m, int p, double tau);

}  // namespace pglab
