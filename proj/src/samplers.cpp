#include "pglab/samplers.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <thread>

namespace pglab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDivergenceThreshold = 1000.0;

Eigen::VectorXd standard_normal(int d, Rng& rng) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = rng.normal();
    return v;
}

}  // namespace

double PosteriorDensity::logp(const Eigen::VectorXd& w) const {
    try {
        return model_.log_posterior(WeightVector::from_flat(model_.network(), w));
    } catch (const NumericError&) {
        return -kInf;
    }
}

Eigen::VectorXd PosteriorDensity::grad(const Eigen::VectorXd& w) const {
    try {
        return model_.grad_log_posterior(WeightVector::from_flat(model_.network(), w)).flatten();
    } catch (const NumericError&) {
        return Eigen::VectorXd::Zero(model_.dim());
    }
}

void ChainConfig::validate() const {
    if (n_chains < 1) throw ShapeError("n_chains must be >= 1");
    if (n_samples < 1) throw ShapeError("n_samples must be >= 1");
    if (thinning < 1) throw ShapeError("thinning must be >= 1");
    if (warmup_steps < 0) throw ShapeError("warmup_steps must be >= 0");
    if (map_steps < 0) throw ShapeError("map_steps must be >= 0");
    if (!(step_size > 0.0)) throw ShapeError("step_size must be positive");
    if (leapfrog_steps < 1) throw ShapeError("leapfrog_steps must be >= 1");
}

ChainState make_state(const LogDensity& target, Eigen::VectorXd w0) {
    ChainState s;
    s.w = std::move(w0);
    s.logp = target.logp(s.w);
    s.grad = target.grad(s.w);
    return s;
}

double mala_step(ChainState& state, const LogDensity& target, double step_size, Rng& rng) {
    const double h2 = step_size * step_size;
    const Eigen::VectorXd noise = standard_normal(target.dim(), rng);
    const Eigen::VectorXd proposal = state.w + 0.5 * h2 * state.grad + step_size * noise;
    const double u = rng.uniform_pos();

    const double logp_prop = target.logp(proposal);
    state.accepted = false;
    if (!std::isfinite(logp_prop)) return 0.0;
    const Eigen::VectorXd grad_prop = target.grad(proposal);

    // forward density: ||proposal - w - h^2/2 g||^2 / (2h^2) = ||noise||^2 / 2
    const double log_q_fwd = -0.5 * noise.squaredNorm();
    const Eigen::VectorXd back = state.w - proposal - 0.5 * h2 * grad_prop;
    const double log_q_back = -back.squaredNorm() / (2.0 * h2);
    const double log_alpha = logp_prop - state.logp + log_q_back - log_q_fwd;
    const double accept_prob = std::isfinite(log_alpha) ? std::min(1.0, std::exp(log_alpha)) : 0.0;

    if (std::log(u) < log_alpha) {
        state.w = proposal;
        state.logp = logp_prop;
        state.grad = grad_prop;
        state.accepted = true;
    }
    return accept_prob;
}

void leapfrog(const LogDensity& target, Eigen::VectorXd& w, Eigen::VectorXd& p,
              Eigen::VectorXd& grad, double step_size, int n_steps) {
    p += 0.5 * step_size * grad;
    for (int i = 0; i < n_steps; ++i) {
        w += step_size * p;
        grad = target.grad(w);
        if (i + 1 < n_steps) p += step_size * grad;
    }
    p += 0.5 * step_size * grad;
}

double hmc_step(ChainState& state, const LogDensity& target, double step_size,
                int leapfrog_steps, Rng& rng) {
    Eigen::VectorXd p = standard_normal(target.dim(), rng);
    const double u = rng.uniform_pos();
    const double h0 = -state.logp + 0.5 * p.squaredNorm();

    Eigen::VectorXd w = state.w;
    Eigen::VectorXd grad = state.grad;
    leapfrog(target, w, p, grad, step_size, leapfrog_steps);

    const double logp_new = target.logp(w);
    const double h1 = -logp_new + 0.5 * p.squaredNorm();
    const double dh = h1 - h0;

    state.accepted = false;
    state.diverged = false;
    if (!std::isfinite(dh) || std::fabs(dh) > kDivergenceThreshold) {
        state.diverged = true;
        return 0.0;
    }
    const double accept_prob = std::min(1.0, std::exp(-dh));
    if (std::log(u) < -dh) {
        state.w = std::move(w);
        state.logp = logp_new;
        state.grad = std::move(grad);
        state.accepted = true;
    }
    return accept_prob;
}

DualAveraging::DualAveraging(double initial_step, double target_accept)
    : target_(target_accept),
      mu_(std::log(10.0 * initial_step)),
      current_(initial_step),
      averaged_(initial_step) {
    log_avg_ = std::log(initial_step);
}

void DualAveraging::update(double accept_prob) {
    constexpr double kGamma = 0.05;
    constexpr double kT0 = 10.0;
    constexpr double kKappa = 0.75;
    ++t_;
    const double frac = 1.0 / (t_ + kT0);
    h_bar_ = (1.0 - frac) * h_bar_ + frac * (target_ - accept_prob);
    const double log_step = mu_ - std::sqrt(static_cast<double>(t_)) / kGamma * h_bar_;
    const double eta = std::pow(static_cast<double>(t_), -kKappa);
    log_avg_ = eta * log_step + (1.0 - eta) * log_avg_;
    current_ = std::exp(log_step);
    averaged_ = std::exp(log_avg_);
}

Eigen::VectorXd map_fit(const LogDensity& target, const Eigen::VectorXd& w0, int steps,
                        double learning_rate) {
    double best_logp = target.logp(w0);
    if (!std::isfinite(best_logp))
        throw NumericError("prior", "map_fit needs a finite initial log-posterior");
    Eigen::VectorXd best = w0;
    Eigen::VectorXd w = w0;
    for (int i = 0; i < steps; ++i) {
        const Eigen::VectorXd g = target.grad(w);
        if (!g.allFinite()) break;
        w += learning_rate * g;
        const double lp = target.logp(w);
        if (!std::isfinite(lp)) break;
        if (lp > best_logp) {
            best_logp = lp;
            best = w;
        }
    }
    return best;
}

namespace {

void run_one_chain(const LogDensity& target, const ChainConfig& cfg,
                   const InitSampler& init_sampler, SampleStore& store, int chain) {
    Rng rng(cfg.seed, "chain", static_cast<std::uint64_t>(chain));
    Eigen::VectorXd w0 = init_sampler(rng);
    ChainMeta& meta = store.chain_meta()[static_cast<std::size_t>(chain)];
    meta.warmup_steps = cfg.warmup_steps;
    meta.init_kind = cfg.init == InitKind::kMapWarmstart ? "map_warmstart" : "prior_draw";

    if (cfg.init == InitKind::kMapWarmstart)
        w0 = map_fit(target, w0, cfg.map_steps, cfg.map_learning_rate);

    ChainState state = make_state(target, w0);
    // The leapfrog count is drawn uniformly from [ceil(L/2), L] per trajectory.
    // A fixed count makes trajectories near-periodic whenever L * step matches
    // a multiple of a stiff mode's period, which freezes that coordinate while
    // still accepting; jitter breaks the resonance.
    const auto do_step = [&](double step) {
        if (cfg.kind != SamplerKind::kHmc) return mala_step(state, target, step, rng);
        const int lo = (cfg.leapfrog_steps + 1) / 2;
        const int n = lo + static_cast<int>(rng.below(
                               static_cast<std::uint64_t>(cfg.leapfrog_steps - lo + 1)));
        return hmc_step(state, target, step, n, rng);
    };

    double step = cfg.step_size;
    if (cfg.warmup_steps > 0) {
        DualAveraging adapt(cfg.step_size, cfg.resolved_target_accept());
        for (int i = 0; i < cfg.warmup_steps; ++i) {
            const double a = do_step(cfg.adapt_step_size ? adapt.current() : cfg.step_size);
            if (cfg.adapt_step_size) adapt.update(a);
        }
        if (cfg.adapt_step_size) step = adapt.averaged();
    }

    double* out = store.chain_data(chain);
    const int d = store.dim();
    std::int64_t accepted = 0;
    for (std::int64_t s = 0; s < cfg.n_samples; ++s) {
        for (int t = 0; t < cfg.thinning; ++t) {
            do_step(step);
            if (state.accepted) ++accepted;
        }
        std::memcpy(out + s * d, state.w.data(), sizeof(double) * static_cast<std::size_t>(d));
    }
    meta.accept_rate =
        static_cast<double>(accepted) / static_cast<double>(cfg.n_samples * cfg.thinning);
}

}  // namespace

SampleStore run_chains(const LogDensity& target, const std::vector<LayerShape>& shapes,
                       const ChainConfig& cfg, const InitSampler& init_sampler, int n_threads,
                       std::array<std::uint8_t, 32> config_hash) {
    cfg.validate();
    SampleStore store(shapes, cfg.n_chains, cfg.n_samples, cfg.seed, config_hash);
    if (store.dim() != target.dim())
        throw ShapeError("store dimension " + std::to_string(store.dim()) +
                         " does not match target dimension " + std::to_string(target.dim()));

    const int workers = std::max(1, std::min(n_threads, cfg.n_chains));
    if (workers == 1) {
        for (int k = 0; k < cfg.n_chains; ++k) {
            try {
                run_one_chain(target, cfg, init_sampler, store, k);
            } catch (const std::exception&) {
                store.chain_meta()[static_cast<std::size_t>(k)].failed = true;
            }
        }
        return store;
    }

    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int k = next.fetch_add(1);
            if (k >= cfg.n_chains) return;
            try {
                run_one_chain(target, cfg, init_sampler, store, k);
            } catch (const std::exception&) {
                store.chain_meta()[static_cast<std::size_t>(k)].failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return store;
}

SampleStore run_chains(const PosteriorModel& model, const ChainConfig& cfg, int n_threads,
                       std::array<std::uint8_t, 32> config_hash) {
    PosteriorDensity density(model);
    const auto init = [&model](Rng& rng) { return model.sample_prior(rng).flatten(); };
    return run_chains(density, SampleStore::shapes_of(model.network()), cfg, init, n_threads,
                      config_hash);
}

TrapEstimate trap_probability(const NetworkSpec& spec,
                              const std::function<Eigen::MatrixXd(Rng&)>& first_layer_sampler,
                              const Eigen::VectorXd& x, std::int64_t n_draws, Rng& rng) {
    if (n_draws < 1) throw ShapeError("trap_probability needs at least one draw");
    if (spec.n_hidden() < 1) throw ShapeError("network has no hidden layer");
    std::int64_t trapped = 0;
    for (std::int64_t i = 0; i < n_draws; ++i) {
        const Eigen::MatrixXd w1 = first_layer_sampler(rng);
        if (w1.rows() != spec.widths[0] || w1.cols() != spec.input_dim)
            throw ShapeError("first-layer draw has wrong shape");
        if (((w1 * x).array() < 0.0).all()) ++trapped;
    }
    TrapEstimate out;
    out.n_draws = n_draws;
    out.estimate = static_cast<double>(trapped) / static_cast<double>(n_draws);
    out.se = std::sqrt(out.estimate * (1.0 - out.estimate) / static_cast<double>(n_draws));
    return out;
}

std::function<Eigen::MatrixXd(Rng&)> gaussian_first_layer(int m, int p, double tau) {
    return [m, p, tau](Rng& rng) {
        Eigen::MatrixXd w(m, p);
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < p; ++c) w(r, c) = tau * rng.normal();
        return w;
    };
}

}  // namespace pglab
