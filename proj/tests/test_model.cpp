#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "pglab/model.hpp"
#include "pglab/rng.hpp"
#include "pglab/symmetry.hpp"

using namespace pglab;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Dataset empty_data(int p, int out) {
    Dataset d;
    d.X.resize(0, p);
    d.y.resize(0, out);
    return d;
}

Dataset gaussian_data(const NetworkSpec& spec, const WeightVector& w, int n, double noise,
                      Rng& rng) {
    Dataset d;
    d.X.resize(n, spec.input_dim);
    for (int i = 0; i < d.X.size(); ++i) d.X.data()[i] = rng.normal();
    d.y = forward_batch(spec, w, d.X);
    for (int i = 0; i < d.y.size(); ++i) d.y.data()[i] += noise * rng.normal();
    return d;
}

}  // namespace

TEST_CASE("log_prior: single weight against the closed form") {
    const NetworkSpec spec = NetworkSpec::shallow(1, 1, 1, Activation::kIdentity);
    const PriorSpec prior = PriorSpec::isotropic(1.0);
    const PosteriorModel model(spec, prior, LikelihoodSpec{}, empty_data(1, 1));

    WeightVector w = WeightVector::zeros(spec);
    const WeightVector g0 = model.grad_log_prior(w);
    CHECK(g0.flatten().cwiseAbs().maxCoeff() == 0.0);

    w.layers[0].W(0, 0) = 2.0;
    const double drop = model.log_prior(w) - model.log_prior(WeightVector::zeros(spec));
    CHECK(drop == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(model.grad_log_prior(w).layers[0].W(0, 0) == doctest::Approx(-2.0));
}

TEST_CASE("grad_log_prior matches central differences") {
    Rng rng(21, "model");
    NetworkSpec spec = NetworkSpec::shallow(2, 3, 1, Activation::kRelu);
    spec.layer_bias = {true, true};
    PriorSpec prior;
    prior.layer_tau = {0.7, 1.3};
    prior.bias_tau = 0.9;
    const PosteriorModel model(spec, prior, LikelihoodSpec{}, empty_data(2, 1));

    Eigen::VectorXd flat(spec.dim());
    for (int i = 0; i < flat.size(); ++i) flat[i] = rng.normal();
    const Eigen::VectorXd g =
        model.grad_log_prior(WeightVector::from_flat(spec, flat)).flatten();
    for (int j = 0; j < flat.size(); ++j) {
        Eigen::VectorXd lo = flat, hi = flat;
        lo[j] -= 1e-6;
        hi[j] += 1e-6;
        const double fd = (model.log_prior(WeightVector::from_flat(spec, hi)) -
                           model.log_prior(WeightVector::from_flat(spec, lo))) /
                          2e-6;
        CHECK(std::fabs(g[j] - fd) <= 1e-8 * std::max(1.0, std::fabs(g[j])));
    }
}

TEST_CASE("flat bias prior contributes nothing") {
    NetworkSpec spec = NetworkSpec::shallow(1, 2, 1, Activation::kRelu);
    spec.layer_bias = {true, true};
    PriorSpec flat_prior = PriorSpec::isotropic(1.0);
    flat_prior.bias_prior = BiasPrior::kFlat;
    const PosteriorModel model(spec, flat_prior, LikelihoodSpec{}, empty_data(1, 1));

    Rng rng(22, "model");
    Eigen::VectorXd v(spec.dim());
    for (int i = 0; i < v.size(); ++i) v[i] = rng.normal();
    WeightVector w = WeightVector::from_flat(spec, v);
    const double base = model.log_prior(w);
    const WeightVector g = model.grad_log_prior(w);
    for (int l = 0; l < 2; ++l) {
        CHECK(g.layers[l].b->cwiseAbs().maxCoeff() == 0.0);
        (*w.layers[l].b)[0] += 5.0;
        CHECK(model.log_prior(w) == base);
    }
}

TEST_CASE("log_posterior: no data equals the prior") {
    const NetworkSpec spec = NetworkSpec::shallow(2, 3, 1, Activation::kRelu);
    const PriorSpec prior = PriorSpec::isotropic(0.8);
    const PosteriorModel model(spec, prior, LikelihoodSpec{}, empty_data(2, 1));
    Rng rng(23, "model");
    Eigen::VectorXd v(spec.dim());
    for (int i = 0; i < v.size(); ++i) v[i] = rng.normal();
    const WeightVector w = WeightVector::from_flat(spec, v);
    CHECK(model.log_posterior(w) == model.log_prior(w));
}

TEST_CASE("log_likelihood: perfect fit leaves only the normalization") {
    const NetworkSpec spec = NetworkSpec::shallow(1, 2, 1, Activation::kRelu);
    Rng rng(24, "model");
    Eigen::VectorXd v(spec.dim());
    for (int i = 0; i < v.size(); ++i) v[i] = rng.normal();
    const WeightVector w = WeightVector::from_flat(spec, v);

    Dataset d;
    d.X.resize(5, 1);
    for (int i = 0; i < 5; ++i) d.X(i, 0) = rng.normal();
    d.y = forward_batch(spec, w, d.X);

    LikelihoodSpec lik;
    lik.sigma2 = 0.25;
    const PosteriorModel model(spec, PriorSpec::isotropic(1.0), lik, d);
    CHECK(model.log_likelihood(w) ==
          doctest::Approx(-2.5 * (kLog2Pi + std::log(0.25))).epsilon(1e-14));
}

TEST_CASE("grad_log_posterior matches central differences across families") {
    Rng rng(25, "model");
    for (int t = 0; t < 20; ++t) {
        NetworkSpec spec;
        spec.input_dim = 1 + static_cast<int>(rng.below(2));
        spec.widths = {1 + static_cast<int>(rng.below(3))};
        const int family_pick = static_cast<int>(rng.below(3));
        LikelihoodSpec lik;
        lik.sigma2 = 0.5;
        lik.family = family_pick == 0   ? Family::kGaussian
                     : family_pick == 1 ? Family::kBernoulliLogit
                                        : Family::kCategoricalLogit;
        spec.output_dim = lik.family == Family::kCategoricalLogit ? 3 : 1;
        spec.activation = rng.below(2) == 0 ? Activation::kRelu : Activation::kIdentity;
        spec.layer_bias.assign(2, rng.below(2) == 1);

        Dataset d;
        const int n = 6;
        d.X.resize(n, spec.input_dim);
        for (int i = 0; i < d.X.size(); ++i) d.X.data()[i] = rng.normal();
        if (lik.family == Family::kGaussian) {
            d.y.resize(n, 1);
            for (int i = 0; i < n; ++i) d.y(i, 0) = rng.normal();
        } else {
            d.y.resize(n, 1);
            const int classes = lik.family == Family::kBernoulliLogit ? 2 : 3;
            for (int i = 0; i < n; ++i)
                d.y(i, 0) = static_cast<double>(rng.below(static_cast<std::uint64_t>(classes)));
        }

        const PosteriorModel model(spec, PriorSpec::isotropic(1.0), lik, d);
        Eigen::VectorXd flat(spec.dim());
        for (int i = 0; i < flat.size(); ++i) flat[i] = 0.5 * rng.normal();
        const Eigen::VectorXd g =
            model.grad_log_posterior(WeightVector::from_flat(spec, flat)).flatten();
        for (int j = 0; j < flat.size(); ++j) {
            Eigen::VectorXd lo = flat, hi = flat;
            const double h = 1e-5;
            lo[j] -= h;
            hi[j] += h;
            const double fd = (model.log_posterior(WeightVector::from_flat(spec, hi)) -
                               model.log_posterior(WeightVector::from_flat(spec, lo))) /
                              (2.0 * h);
            CHECK(std::fabs(g[j] - fd) <= 1e-5 * std::max(1.0, g.cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("log_posterior flags the offending non-finite term") {
    const NetworkSpec spec = NetworkSpec::shallow(1, 1, 1, Activation::kIdentity);
    Dataset d;
    d.X.resize(1, 1);
    d.X << 1.0;
    d.y.resize(1, 1);
    d.y << 0.0;
    LikelihoodSpec lik;
    lik.sigma2 = 1.0;
    const PosteriorModel model(spec, PriorSpec::isotropic(1.0), lik, d);

    WeightVector w = WeightVector::zeros(spec);
    w.layers[0].W(0, 0) = 1e200;
    w.layers[1].W(0, 0) = 1e200;
    try {
        model.log_posterior(w);
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(e.term == "prior");
    }
}

TEST_CASE("posterior kernel is invariant under product-network symmetries") {
    const int m = 4;
    const NetworkSpec spec = NetworkSpec::shallow(1, m, 1, Activation::kIdentity);
    Rng rng(26, "model");
    const PriorSpec prior = PriorSpec::isotropic(1.0);
    LikelihoodSpec lik;
    lik.sigma2 = 0.01;
    WeightVector truth = WeightVector::zeros(spec);
    truth.layers[0].W.setOnes();
    truth.layers[1].W.setConstant(1.0 / m);
    const Dataset d = gaussian_data(spec, truth, 16, 0.05, rng);
    const PosteriorModel model(spec, prior, lik, d);

    Eigen::VectorXd v(spec.dim());
    for (int i = 0; i < v.size(); ++i) v[i] = rng.normal();
    const WeightVector w = WeightVector::from_flat(spec, v);
    const double base = model.log_posterior(w);

    const WeightVector flipped = sign_flip_pair(spec, w, 2);
    CHECK(std::fabs(model.log_posterior(flipped) - base) <= 1e-10);

    const WeightVector swapped = permute_neurons(spec, w, 0, {3, 1, 2, 0});
    CHECK(std::fabs(model.log_posterior(swapped) - base) <= 1e-10);
}

TEST_CASE("rescaling shifts the prior but not the likelihood") {
    const NetworkSpec spec = NetworkSpec::shallow(1, 3, 1, Activation::kRelu);
    Rng rng(27, "model");
    const double tau = 0.9;
    const PriorSpec prior = PriorSpec::isotropic(tau);
    LikelihoodSpec lik;
    lik.sigma2 = 0.1;
    WeightVector truth = WeightVector::zeros(spec);
    truth.layers[0].W << 1.0, -0.5, 0.3;
    truth.layers[1].W << 0.5, 0.5, 0.5;
    const Dataset d = gaussian_data(spec, truth, 12, 0.1, rng);
    const PosteriorModel model(spec, prior, lik, d);

    Eigen::VectorXd v(spec.dim());
    for (int i = 0; i < v.size(); ++i) v[i] = rng.normal();
    const WeightVector w = WeightVector::from_flat(spec, v);
    const double c = 1.7;
    const WeightVector scaled = rescale_unit(spec, w, 0, 1, c);

    CHECK(std::fabs(model.log_likelihood(scaled) - model.log_likelihood(w)) <= 1e-10);

    const double in2 = w.layers[0].W.row(1).squaredNorm();
    const double out2 = w.layers[1].W.col(1).squaredNorm();
    const double expected =
        -((c * c - 1.0) * in2 + (1.0 / (c * c) - 1.0) * out2) / (2.0 * tau * tau);
    CHECK(model.log_prior(scaled) - model.log_prior(w) ==
          doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("conjugate conditional: empty data returns the prior") {
    Eigen::VectorXd x(0), y(0);
    const Conjugate121 c = conjugate_121_conditional(0.5, -0.3, x, y, 0.1);
    CHECK(c.mean.cwiseAbs().maxCoeff() == 0.0);
    CHECK((c.cov - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("conjugate conditional: dead units reduce to the prior") {
    Eigen::VectorXd x(3), y(3);
    x << -1.0, -0.5, -2.0;
    y << 0.3, -0.2, 0.8;
    const Conjugate121 c = conjugate_121_conditional(1.0, 2.0, x, y, 0.5);
    CHECK(c.mean.cwiseAbs().maxCoeff() == 0.0);
    CHECK((c.cov - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("conjugate conditional matches a grid oracle") {
    Rng rng(28, "model");
    Eigen::VectorXd x(6), y(6);
    for (int i = 0; i < 6; ++i) {
        x[i] = rng.normal();
        y[i] = 0.8 * std::max(x[i], 0.0) - 0.4 * std::max(-x[i], 0.0) + 0.3 * rng.normal();
    }
    const double b = 0.9, dd = -0.7, s2 = 0.09;
    const Conjugate121 c = conjugate_121_conditional(b, dd, x, y, s2);

    // brute-force quadrature over (a, c) of prior x likelihood
    const int grid = 201;
    const double lo = -4.0, hi = 4.0, h = (hi - lo) / grid;
    Eigen::VectorXd phi1 = (b * x.array()).max(0.0);
    Eigen::VectorXd phi2 = (dd * x.array()).max(0.0);
    double norm = 0.0, ma = 0.0, mc = 0.0;
    for (int i = 0; i < grid; ++i) {
        const double a = lo + (i + 0.5) * h;
        for (int j = 0; j < grid; ++j) {
            const double cc = lo + (j + 0.5) * h;
            const double r2 = (y - a * phi1 - cc * phi2).squaredNorm();
            const double w = std::exp(-0.5 * (a * a + cc * cc) - r2 / (2.0 * s2));
            norm += w;
            ma += w * a;
            mc += w * cc;
        }
    }
    CHECK(ma / norm == doctest::Approx(c.mean[0]).epsilon(5e-4));
    CHECK(mc / norm == doctest::Approx(c.mean[1]).epsilon(5e-4));
}

TEST_CASE("conjugate marginal: empty data and dead units") {
    Eigen::VectorXd x0(0), y0(0);
    CHECK(conjugate_121_marginal(0.3, 0.4, x0, y0, 0.2) == 0.0);

    Eigen::VectorXd x(2), y(2);
    x << -1.0, -2.0;
    y << 0.5, -0.3;
    const double s2 = 0.3;
    double expected = 0.0;
    for (int i = 0; i < 2; ++i)
        expected += -0.5 * (kLog2Pi + std::log(s2)) - y[i] * y[i] / (2.0 * s2);
    CHECK(conjugate_121_marginal(1.0, 0.5, x, y, s2) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("conjugate marginal x conditional equals the joint") {
    Rng rng(29, "model");
    Eigen::VectorXd x(5), y(5);
    for (int i = 0; i < 5; ++i) {
        x[i] = rng.normal();
        y[i] = rng.normal();
    }
    const double b = 0.6, dd = 1.1, s2 = 0.2;
    const Conjugate121 cond = conjugate_121_conditional(b, dd, x, y, s2);
    const double marg = conjugate_121_marginal(b, dd, x, y, s2);
    const Eigen::VectorXd phi1 = (b * x.array()).max(0.0);
    const Eigen::VectorXd phi2 = (dd * x.array()).max(0.0);

    const Eigen::Matrix2d prec = cond.cov.inverse();
    for (int t = 0; t < 5; ++t) {
        const double a = rng.normal(), cc = rng.normal();
        Eigen::Vector2d theta(a, cc);
        const Eigen::Vector2d delta = theta - cond.mean;
        const double log_cond = -0.5 * (2.0 * kLog2Pi + std::log(cond.cov.determinant())) -
                                0.5 * delta.dot(prec * delta);
        const double log_prior = -0.5 * (2.0 * kLog2Pi) - 0.5 * theta.squaredNorm();
        const double r2 = (y - a * phi1 - cc * phi2).squaredNorm();
        const double log_lik = -2.5 * (kLog2Pi + std::log(s2)) - r2 / (2.0 * s2);
        CHECK(marg + log_cond == doctest::Approx(log_prior + log_lik).epsilon(1e-8));
    }
}

TEST_CASE("conjugate marginal gradient matches finite differences") {
    Rng rng(30, "model");
    Eigen::VectorXd x(6), y(6);
    for (int i = 0; i < 6; ++i) {
        x[i] = rng.normal();
        y[i] = rng.normal();
    }
    const double s2 = 0.15;
    for (int t = 0; t < 5; ++t) {
        const double b = rng.normal(), dd = rng.normal();
        if (std::fabs(b) < 0.05 || std::fabs(dd) < 0.05) continue;  // kink in b or d
        const Eigen::Vector2d g = conjugate_121_marginal_grad(b, dd, x, y, s2);
        const double h = 1e-6;
        const double fb = (conjugate_121_marginal(b + h, dd, x, y, s2) -
                           conjugate_121_marginal(b - h, dd, x, y, s2)) /
                          (2.0 * h);
        const double fd = (conjugate_121_marginal(b, dd + h, x, y, s2) -
                           conjugate_121_marginal(b, dd - h, x, y, s2)) /
                          (2.0 * h);
        CHECK(g[0] == doctest::Approx(fb).epsilon(1e-5));
        CHECK(g[1] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("synthetic task is deterministic per seed") {
    SyntheticLinearTask task;
    task.beta = 1.4;
    task.noise_sd = 0.2;
    task.n = 32;
    task.seed = 77;
    const Dataset a = task.generate();
    const Dataset b = task.generate();
    CHECK(a.X == b.X);
    CHECK(a.y == b.y);
    CHECK(a.n() == 32);

    task.seed = 78;
    const Dataset c = task.generate();
    CHECK((a.X - c.X).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("predictive log density across families") {
    LikelihoodSpec gauss;
    gauss.sigma2 = 1.0;
    Eigen::VectorXd f1(1), y1(1);
    f1 << 0.0;
    y1 << 0.0;
    CHECK(log_predictive_density(gauss, f1, y1) ==
          doctest::Approx(-0.9189385332046727).epsilon(1e-14));

    LikelihoodSpec bern;
    bern.family = Family::kBernoulliLogit;
    Eigen::VectorXd f2(1), y2(1);
    f2 << 0.3;
    y2 << 1.0;
    CHECK(log_predictive_density(bern, f2, y2) ==
          doctest::Approx(0.3 - std::log1p(std::exp(0.3))).epsilon(1e-12));

    LikelihoodSpec cat;
    cat.family = Family::kCategoricalLogit;
    Eigen::VectorXd f3(3), y3(1);
    f3 << 0.2, -0.1, 0.5;
    y3 << 2.0;
    const double lse = std::log(std::exp(0.2) + std::exp(-0.1) + std::exp(0.5));
    CHECK(log_predictive_density(cat, f3, y3) == doctest::Approx(0.5 - lse).epsilon(1e-12));
}
