#include "pglab/model.hpp"

#include <cmath>
#include <string>

namespace pglab {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

double softplus(double t) {
    // log(1 + exp(t)) without overflow
    if (t > 0.0) return t + std::log1p(std::exp(-t));
    return std::log1p(std::exp(t));
}

double logsumexp_row(const Eigen::RowVectorXd& v) {
    const double m = v.maxCoeff();
    double s = 0.0;
    for (int j = 0; j < v.size(); ++j) s += std::exp(v[j] - m);
    return m + std::log(s);
}

}  // namespace

double PriorSpec::tau(int layer) const {
    if (layer_tau.size() == 1) return layer_tau[0];
    return layer_tau.at(static_cast<std::size_t>(layer));
}

void PriorSpec::validate(const NetworkSpec& spec) const {
    if (layer_tau.empty())
        throw ShapeError("prior needs at least one tau");
    if (layer_tau.size() != 1 && static_cast<int>(layer_tau.size()) != spec.n_affine())
        throw ShapeError("prior has " + std::to_string(layer_tau.size()) +
                         " tau entries, network has " + std::to_string(spec.n_affine()) +
                         " affine layers");
    for (double t : layer_tau)
        if (!(t > 0.0)) throw ShapeError("tau must be positive");
    if (bias_prior == BiasPrior::kGaussian && !(bias_tau > 0.0))
        throw ShapeError("bias_tau must be positive");
}

PriorSpec PriorSpec::isotropic(double tau_all) {
    PriorSpec p;
    p.layer_tau = {tau_all};
    p.bias_tau = tau_all;
    return p;
}

void LikelihoodSpec::validate() const {
    if (family == Family::kGaussian && !(sigma2 > 0.0))
        throw ShapeError("sigma2 must be positive");
}

Dataset SyntheticLinearTask::generate() const {
    Rng rng(seed, "data/synthetic-linear");
    Dataset d;
    d.X.resize(n, 1);
    d.y.resize(n, 1);
    for (int i = 0; i < n; ++i) {
        d.X(i, 0) = rng.normal();
        d.y(i, 0) = beta * d.X(i, 0) + noise_sd * rng.normal();
    }
    return d;
}

PosteriorModel::PosteriorModel(NetworkSpec spec, PriorSpec prior, LikelihoodSpec lik,
                               Dataset data)
    : spec_(std::move(spec)), prior_(std::move(prior)), lik_(lik), data_(std::move(data)) {
    spec_.validate();
    prior_.validate(spec_);
    lik_.validate();
    if (data_.n() > 0) {
        if (data_.p() != spec_.input_dim)
            throw ShapeError("data has " + std::to_string(data_.p()) +
                             " features, network takes " + std::to_string(spec_.input_dim));
        const bool class_labels = lik_.family != Family::kGaussian;
        const int want = class_labels ? 1 : spec_.output_dim;
        if (static_cast<int>(data_.y.cols()) != want)
            throw ShapeError("targets have " + std::to_string(data_.y.cols()) +
                             " columns, expected " + std::to_string(want));
    }
}

double PosteriorModel::log_prior(const WeightVector& w) const {
    double lp = 0.0;
    for (int l = 0; l < spec_.n_affine(); ++l) {
        const double t = prior_.tau(l);
        lp -= w.layers[l].W.squaredNorm() / (2.0 * t * t);
        if (w.layers[l].b && prior_.bias_prior == BiasPrior::kGaussian)
            lp -= w.layers[l].b->squaredNorm() / (2.0 * prior_.bias_tau * prior_.bias_tau);
    }
    return lp;
}

WeightVector PosteriorModel::grad_log_prior(const WeightVector& w) const {
    WeightVector g = WeightVector::zeros(spec_);
    for (int l = 0; l < spec_.n_affine(); ++l) {
        const double t = prior_.tau(l);
        g.layers[l].W = -w.layers[l].W / (t * t);
        if (g.layers[l].b) {
            if (prior_.bias_prior == BiasPrior::kGaussian)
                *g.layers[l].b = -*w.layers[l].b / (prior_.bias_tau * prior_.bias_tau);
            else
                g.layers[l].b->setZero();
        }
    }
    return g;
}

double PosteriorModel::log_likelihood(const WeightVector& w) const {
    if (data_.n() == 0) return 0.0;
    const Eigen::MatrixXd F = forward_batch(spec_, w, data_.X);
    double ll = 0.0;
    switch (lik_.family) {
        case Family::kGaussian: {
            const double s2 = lik_.sigma2;
            ll = -0.5 * static_cast<double>(F.size()) * (kLog2Pi + std::log(s2)) -
                 (data_.y - F).squaredNorm() / (2.0 * s2);
            break;
        }
        case Family::kBernoulliLogit: {
            for (int i = 0; i < F.rows(); ++i)
                ll += data_.y(i, 0) * F(i, 0) - softplus(F(i, 0));
            break;
        }
        case Family::kCategoricalLogit: {
            for (int i = 0; i < F.rows(); ++i) {
                const int label = static_cast<int>(data_.y(i, 0));
                if (label < 0 || label >= F.cols())
                    throw ShapeError("label " + std::to_string(label) + " out of range at row " +
                                     std::to_string(i));
                ll += F(i, label) - logsumexp_row(F.row(i));
            }
            break;
        }
    }
    return ll;
}

WeightVector PosteriorModel::grad_log_likelihood(const WeightVector& w) const {
    if (data_.n() == 0) return WeightVector::zeros(spec_);
    const Eigen::MatrixXd F = forward_batch(spec_, w, data_.X);
    Eigen::MatrixXd seed(F.rows(), F.cols());
    switch (lik_.family) {
        case Family::kGaussian:
            seed = (data_.y - F) / lik_.sigma2;
            break;
        case Family::kBernoulliLogit:
            for (int i = 0; i < F.rows(); ++i)
                seed(i, 0) = data_.y(i, 0) - 1.0 / (1.0 + std::exp(-F(i, 0)));
            break;
        case Family::kCategoricalLogit:
            for (int i = 0; i < F.rows(); ++i) {
                const double lse = logsumexp_row(F.row(i));
                for (int c = 0; c < F.cols(); ++c) seed(i, c) = -std::exp(F(i, c) - lse);
                seed(i, static_cast<int>(data_.y(i, 0))) += 1.0;
            }
            break;
    }
    return gradient(spec_, w, data_.X, seed);
}

double PosteriorModel::log_posterior(const WeightVector& w) const {
    const double lp = log_prior(w);
    if (!std::isfinite(lp)) throw NumericError("prior", "non-finite log-density");
    const double ll = log_likelihood(w);
    if (!std::isfinite(ll)) throw NumericError("likelihood", "non-finite log-density");
    return lp + ll;
}

WeightVector PosteriorModel::grad_log_posterior(const WeightVector& w) const {
    WeightVector g = grad_log_prior(w);
    if (data_.n() > 0) g.add_scaled(grad_log_likelihood(w), 1.0);
    return g;
}

WeightVector PosteriorModel::sample_prior(Rng& rng) const {
    WeightVector w = WeightVector::zeros(spec_);
    for (int l = 0; l < spec_.n_affine(); ++l) {
        const double t = prior_.tau(l);
        for (int r = 0; r < w.layers[l].W.rows(); ++r)
            for (int c = 0; c < w.layers[l].W.cols(); ++c)
                w.layers[l].W(r, c) = t * rng.normal();
        if (w.layers[l].b) {
            const double tb = prior_.bias_prior == BiasPrior::kGaussian ? prior_.bias_tau : 1.0;
            for (int r = 0; r < w.layers[l].b->size(); ++r) (*w.layers[l].b)[r] = tb * rng.normal();
        }
    }
    return w;
}

double log_predictive_density(const LikelihoodSpec& lik, const Eigen::VectorXd& f,
                              const Eigen::VectorXd& y) {
    switch (lik.family) {
        case Family::kGaussian: {
            const double s2 = lik.sigma2;
            double ld = 0.0;
            for (int j = 0; j < f.size(); ++j)
                ld += -0.5 * (kLog2Pi + std::log(s2)) - (y[j] - f[j]) * (y[j] - f[j]) / (2.0 * s2);
            return ld;
        }
        case Family::kBernoulliLogit:
            return y[0] * f[0] - softplus(f[0]);
        case Family::kCategoricalLogit: {
            Eigen::RowVectorXd row = f.transpose();
            return f[static_cast<int>(y[0])] - logsumexp_row(row);
        }
    }
    return 0.0;
}

double PosteriorModel::predictive_logdens(const Eigen::VectorXd& f,
                                          const Eigen::VectorXd& y) const {
    return log_predictive_density(lik_, f, y);
}

Conjugate121 conjugate_121_conditional(double b, double d, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& y, double sigma2) {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd phi(n, 2);
    for (int i = 0; i < n; ++i) {
        phi(i, 0) = std::max(b * x[i], 0.0);
        phi(i, 1) = std::max(d * x[i], 0.0);
    }
    const Eigen::Matrix2d precision =
        Eigen::Matrix2d::Identity() + phi.transpose() * phi / sigma2;
    Conjugate121 out;
    out.cov = precision.inverse();
    out.mean = out.cov * (phi.transpose() * y) / sigma2;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(precision);
    out.condition_number = es.eigenvalues()[1] / es.eigenvalues()[0];
    return out;
}

namespace {

struct MarginalParts {
    Eigen::MatrixXd phi;    // n x 2 ReLU design
    Eigen::Matrix2d B;      // sigma2 I + Phi^T Phi
    Eigen::Vector2d u;      // Phi^T y
    Eigen::Matrix2d B_inv;
};

MarginalParts marginal_parts(double b, double d, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& y, double sigma2) {
    const int n = static_cast<int>(x.size());
    MarginalParts p;
    p.phi.resize(n, 2);
    for (int i = 0; i < n; ++i) {
        p.phi(i, 0) = std::max(b * x[i], 0.0);
        p.phi(i, 1) = std::max(d * x[i], 0.0);
    }
    p.B = sigma2 * Eigen::Matrix2d::Identity() + p.phi.transpose() * p.phi;
    p.u = p.phi.transpose() * y;
    p.B_inv = p.B.inverse();
    return p;
}

}  // namespace

double conjugate_121_marginal(double b, double d, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& y, double sigma2) {
    const int n = static_cast<int>(x.size());
    if (n == 0) return 0.0;
    const MarginalParts p = marginal_parts(b, d, x, y, sigma2);
    // det(sigma2 I_n + Phi Phi^T) = sigma2^{n-2} det(B) by the determinant lemma
    const double logdet = (n - 2) * std::log(sigma2) + std::log(p.B.determinant());
    const double quad = (y.squaredNorm() - p.u.dot(p.B_inv * p.u)) / sigma2;
    return -0.5 * n * kLog2Pi - 0.5 * logdet - 0.5 * quad;
}

Eigen::Vector2d conjugate_121_marginal_grad(double b, double d, const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& y, double sigma2) {
    const int n = static_cast<int>(x.size());
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
    if (n == 0) return grad;
    const MarginalParts p = marginal_parts(b, d, x, y, sigma2);
    const Eigen::Vector2d Bu = p.B_inv * p.u;
    const double slopes[2] = {b, d};
    for (int j = 0; j < 2; ++j) {
        Eigen::MatrixXd dphi = Eigen::MatrixXd::Zero(n, 2);
        for (int i = 0; i < n; ++i)
            if (slopes[j] * x[i] > 0.0) dphi(i, j) = x[i];
        const Eigen::Matrix2d dB = dphi.transpose() * p.phi + p.phi.transpose() * dphi;
        const Eigen::Vector2d du = dphi.transpose() * y;
        grad[j] = -0.5 * (p.B_inv * dB).trace() + du.dot(Bu) / sigma2 -
                  0.5 * Bu.dot(dB * Bu) / sigma2;
    }
    return grad;
}

}  // namespace pglab
