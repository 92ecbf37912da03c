#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "pglab/network.hpp"
#include "pglab/rng.hpp"

using namespace pglab;

namespace {

NetworkSpec product_net() { return NetworkSpec::shallow(1, 1, 1, Activation::kIdentity); }

WeightVector product_weights(double w1, double w2) {
    WeightVector w = WeightVector::zeros(product_net());
    w.layers[0].W(0, 0) = w1;
    w.layers[1].W(0, 0) = w2;
    return w;
}

NetworkSpec random_spec(Rng& rng) {
    NetworkSpec spec;
    spec.input_dim = 1 + static_cast<int>(rng.below(3));
    const int depth = 1 + static_cast<int>(rng.below(2));
    for (int l = 0; l < depth; ++l) spec.widths.push_back(1 + static_cast<int>(rng.below(4)));
    spec.output_dim = 1 + static_cast<int>(rng.below(2));
    spec.activation = rng.below(2) == 0 ? Activation::kRelu : Activation::kIdentity;
    spec.layer_bias.assign(static_cast<std::size_t>(spec.n_affine()), rng.below(2) == 1);
    return spec;
}

WeightVector random_weights(const NetworkSpec& spec, Rng& rng) {
    Eigen::VectorXd flat(spec.dim());
    for (int i = 0; i < flat.size(); ++i) flat[i] = rng.normal();
    return WeightVector::from_flat(spec, flat);
}

}  // namespace

TEST_CASE("forward: product network multiplies through") {
    const auto f = forward(product_net(), product_weights(2.0, 3.0), Eigen::VectorXd::Ones(1));
    CHECK(f.size() == 1);
    CHECK(f[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("forward: relu kills the negative branch") {
    const NetworkSpec spec = NetworkSpec::shallow(1, 2, 1, Activation::kRelu);
    WeightVector w = WeightVector::zeros(spec);
    w.layers[0].W << 1.0, -1.0;
    w.layers[1].W << 1.0, 1.0;
    const auto f = forward(spec, w, Eigen::VectorXd::Ones(1));
    CHECK(f[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("forward: zero input with no biases maps to zero") {
    Rng rng(11, "net");
    for (int t = 0; t < 5; ++t) {
        NetworkSpec spec = random_spec(rng);
        spec.layer_bias.assign(static_cast<std::size_t>(spec.n_affine()), false);
        const WeightVector w = random_weights(spec, rng);
        const auto f = forward(spec, w, Eigen::VectorXd::Zero(spec.input_dim));
        CHECK(f.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("forward: input length mismatch throws") {
    CHECK_THROWS_AS(forward(product_net(), product_weights(1, 1), Eigen::VectorXd::Zero(2)),
                    ShapeError);
}

TEST_CASE("preactivations: relu example and zero input") {
    const NetworkSpec spec = NetworkSpec::shallow(1, 2, 1, Activation::kRelu);
    WeightVector w = WeightVector::zeros(spec);
    w.layers[0].W << 1.0, -1.0;
    w.layers[1].W << 1.0, 1.0;
    const auto pre = preactivations(spec, w, Eigen::VectorXd::Ones(1));
    REQUIRE(pre.size() == 1);
    CHECK(pre[0][0] == doctest::Approx(1.0));
    CHECK(pre[0][1] == doctest::Approx(-1.0));

    const auto zero = preactivations(spec, w, Eigen::VectorXd::Zero(1));
    CHECK(zero[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("preactivations agree with the activation matrix") {
    Rng rng(12, "net");
    const NetworkSpec spec = random_spec(rng);
    const WeightVector w = random_weights(spec, rng);
    Eigen::MatrixXd X(4, spec.input_dim);
    for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();

    for (int l = 0; l < static_cast<int>(spec.widths.size()); ++l) {
        const ActivationMatrix am = activation_matrix(spec, w, X, l);
        for (int i = 0; i < X.rows(); ++i) {
            const auto pre = preactivations(spec, w, X.row(i).transpose());
            for (int j = 0; j < spec.widths[static_cast<std::size_t>(l)]; ++j) {
                const double z = pre[static_cast<std::size_t>(l)][j];
                const double phi = spec.activation == Activation::kRelu ? std::max(z, 0.0) : z;
                CHECK(am.values(i, j) == doctest::Approx(phi).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("gradient: hand chain rule on the product network") {
    Eigen::MatrixXd X(1, 1), residual(1, 1);
    X << 1.0;
    residual << 6.0;  // d/df of (f - y)^2 / 2 at f = 6, y = 0
    const WeightVector g = gradient(product_net(), product_weights(2.0, 3.0), X, residual);
    CHECK(g.layers[0].W(0, 0) == doctest::Approx(18.0));
    CHECK(g.layers[1].W(0, 0) == doctest::Approx(12.0));
}

TEST_CASE("gradient matches central differences") {
    Rng rng(13, "net");
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const NetworkSpec spec = random_spec(rng);
        const WeightVector w = random_weights(spec, rng);
        const int n = 3;
        Eigen::MatrixXd X(n, spec.input_dim), R(n, spec.output_dim);
        for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
        for (int i = 0; i < R.size(); ++i) R.data()[i] = rng.normal();

        const Eigen::VectorXd g = gradient(spec, w, X, R).flatten();
        const Eigen::VectorXd flat = w.flatten();
        const auto loss = [&](const Eigen::VectorXd& v) {
            const Eigen::MatrixXd F = forward_batch(spec, WeightVector::from_flat(spec, v), X);
            return (R.array() * F.array()).sum();
        };
        for (int j = 0; j < flat.size(); ++j) {
            Eigen::VectorXd lo = flat, hi = flat;
            const double h = 1e-6 * (1.0 + std::fabs(flat[j]));
            lo[j] -= h;
            hi[j] += h;
            const double fd = (loss(hi) - loss(lo)) / (2.0 * h);
            worst = std::max(worst, std::fabs(g[j] - fd) /
                                        std::max(1.0, g.cwiseAbs().maxCoeff()));
        }
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("gradient: dead relu units get zero first-layer gradient") {
    const NetworkSpec spec = NetworkSpec::shallow(1, 2, 1, Activation::kRelu);
    WeightVector w = WeightVector::zeros(spec);
    w.layers[0].W << -1.0, -2.0;  // both units dead for x > 0
    w.layers[1].W << 1.5, -0.5;
    Eigen::MatrixXd X(2, 1), R(2, 1);
    X << 1.0, 2.0;
    R << 1.0, 1.0;
    const WeightVector g = gradient(spec, w, X, R);
    CHECK(g.layers[0].W.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("batch_jacobian: product network row") {
    Eigen::MatrixXd X(1, 1);
    X << 1.0;
    const Eigen::MatrixXd J = batch_jacobian(product_net(), product_weights(2.0, 3.0), X);
    REQUIRE(J.rows() == 1);
    REQUIRE(J.cols() == 2);
    CHECK(J(0, 0) == doctest::Approx(3.0));
    CHECK(J(0, 1) == doctest::Approx(2.0));
}

TEST_CASE("batch_jacobian rows equal one-hot gradients") {
    Rng rng(14, "net");
    const NetworkSpec spec = random_spec(rng);
    const WeightVector w = random_weights(spec, rng);
    const int n = 3;
    Eigen::MatrixXd X(n, spec.input_dim);
    for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();

    const Eigen::MatrixXd J = batch_jacobian(spec, w, X);
    REQUIRE(J.rows() == n * spec.output_dim);
    REQUIRE(J.cols() == spec.dim());
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < spec.output_dim; ++o) {
            Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, spec.output_dim);
            R(i, o) = 1.0;
            const Eigen::VectorXd g = gradient(spec, w, X, R).flatten();
            CHECK((J.row(i * spec.output_dim + o).transpose() - g).cwiseAbs().maxCoeff() <=
                  1e-12);
        }
}

TEST_CASE("batch_jacobian: single example has rank at most one per output") {
    Rng rng(15, "net");
    NetworkSpec spec = NetworkSpec::shallow(2, 3, 1, Activation::kIdentity);
    const WeightVector w = random_weights(spec, rng);
    Eigen::MatrixXd X(1, 2);
    X << 0.3, -1.1;
    const Eigen::MatrixXd J = batch_jacobian(spec, w, X);
    CHECK(J.rows() == 1);
}

TEST_CASE("activation_matrix: duplicated unit gives identical columns") {
    const NetworkSpec spec = NetworkSpec::shallow(2, 3, 1, Activation::kRelu);
    Rng rng(16, "net");
    WeightVector w = random_weights(spec, rng);
    w.layers[0].W.row(1) = w.layers[0].W.row(0);
    Eigen::MatrixXd X(6, 2);
    for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    const ActivationMatrix am = activation_matrix(spec, w, X, 0);
    CHECK((am.values.col(0) - am.values.col(1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("activation_matrix: a unit mapping all inputs negative is a zero column") {
    const NetworkSpec spec = NetworkSpec::shallow(1, 2, 1, Activation::kRelu);
    WeightVector w = WeightVector::zeros(spec);
    w.layers[0].W << 1.0, -1.0;
    w.layers[1].W << 1.0, 1.0;
    Eigen::MatrixXd X(3, 1);
    X << 0.5, 1.0, 2.0;
    const ActivationMatrix am = activation_matrix(spec, w, X, 0);
    CHECK(am.values.col(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(am.values.col(0).minCoeff() > 0.0);
}

TEST_CASE("activation_matrix: layer index out of range throws") {
    const NetworkSpec spec = NetworkSpec::shallow(1, 2, 1, Activation::kRelu);
    const WeightVector w = WeightVector::zeros(spec);
    Eigen::MatrixXd X(1, 1);
    X << 1.0;
    CHECK_THROWS_AS(activation_matrix(spec, w, X, 1), ShapeError);
}

TEST_CASE("WeightVector: flat round trip is the identity") {
    Rng rng(17, "net");
    for (int t = 0; t < 10; ++t) {
        const NetworkSpec spec = random_spec(rng);
        Eigen::VectorXd flat(spec.dim());
        for (int i = 0; i < flat.size(); ++i) flat[i] = rng.normal();
        const WeightVector w = WeightVector::from_flat(spec, flat);
        CHECK((w.flatten() - flat).cwiseAbs().maxCoeff() == 0.0);
        CHECK(w.dim() == spec.dim());
    }
}

TEST_CASE("NetworkSpec validation rejects bad dimensions") {
    NetworkSpec spec;
    spec.input_dim = 0;
    spec.widths = {2};
    spec.output_dim = 1;
    CHECK_THROWS_AS(spec.validate(), ShapeError);

    NetworkSpec bad_bias = NetworkSpec::shallow(1, 2, 1, Activation::kRelu);
    bad_bias.layer_bias = {true};
    CHECK_THROWS_AS(bad_bias.validate(), ShapeError);
}
