#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "pglab/network.hpp"
#include "pglab/rng.hpp"
#include "pglab/symmetry.hpp"

using namespace pglab;

namespace {

WeightVector random_weights(const NetworkSpec& spec, Rng& rng) {
    Eigen::VectorXd flat(spec.dim());
    for (int i = 0; i < flat.size(); ++i) flat[i] = rng.normal();
    return WeightVector::from_flat(spec, flat);
}

double max_forward_gap(const NetworkSpec& sa, const WeightVector& wa, const NetworkSpec& sb,
                       const WeightVector& wb, Rng& rng, int n_points = 16) {
    Eigen::MatrixXd X(n_points, sa.input_dim);
    for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    return (forward_batch(sa, wa, X) - forward_batch(sb, wb, X)).cwiseAbs().maxCoeff();
}

NetworkSpec one_one_one() { return NetworkSpec::shallow(1, 1, 1, Activation::kIdentity); }

WeightVector pair_weights(const NetworkSpec& spec, double in, double out) {
    WeightVector w = WeightVector::zeros(spec);
    w.layers[0].W(0, 0) = in;
    w.layers[1].W(0, 0) = out;
    return w;
}

}  // namespace

TEST_CASE("permute_neurons: identity, function preservation, inverse") {
    const NetworkSpec spec = NetworkSpec::shallow(2, 4, 1, Activation::kRelu);
    Rng rng(61, "symmetry");
    const WeightVector w = random_weights(spec, rng);

    const WeightVector same = permute_neurons(spec, w, 0, {0, 1, 2, 3});
    CHECK(same.flatten() == w.flatten());

    const std::vector<int> perm = {2, 0, 3, 1};
    const WeightVector p = permute_neurons(spec, w, 0, perm);
    CHECK(max_forward_gap(spec, w, spec, p, rng) <= 1e-12);

    std::vector<int> inv(4);
    for (int i = 0; i < 4; ++i) inv[perm[i]] = i;
    const WeightVector back = permute_neurons(spec, p, 0, inv);
    CHECK(back.flatten() == w.flatten());

    CHECK_THROWS_AS(permute_neurons(spec, w, 0, {0, 1, 2}), ShapeError);
    CHECK_THROWS_AS(permute_neurons(spec, w, 0, {0, 1, 2, 2}), ShapeError);
}

TEST_CASE("permute_neurons moves bias entries with their unit") {
    NetworkSpec spec = NetworkSpec::shallow(1, 3, 1, Activation::kRelu);
    spec.layer_bias = {true, false};
    Rng rng(62, "symmetry");
    WeightVector w = random_weights(spec, rng);
    const WeightVector p = permute_neurons(spec, w, 0, {1, 2, 0});
    CHECK(max_forward_gap(spec, w, spec, p, rng) <= 1e-12);
    CHECK((*p.layers[0].b)[0] != (*w.layers[0].b)[0]);
}

TEST_CASE("rescale_unit hand values and function preservation") {
    const NetworkSpec spec = one_one_one();
    const WeightVector w = pair_weights(spec, 2.0, 3.0);

    CHECK(rescale_unit(spec, w, 0, 0, 1.0).flatten() == w.flatten());

    const WeightVector r = rescale_unit(spec, w, 0, 0, 3.0);
    CHECK(r.layers[0].W(0, 0) == doctest::Approx(6.0).epsilon(1e-15));
    CHECK(r.layers[1].W(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

    const NetworkSpec relu = NetworkSpec::shallow(2, 3, 1, Activation::kRelu);
    Rng rng(63, "symmetry");
    const WeightVector v = random_weights(relu, rng);
    const WeightVector rv = rescale_unit(relu, v, 0, 1, 2.0);
    CHECK(max_forward_gap(relu, v, relu, rv, rng) <= 1e-12);

    CHECK_THROWS_AS(rescale_unit(spec, w, 0, 0, 0.0), SymmetryError);
    CHECK_THROWS_AS(rescale_unit(spec, w, 0, 0, -1.0), SymmetryError);
}

TEST_CASE("sign_flip_pair flips a product pair and is an involution") {
    const NetworkSpec spec = one_one_one();
    const WeightVector w = pair_weights(spec, 2.0, 3.0);
    const WeightVector f = sign_flip_pair(spec, w, 0);
    CHECK(f.layers[0].W(0, 0) == -2.0);
    CHECK(f.layers[1].W(0, 0) == -3.0);
    CHECK(sign_flip_pair(spec, f, 0).flatten() == w.flatten());

    Rng rng(64, "symmetry");
    CHECK(max_forward_gap(spec, w, spec, f, rng) <= 1e-12);

    const NetworkSpec relu = NetworkSpec::shallow(1, 2, 1, Activation::kRelu);
    const WeightVector v = random_weights(relu, rng);
    CHECK_THROWS_AS(sign_flip_pair(relu, v, 0), SymmetryError);
}

TEST_CASE("balance_pair: equal penalties equalize the norms") {
    const NetworkSpec spec = one_one_one();
    const WeightVector w = pair_weights(spec, 2.0, 8.0);
    const BalanceResult r = balance_pair(spec, w, 0, 0.5, 0.5);
    CHECK(!r.degenerate);
    CHECK(r.scale == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.w.layers[0].W.norm() == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(r.w.layers[1].W.norm() == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("balance_pair: unequal penalties against a grid oracle") {
    const NetworkSpec spec = one_one_one();
    const WeightVector w = pair_weights(spec, 2.0, 2.0);
    const double lam_l = 1.0, lam_next = 4.0;
    const BalanceResult r = balance_pair(spec, w, 0, lam_l, lam_next);
    CHECK(r.w.layers[0].W.norm() == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-12));
    CHECK(r.w.layers[1].W.norm() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

    // norm ratio after balancing is sqrt(lam_next / lam_l)
    CHECK(r.w.layers[0].W.norm() / r.w.layers[1].W.norm() ==
          doctest::Approx(std::sqrt(lam_next / lam_l)).epsilon(1e-12));

    // 1-D minimization oracle over the rescale factor
    double best_a = 1.0, best_val = 1e300;
    for (int i = 0; i < 400000; ++i) {
        const double a = 0.05 + i * 1e-5;
        const double val = lam_l * a * a * 4.0 + lam_next * 4.0 / (a * a);
        if (val < best_val) {
            best_val = val;
            best_a = a;
        }
    }
    CHECK(std::fabs(r.scale - best_a) <= 2e-5);
}

TEST_CASE("balance_pair is idempotent and flags zero layers") {
    const NetworkSpec spec = one_one_one();
    const WeightVector w = pair_weights(spec, 3.0, 3.0);
    const BalanceResult once = balance_pair(spec, w, 0, 0.5, 0.5);
    CHECK(once.scale == doctest::Approx(1.0).epsilon(1e-12));
    const BalanceResult twice = balance_pair(spec, once.w, 0, 0.5, 0.5);
    CHECK(twice.scale == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((twice.w.flatten() - once.w.flatten()).cwiseAbs().maxCoeff() <= 1e-12);

    const WeightVector dead = pair_weights(spec, 2.0, 0.0);
    const BalanceResult r = balance_pair(spec, dead, 0, 0.5, 0.5);
    CHECK(r.degenerate);
    CHECK(r.scale == 1.0);
    CHECK(r.w.flatten() == dead.flatten());
}

TEST_CASE("split_neuron halves the in-row norms at rho = (1/2, 1/2)") {
    const NetworkSpec spec = NetworkSpec::shallow(2, 3, 1, Activation::kRelu);
    Rng rng(65, "symmetry");
    const WeightVector w = random_weights(spec, rng);
    Eigen::VectorXd rho(2);
    rho << 0.5, 0.5;
    const SplitResult s = split_neuron(spec, w, 0, 1, rho);
    CHECK(s.spec.widths[0] == 4);

    const double orig = w.layers[0].W.row(1).squaredNorm();
    int copies = 0;
    for (int j = 0; j < 4; ++j) {
        const double nj = s.w.layers[0].W.row(j).squaredNorm();
        if (std::fabs(nj - 0.5 * orig) <= 1e-12) ++copies;
    }
    CHECK(copies == 2);
    CHECK(max_forward_gap(spec, w, s.spec, s.w, rng) <= 1e-10);
}

TEST_CASE("split_neuron with k = 1 is the identity") {
    const NetworkSpec spec = NetworkSpec::shallow(1, 2, 1, Activation::kRelu);
    Rng rng(66, "symmetry");
    const WeightVector w = random_weights(spec, rng);
    Eigen::VectorXd rho(1);
    rho << 1.0;
    const SplitResult s = split_neuron(spec, w, 0, 0, rho);
    CHECK(s.spec.widths[0] == 2);
    CHECK((s.w.flatten() - w.flatten()).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("split_neuron preserves function and penalty for random rho") {
    Rng rng(67, "symmetry");
    const PriorSpec prior = PriorSpec::isotropic(0.9);
    for (int t = 0; t < 50; ++t) {
        NetworkSpec spec = NetworkSpec::shallow(2, 3, 1, Activation::kRelu);
        spec.layer_bias = {rng.below(2) == 1, false};
        const WeightVector w = random_weights(spec, rng);
        const int k = 2 + static_cast<int>(rng.below(3));
        Eigen::VectorXd rho(k);
        double total = 0.0;
        for (int i = 0; i < k; ++i) {
            rho[i] = rng.gamma(0.5);
            total += rho[i];
        }
        rho /= total;
        const int unit = static_cast<int>(rng.below(3));
        const SplitResult s = split_neuron(spec, w, 0, unit, rho);
        CHECK(max_forward_gap(spec, w, s.spec, s.w, rng) <= 1e-10);
        CHECK(std::fabs(penalty(s.w, prior) - penalty(w, prior)) <= 1e-10);
    }
}

TEST_CASE("split_neuron rejects off-simplex coefficients") {
    const NetworkSpec spec = NetworkSpec::shallow(1, 2, 1, Activation::kRelu);
    Rng rng(68, "symmetry");
    const WeightVector w = random_weights(spec, rng);
    Eigen::VectorXd bad(2);
    bad << 0.3, 0.3;
    CHECK_THROWS_AS(split_neuron(spec, w, 0, 0, bad), ShapeError);
    Eigen::VectorXd neg(2);
    neg << 1.5, -0.5;
    CHECK_THROWS_AS(split_neuron(spec, w, 0, 0, neg), ShapeError);
}

TEST_CASE("sample_manifold_coords draws Beta(1/2, 1/2) blocks") {
    const Assignment asg = Assignment::proportional(1, 2);
    Rng rng(69, "symmetry");
    const int n = 100000;
    double mean = 0.0, second = 0.0;
    for (int i = 0; i < n; ++i) {
        const SimplexCoords c = sample_manifold_coords(asg, rng);
        REQUIRE(c.rho.size() == 1);
        REQUIRE(c.rho[0].size() == 2);
        CHECK(std::fabs(c.rho[0].sum() - 1.0) <= 1e-12);
        mean += c.rho[0][0];
        second += c.rho[0][0] * c.rho[0][0];
    }
    mean /= n;
    second /= n;
    CHECK(std::fabs(mean - 0.5) <= 0.004);
    CHECK(std::fabs(second - mean * mean - 0.125) <= 1e-3);
}

TEST_CASE("sample_manifold preserves the reference function") {
    const NetworkSpec ref = NetworkSpec::shallow(1, 2, 1, Activation::kRelu);
    Rng rng(70, "symmetry");
    const WeightVector w = random_weights(ref, rng);
    const Assignment asg = Assignment::proportional(2, 7);
    const PriorSpec prior = PriorSpec::isotropic(1.0);
    for (int t = 0; t < 20; ++t) {
        const ManifoldSample s = sample_manifold(ref, w, asg, rng);
        CHECK(s.spec.widths[0] == 7);
        CHECK(max_forward_gap(ref, w, s.spec, s.w, rng) <= 1e-10);
        CHECK(std::fabs(penalty(s.w, prior) - penalty(w, prior)) <= 1e-10);
    }
}

TEST_CASE("penalty hand values and permutation invariance") {
    const NetworkSpec spec = one_one_one();
    const PriorSpec prior = PriorSpec::isotropic(1.0);
    CHECK(penalty(WeightVector::zeros(spec), prior) == 0.0);
    CHECK(penalty(pair_weights(spec, 2.0, 3.0), prior) == doctest::Approx(6.5).epsilon(1e-15));

    const NetworkSpec wide = NetworkSpec::shallow(2, 4, 1, Activation::kRelu);
    Rng rng(71, "symmetry");
    const WeightVector w = random_weights(wide, rng);
    const WeightVector p = permute_neurons(wide, w, 0, {3, 0, 1, 2});
    CHECK(std::fabs(penalty(w, prior) - penalty(p, prior)) <= 1e-12);
}

TEST_CASE("assignment construction and validation") {
    const Assignment a = Assignment::proportional(2, 8);
    CHECK(a.map == std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1});
    const auto groups = a.groups();
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].size() == 4);
    CHECK(groups[1].size() == 4);

    const Assignment b = Assignment::proportional(3, 8);
    const auto gb = b.groups();
    REQUIRE(gb.size() == 3);
    CHECK(gb[0].size() + gb[1].size() + gb[2].size() == 8);

    Assignment bad;
    bad.m_star = 2;
    bad.map = {0, 0, 0};
    CHECK_THROWS_AS(bad.validate(), ShapeError);
    bad.map = {0, 1, 5};
    CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("extract_rho inverts split_neuron") {
    const NetworkSpec ref = NetworkSpec::shallow(2, 1, 1, Activation::kRelu);
    Rng rng(72, "symmetry");
    const WeightVector w = random_weights(ref, rng);
    Eigen::VectorXd rho(3);
    rho << 0.2, 0.5, 0.3;
    const SplitResult s = split_neuron(ref, w, 0, 0, rho);
    const Assignment asg = Assignment::proportional(1, 3);
    const SimplexCoords coords = extract_rho(s.spec, s.w, asg);
    REQUIRE(coords.rho.size() == 1);
    CHECK((coords.rho[0] - rho).cwiseAbs().maxCoeff() <= 1e-12);
}
