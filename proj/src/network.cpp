#include "pglab/network.hpp"

#include <string>

namespace pglab {

namespace {

Eigen::MatrixXd apply_act(const NetworkSpec& spec, const Eigen::MatrixXd& z) {
    if (spec.activation == Activation::kIdentity) return z;
    return z.cwiseMax(0.0);
}

// ReLU'(0) = 0 by convention; strict inequality encodes exactly that.
Eigen::MatrixXd act_deriv(const NetworkSpec& spec, const Eigen::MatrixXd& z) {
    if (spec.activation == Activation::kIdentity)
        return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    return (z.array() > 0.0).cast<double>().matrix();
}

struct ForwardCache {
    std::vector<Eigen::MatrixXd> a;  // a[0] = X, a[l+1] = post-activation of layer l
    std::vector<Eigen::MatrixXd> z;  // z[l] = pre-activation of affine layer l
};

ForwardCache run_forward(const NetworkSpec& spec, const WeightVector& w,
                         const Eigen::MatrixXd& X) {
    ForwardCache c;
    const int L = spec.n_affine();
    c.a.resize(L + 1);
    c.z.resize(L);
    c.a[0] = X;
    for (int l = 0; l < L; ++l) {
        c.z[l] = c.a[l] * w.layers[l].W.transpose();
        if (w.layers[l].b)
            c.z[l].rowwise() += w.layers[l].b->transpose();
        c.a[l + 1] = (l == L - 1) ? c.z[l] : apply_act(spec, c.z[l]);
    }
    return c;
}

void check_weights(const NetworkSpec& spec, const WeightVector& w) {
    if (static_cast<int>(w.layers.size()) != spec.n_affine())
        throw ShapeError("weight vector has " + std::to_string(w.layers.size()) +
                         " layers, network has " + std::to_string(spec.n_affine()));
    for (int l = 0; l < spec.n_affine(); ++l) {
        const auto& lw = w.layers[l];
        if (lw.W.rows() != spec.layer_out(l) || lw.W.cols() != spec.layer_in(l))
            throw ShapeError("layer " + std::to_string(l) + " weight is " +
                             std::to_string(lw.W.rows()) + "x" + std::to_string(lw.W.cols()) +
                             ", expected " + std::to_string(spec.layer_out(l)) + "x" +
                             std::to_string(spec.layer_in(l)));
        if (lw.b.has_value() != spec.has_bias(l))
            throw ShapeError("layer " + std::to_string(l) + " bias presence mismatch");
        if (lw.b && lw.b->size() != spec.layer_out(l))
            throw ShapeError("layer " + std::to_string(l) + " bias has size " +
                             std::to_string(lw.b->size()));
    }
}

void check_input(const NetworkSpec& spec, const Eigen::MatrixXd& X) {
    if (X.cols() != spec.input_dim)
        throw ShapeError("input has " + std::to_string(X.cols()) + " columns, network takes " +
                         std::to_string(spec.input_dim));
}

}  // namespace

void NetworkSpec::validate() const {
    if (input_dim < 1) throw ShapeError("input_dim must be positive");
    if (output_dim < 1) throw ShapeError("output_dim must be positive");
    for (std::size_t i = 0; i < widths.size(); ++i)
        if (widths[i] < 1)
            throw ShapeError("hidden width " + std::to_string(i) + " must be positive");
    if (!layer_bias.empty() && static_cast<int>(layer_bias.size()) != n_affine())
        throw ShapeError("layer_bias has " + std::to_string(layer_bias.size()) +
                         " entries, network has " + std::to_string(n_affine()) +
                         " affine layers");
}

NetworkSpec NetworkSpec::shallow(int input_dim, int m, int output_dim, Activation act) {
    NetworkSpec spec;
    spec.input_dim = input_dim;
    spec.widths = {m};
    spec.output_dim = output_dim;
    spec.activation = act;
    spec.validate();
    return spec;
}

int WeightVector::dim() const {
    int d = 0;
    for (const auto& lw : layers) {
        d += static_cast<int>(lw.W.size());
        if (lw.b) d += static_cast<int>(lw.b->size());
    }
    return d;
}

Eigen::VectorXd WeightVector::flatten() const {
    Eigen::VectorXd out(dim());
    int k = 0;
    for (const auto& lw : layers) {
        for (int r = 0; r < lw.W.rows(); ++r)
            for (int c = 0; c < lw.W.cols(); ++c) out[k++] = lw.W(r, c);
        if (lw.b)
            for (int r = 0; r < lw.b->size(); ++r) out[k++] = (*lw.b)[r];
    }
    return out;
}

void WeightVector::add_scaled(const WeightVector& other, double scale) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].W += scale * other.layers[l].W;
        if (layers[l].b) *layers[l].b += scale * *other.layers[l].b;
    }
}

double WeightVector::squared_norm() const {
    double s = 0.0;
    for (const auto& lw : layers) {
        s += lw.W.squaredNorm();
        if (lw.b) s += lw.b->squaredNorm();
    }
    return s;
}

WeightVector WeightVector::zeros(const NetworkSpec& spec) {
    WeightVector w;
    w.layers.resize(spec.n_affine());
    for (int l = 0; l < spec.n_affine(); ++l) {
        w.layers[l].W = Eigen::MatrixXd::Zero(spec.layer_out(l), spec.layer_in(l));
        if (spec.has_bias(l))
            w.layers[l].b = Eigen::VectorXd::Zero(spec.layer_out(l));
    }
    return w;
}

WeightVector WeightVector::from_flat(const NetworkSpec& spec, const Eigen::VectorXd& flat) {
    if (flat.size() != spec.dim())
        throw ShapeError("flat vector has " + std::to_string(flat.size()) +
                         " entries, network has " + std::to_string(spec.dim()));
    WeightVector w = zeros(spec);
    int k = 0;
    for (auto& lw : w.layers) {
        for (int r = 0; r < lw.W.rows(); ++r)
            for (int c = 0; c < lw.W.cols(); ++c) lw.W(r, c) = flat[k++];
        if (lw.b)
            for (int r = 0; r < lw.b->size(); ++r) (*lw.b)[r] = flat[k++];
    }
    return w;
}

Eigen::VectorXd forward(const NetworkSpec& spec, const WeightVector& w,
                        const Eigen::VectorXd& x) {
    return forward_batch(spec, w, x.transpose()).row(0);
}

Eigen::MatrixXd forward_batch(const NetworkSpec& spec, const WeightVector& w,
                              const Eigen::MatrixXd& X) {
    check_weights(spec, w);
    check_input(spec, X);
    return run_forward(spec, w, X).a.back();
}

std::vector<Eigen::VectorXd> preactivations(const NetworkSpec& spec, const WeightVector& w,
                                            const Eigen::VectorXd& x) {
    check_weights(spec, w);
    auto c = run_forward(spec, w, x.transpose());
    std::vector<Eigen::VectorXd> out;
    for (int l = 0; l < spec.n_hidden(); ++l) out.push_back(c.z[l].row(0));
    return out;
}

WeightVector gradient(const NetworkSpec& spec, const WeightVector& w,
                      const Eigen::MatrixXd& X, const Eigen::MatrixXd& residuals) {
    check_weights(spec, w);
    check_input(spec, X);
    if (residuals.rows() != X.rows() || residuals.cols() != spec.output_dim)
        throw ShapeError("residuals must be n x output_dim");
    auto c = run_forward(spec, w, X);
    WeightVector g = WeightVector::zeros(spec);
    Eigen::MatrixXd delta = residuals;  // n x out_l, gradient wrt z[l]
    for (int l = spec.n_affine() - 1; l >= 0; --l) {
        g.layers[l].W = delta.transpose() * c.a[l];
        if (g.layers[l].b) *g.layers[l].b = delta.colwise().sum();
        if (l > 0)
            delta = (delta * w.layers[l].W).cwiseProduct(act_deriv(spec, c.z[l - 1]));
    }
    return g;
}

Eigen::MatrixXd batch_jacobian(const NetworkSpec& spec, const WeightVector& w,
                               const Eigen::MatrixXd& X) {
    check_weights(spec, w);
    check_input(spec, X);
    const int n = static_cast<int>(X.rows());
    const int o = spec.output_dim;
    Eigen::MatrixXd J(n * o, spec.dim());
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < o; ++k) {
            Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(1, o);
            seed(0, k) = 1.0;
            WeightVector g = gradient(spec, w, X.row(i), seed);
            J.row(i * o + k) = g.flatten();
        }
    }
    return J;
}

ActivationMatrix activation_matrix(const NetworkSpec& spec, const WeightVector& w,
                                   const Eigen::MatrixXd& X, int layer) {
    check_weights(spec, w);
    check_input(spec, X);
    if (layer < 0 || layer >= spec.n_hidden())
        throw ShapeError("hidden layer index " + std::to_string(layer) + " out of range");
    auto c = run_forward(spec, w, X);
    return ActivationMatrix{c.a[layer + 1], layer};
}

}  // namespace pglab
