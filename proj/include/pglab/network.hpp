#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "pglab/errors.hpp"

namespace pglab {

enum class Activation { kRelu, kIdentity };

/// Architecture of a fully-connected network: input_dim -> widths... -> output_dim.
/// `layer_bias` has one entry per affine layer (widths.size() + 1 of them).
struct NetworkSpec {
    int input_dim = 1;
    std::vector<int> widths;
    int output_dim = 1;
    Activation activation = Activation::kRelu;
    std::vector<bool> layer_bias;

    int n_affine() const { return static_cast<int>(widths.size()) + 1; }
    int n_hidden() const { return static_cast<int>(widths.size()); }

    int layer_in(int l) const { return l == 0 ? input_dim : widths[l - 1]; }
    int layer_out(int l) const { return l == n_affine() - 1 ? output_dim : widths[l]; }
    bool has_bias(int l) const { return !layer_bias.empty() && layer_bias[l]; }

    /// Parameter count of affine layer l (weights + bias).
    int layer_params(int l) const {
        return layer_out(l) * layer_in(l) + (has_bias(l) ? layer_out(l) : 0);
    }
    int dim() const {
        int d = 0;
        for (int l = 0; l < n_affine(); ++l) d += layer_params(l);
        return d;
    }

    void validate() const;

    /// No-bias net with one hidden layer of width m; the 1-M-1 identity case
    /// is the product network f(x) = sum_m w1_m w2_m x.
    static NetworkSpec shallow(int input_dim, int m, int output_dim, Activation act);
};

struct LayerWeights {
    Eigen::MatrixXd W;                  // out x in
    std::optional<Eigen::VectorXd> b;   // out, when the layer has a bias
};

/// Layer-structured parameters plus the flat layout contract: layer-major,
/// within a layer the weight matrix row-major, then the bias. This layout is
/// what the sample store persists, so it is part of the file format.
struct WeightVector {
    std::vector<LayerWeights> layers;

    int dim() const;
    Eigen::VectorXd flatten() const;
    void add_scaled(const WeightVector& other, double scale);  // *this += scale * other
    double squared_norm() const;

    static WeightVector zeros(const NetworkSpec& spec);
    static WeightVector from_flat(const NetworkSpec& spec, const Eigen::VectorXd& flat);
};

struct ActivationMatrix {
    Eigen::MatrixXd values;  // n x M_l, post-activation outputs on the inputs
    int layer = 0;           // hidden layer index (0-based)
};

Eigen::VectorXd forward(const NetworkSpec& spec, const WeightVector& w,
                        const Eigen::VectorXd& x);

/// Batched forward over the rows of X; returns n x output_dim.
Eigen::MatrixXd forward_batch(const NetworkSpec& spec, const WeightVector& w,
                              const Eigen::MatrixXd& X);

/// Pre-activation vectors z_l = W_l a_{l-1} + b_l for each hidden layer.
std::vector<Eigen::VectorXd> preactivations(const NetworkSpec& spec, const WeightVector& w,
                                            const Eigen::VectorXd& x);

/// Exact gradient of sum_i <residual_i, f(x_i; w)> by reverse accumulation;
/// residuals is n x output_dim (the d loss / d f seed). ReLU derivative at 0 is 0.
WeightVector gradient(const NetworkSpec& spec, const WeightVector& w,
                      const Eigen::MatrixXd& X, const Eigen::MatrixXd& residuals);

/// Stacked per-example Jacobian, (n * output_dim) x dim; row block i holds
/// d f(x_i) / d w in the flat layout.
Eigen::MatrixXd batch_jacobian(const NetworkSpec& spec, const WeightVector& w,
                               const Eigen::MatrixXd& X);

ActivationMatrix activation_matrix(const NetworkSpec& spec, const WeightVector& w,
                                   const Eigen::MatrixXd& X, int layer);

}  // namespace pglab
