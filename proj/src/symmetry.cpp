#include "pglab/symmetry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pglab {

namespace {

void check_hidden_layer(const NetworkSpec& spec, int layer) {
    if (layer < 0 || layer >= spec.n_hidden())
        throw ShapeError("hidden layer index " + std::to_string(layer) + " out of range");
}

void check_unit(const NetworkSpec& spec, int layer, int unit) {
    check_hidden_layer(spec, layer);
    if (unit < 0 || unit >= spec.widths[layer])
        throw ShapeError("unit " + std::to_string(unit) + " out of range in layer " +
                         std::to_string(layer));
}

}  // namespace

void Assignment::validate() const {
    if (m_star < 1) throw ShapeError("reference width must be positive");
    if (m() < m_star) throw ShapeError("target width smaller than reference width");
    std::vector<bool> hit(static_cast<std::size_t>(m_star), false);
    for (int g : map) {
        if (g < 0 || g >= m_star)
            throw ShapeError("assignment target " + std::to_string(g) + " out of range");
        hit[static_cast<std::size_t>(g)] = true;
    }
    if (!std::all_of(hit.begin(), hit.end(), [](bool b) { return b; }))
        throw ShapeError("assignment map is not surjective");
}

std::vector<std::vector<int>> Assignment::groups() const {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(m_star));
    for (int j = 0; j < m(); ++j) out[static_cast<std::size_t>(map[j])].push_back(j);
    return out;
}

Assignment Assignment::proportional(int m_star, int m) {
    Assignment a;
    a.m_star = m_star;
    a.map.resize(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j)
        a.map[static_cast<std::size_t>(j)] = static_cast<int>((static_cast<std::int64_t>(j) * m_star) / m);
    a.validate();
    return a;
}

void SimplexCoords::validate(double tol) const {
    for (const auto& r : rho) {
        if (r.size() < 1) throw ShapeError("empty simplex block");
        if (r.minCoeff() < 0.0) throw ShapeError("negative simplex coordinate");
        if (std::fabs(r.sum() - 1.0) > tol)
            throw ShapeError("simplex block does not sum to 1");
    }
}

WeightVector permute_neurons(const NetworkSpec& spec, const WeightVector& w, int layer,
                             const std::vector<int>& perm) {
    check_hidden_layer(spec, layer);
    const int m = spec.widths[layer];
    if (static_cast<int>(perm.size()) != m) throw ShapeError("permutation has wrong length");
    std::vector<bool> seen(static_cast<std::size_t>(m), false);
    for (int p : perm) {
        if (p < 0 || p >= m || seen[static_cast<std::size_t>(p)])
            throw ShapeError("not a permutation of the layer units");
        seen[static_cast<std::size_t>(p)] = true;
    }
    WeightVector out = w;
    for (int j = 0; j < m; ++j) {
        const int src = perm[static_cast<std::size_t>(j)];
        out.layers[layer].W.row(j) = w.layers[layer].W.row(src);
        if (out.layers[layer].b) (*out.layers[layer].b)[j] = (*w.layers[layer].b)[src];
        out.layers[layer + 1].W.col(j) = w.layers[layer + 1].W.col(src);
    }
    return out;
}

WeightVector rescale_unit(const NetworkSpec& spec, const WeightVector& w, int layer, int unit,
                          double c) {
    check_unit(spec, layer, unit);
    if (!(c > 0.0)) throw SymmetryError("rescale factor must be positive");
    WeightVector out = w;
    out.layers[layer].W.row(unit) *= c;
    if (out.layers[layer].b) (*out.layers[layer].b)[unit] *= c;
    out.layers[layer + 1].W.col(unit) /= c;
    return out;
}

WeightVector sign_flip_pair(const NetworkSpec& spec, const WeightVector& w, int unit) {
    if (spec.activation != Activation::kIdentity)
        throw SymmetryError("sign flips are a symmetry of the linear product network only");
    check_unit(spec, 0, unit);
    WeightVector out = w;
    out.layers[0].W.row(unit) *= -1.0;
    if (out.layers[0].b) (*out.layers[0].b)[unit] *= -1.0;
    out.layers[1].W.col(unit) *= -1.0;
    return out;
}

BalanceResult balance_pair(const NetworkSpec& spec, const WeightVector& w, int layer,
                           double lambda_l, double lambda_next) {
    check_hidden_layer(spec, layer);
    if (spec.has_bias(layer))
        throw SymmetryError("balance_pair expects no bias feeding layer " +
                            std::to_string(layer + 1));
    if (!(lambda_l > 0.0) || !(lambda_next > 0.0))
        throw ShapeError("penalty weights must be positive");
    BalanceResult res;
    res.w = w;
    const double n_l = w.layers[layer].W.squaredNorm();
    const double n_next = w.layers[layer + 1].W.squaredNorm();
    if (n_l == 0.0 || n_next == 0.0) {
        res.degenerate = true;
        return res;
    }
    const double a = std::pow(lambda_next * n_next / (lambda_l * n_l), 0.25);
    res.scale = a;
    res.w.layers[layer].W *= a;
    res.w.layers[layer + 1].W /= a;
    return res;
}

SplitResult split_neuron(const NetworkSpec& spec, const WeightVector& w, int layer, int unit,
                         const Eigen::VectorXd& rho) {
    check_unit(spec, layer, unit);
    const int k = static_cast<int>(rho.size());
    if (k < 1) throw ShapeError("split needs at least one copy");
    if (rho.minCoeff() < 0.0 || std::fabs(rho.sum() - 1.0) > 1e-9)
        throw ShapeError("rho is not on the simplex");

    SplitResult out;
    out.spec = spec;
    out.spec.widths[layer] += k - 1;
    out.w = WeightVector::zeros(out.spec);

    for (int l = 0; l < spec.n_affine(); ++l) {
        if (l != layer && l != layer + 1) {
            out.w.layers[l] = w.layers[l];
            continue;
        }
        if (l == layer) {
            auto& dst = out.w.layers[l];
            const auto& src = w.layers[l];
            int row = 0;
            for (int j = 0; j < spec.widths[layer]; ++j) {
                if (j != unit) {
                    dst.W.row(row) = src.W.row(j);
                    if (dst.b) (*dst.b)[row] = (*src.b)[j];
                    ++row;
                } else {
                    for (int i = 0; i < k; ++i) {
                        const double s = std::sqrt(rho[i]);
                        dst.W.row(row) = s * src.W.row(j);
                        if (dst.b) (*dst.b)[row] = s * (*src.b)[j];
                        ++row;
                    }
                }
            }
        } else {
            auto& dst = out.w.layers[l];
            const auto& src = w.layers[l];
            if (dst.b) *dst.b = *src.b;
            int col = 0;
            for (int j = 0; j < spec.widths[layer]; ++j) {
                if (j != unit) {
                    dst.W.col(col) = src.W.col(j);
                    ++col;
                } else {
                    for (int i = 0; i < k; ++i) {
                        dst.W.col(col) = std::sqrt(rho[i]) * src.W.col(j);
                        ++col;
                    }
                }
            }
        }
    }
    return out;
}

SimplexCoords sample_manifold_coords(const Assignment& assignment, Rng& rng) {
    assignment.validate();
    SimplexCoords coords;
    for (const auto& group : assignment.groups()) {
        const int k = static_cast<int>(group.size());
        Eigen::VectorXd v(k);
        double norm2 = 0.0;
        do {
            for (int i = 0; i < k; ++i) v[i] = rng.normal();
            norm2 = v.squaredNorm();
        } while (norm2 == 0.0);
        coords.rho.push_back(v.cwiseProduct(v) / norm2);
    }
    return coords;
}

ManifoldSample sample_manifold(const NetworkSpec& ref_spec, const WeightVector& ref_w,
                               const Assignment& assignment, Rng& rng, int layer) {
    check_hidden_layer(ref_spec, layer);
    assignment.validate();
    if (assignment.m_star != ref_spec.widths[layer])
        throw ShapeError("assignment reference width does not match the network");

    ManifoldSample out;
    out.coords = sample_manifold_coords(assignment, rng);
    out.spec = ref_spec;
    out.spec.widths[layer] = assignment.m();
    out.w = WeightVector::zeros(out.spec);

    for (int l = 0; l < ref_spec.n_affine(); ++l)
        if (l != layer && l != layer + 1) out.w.layers[l] = ref_w.layers[l];
    if (out.w.layers[layer + 1].b) *out.w.layers[layer + 1].b = *ref_w.layers[layer + 1].b;

    const auto groups = assignment.groups();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const Eigen::VectorXd& rho = out.coords.rho[g];
        for (std::size_t i = 0; i < groups[g].size(); ++i) {
            const int j = groups[g][i];
            const int ref_unit = static_cast<int>(g);
            const double s = std::sqrt(rho[static_cast<int>(i)]);
            out.w.layers[layer].W.row(j) = s * ref_w.layers[layer].W.row(ref_unit);
            if (out.w.layers[layer].b)
                (*out.w.layers[layer].b)[j] = s * (*ref_w.layers[layer].b)[ref_unit];
            out.w.layers[layer + 1].W.col(j) = s * ref_w.layers[layer + 1].W.col(ref_unit);
        }
    }
    return out;
}

SimplexCoords extract_rho(const NetworkSpec& spec, const WeightVector& w,
                          const Assignment& assignment, int layer) {
    check_hidden_layer(spec, layer);
    assignment.validate();
    if (assignment.m() != spec.widths[layer])
        throw ShapeError("assignment target width does not match the network");

    std::vector<double> unit_norm2(static_cast<std::size_t>(spec.widths[layer]));
    for (int j = 0; j < spec.widths[layer]; ++j) {
        double n2 = w.layers[layer].W.row(j).squaredNorm() +
                    w.layers[layer + 1].W.col(j).squaredNorm();
        if (w.layers[layer].b) n2 += (*w.layers[layer].b)[j] * (*w.layers[layer].b)[j];
        unit_norm2[static_cast<std::size_t>(j)] = n2;
    }

    SimplexCoords coords;
    for (const auto& group : assignment.groups()) {
        Eigen::VectorXd rho(static_cast<int>(group.size()));
        double total = 0.0;
        for (std::size_t i = 0; i < group.size(); ++i) {
            rho[static_cast<int>(i)] = unit_norm2[static_cast<std::size_t>(group[i])];
            total += rho[static_cast<int>(i)];
        }
        if (total == 0.0)
            throw NumericError("prior", "zero group norm in rho extraction");
        coords.rho.push_back(rho / total);
    }
    return coords;
}

double penalty(const WeightVector& w, const PriorSpec& prior) {
    double r = 0.0;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const int li = static_cast<int>(l);
        r += prior.lambda(li) * w.layers[l].W.squaredNorm();
        if (w.layers[l].b && prior.bias_prior == BiasPrior::kGaussian)
            r += w.layers[l].b->squaredNorm() / (2.0 * prior.bias_tau * prior.bias_tau);
    }
    return r;
}

}  // namespace pglab
