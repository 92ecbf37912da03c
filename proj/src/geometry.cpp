#include "pglab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pglab/stats.hpp"

namespace pglab {

namespace {

// Orthonormal basis of the zero-sum subspace {v : sum v = 0} in R^c.
Eigen::MatrixXd zero_sum_basis(int c) {
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(c, 1);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(ones);
    Eigen::MatrixXd q = qr.householderQ();
    return q.rightCols(c - 1);
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    }
    void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

}  // namespace

JacobianBundle kernel_basis(const Eigen::MatrixXd& J, double rel_tol) {
    if (!J.allFinite()) throw NumericError("jacobian", "non-finite entries");
    JacobianBundle out;
    out.J = J;
    const int d = static_cast<int>(J.cols());
    Eigen::BDCSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullV);
    out.singular_values = svd.singularValues();
    const double smax = out.singular_values.size() > 0 ? out.singular_values[0] : 0.0;
    const double cut = rel_tol * smax;
    int rank = 0;
    for (int i = 0; i < out.singular_values.size(); ++i)
        if (out.singular_values[i] > cut && out.singular_values[i] > 0.0) ++rank;
    out.rank = rank;
    const Eigen::MatrixXd& v = svd.matrixV();
    out.image = v.leftCols(rank);
    out.Z = v.rightCols(d - rank);
    return out;
}

GaussNewtonRestriction gauss_newton_restriction(const Eigen::MatrixXd& J,
                                                const Eigen::MatrixXd& upsilon, double lambda,
                                                double rel_tol) {
    if (!(lambda > 0.0)) throw ShapeError("lambda must be positive");
    if (upsilon.rows() != J.rows() || upsilon.cols() != J.rows())
        throw ShapeError("upsilon must be square with the Jacobian's row count");
    const int d = static_cast<int>(J.cols());
    GaussNewtonRestriction out;
    out.tau2 = 1.0 / (2.0 * lambda);
    out.h_star = J.transpose() * upsilon * J +
                 2.0 * lambda * Eigen::MatrixXd::Identity(d, d);
    const JacobianBundle bundle = kernel_basis(J, rel_tol);
    const Eigen::MatrixXd solved = out.h_star.ldlt().solve(bundle.Z);
    out.restricted = bundle.Z.transpose() * solved;
    Eigen::MatrixXd dev = out.restricted;
    dev.diagonal().array() -= out.tau2;
    out.max_deviation = dev.size() > 0 ? dev.cwiseAbs().maxCoeff() : 0.0;
    if (out.max_deviation > 1e-8 * std::max(1.0, out.tau2))
        throw NumericError("jacobian",
                           "kernel restriction deviates from tau^2 I by " +
                               std::to_string(out.max_deviation));
    return out;
}

GaussNewtonRestriction gauss_newton_restriction(const Eigen::MatrixXd& J, double upsilon_scale,
                                                double lambda, double rel_tol) {
    const Eigen::MatrixXd upsilon =
        upsilon_scale * Eigen::MatrixXd::Identity(J.rows(), J.rows());
    return gauss_newton_restriction(J, upsilon, lambda, rel_tol);
}

Eigen::MatrixXd project_samples(const SampleStore& store, const Eigen::VectorXd& w_ref,
                                const Eigen::MatrixXd& Z) {
    const int d = store.dim();
    if (w_ref.size() != d) throw ShapeError("reference point dimension mismatch");
    if (Z.rows() != d) throw ShapeError("kernel basis dimension mismatch");
    const std::int64_t total = store.total_samples();
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMajor> samples(store.payload().data(), total, d);
    return (samples.rowwise() - w_ref.transpose()) * Z;
}

ProbeResult flat_direction_probe(const NetworkSpec& spec, const WeightVector& w,
                                 const Eigen::MatrixXd& X, const ProbeOptions& options) {
    const Eigen::MatrixXd xi = activation_matrix(spec, w, X, options.layer).values;
    const int n = static_cast<int>(xi.rows());
    const int m = static_cast<int>(xi.cols());
    if (n < 2) throw ShapeError("probe needs at least two inputs");

    ProbeResult out;
    std::vector<int> active;
    Eigen::MatrixXd std_cols(n, m);
    for (int j = 0; j < m; ++j) {
        const double mu = xi.col(j).mean();
        const double sd =
            std::sqrt((xi.col(j).array() - mu).square().sum() / static_cast<double>(n - 1));
        if (sd <= 1e-12 * (std::fabs(mu) + 1.0)) {
            out.dropped_units.push_back(j);
            continue;
        }
        std_cols.col(static_cast<int>(active.size())) = (xi.col(j).array() - mu) / sd;
        active.push_back(j);
    }
    const int a = static_cast<int>(active.size());
    out.n_active = a;
    if (a == 0) {
        out.all_dead = true;
        return out;
    }
    if (a == 1) return out;

    Eigen::MatrixXd corr =
        std_cols.leftCols(a).transpose() * std_cols.leftCols(a) / static_cast<double>(n - 1);

    const int n_pairs = a * (a - 1) / 2;
    double threshold;
    if (options.null == ProbeNull::kGaussian) {
        // null sample correlation of independent columns has variance 1/(n-1)
        const double z = stats::normal_quantile(1.0 - options.alpha / (2.0 * n_pairs));
        threshold = std::min(z / std::sqrt(static_cast<double>(n - 1)), 0.9999);
    } else {
        Rng rng(options.permutation_seed, "probe/permutation");
        std::vector<double> max_abs(static_cast<std::size_t>(options.n_permutations));
        Eigen::MatrixXd perm_cols = std_cols.leftCols(a);
        for (int b = 0; b < options.n_permutations; ++b) {
            for (int j = 0; j < a; ++j)
                for (int i = n - 1; i > 0; --i) {
                    const int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
                    std::swap(perm_cols(i, j), perm_cols(r, j));
                }
            const Eigen::MatrixXd c =
                perm_cols.transpose() * perm_cols / static_cast<double>(n - 1);
            double mx = 0.0;
            for (int i = 0; i < a; ++i)
                for (int j = i + 1; j < a; ++j) mx = std::max(mx, std::fabs(c(i, j)));
            max_abs[static_cast<std::size_t>(b)] = mx;
        }
        std::sort(max_abs.begin(), max_abs.end());
        const auto idx = static_cast<std::size_t>(
            std::ceil((1.0 - options.alpha) * options.n_permutations) - 1);
        threshold = max_abs[std::min(idx, max_abs.size() - 1)];
    }
    out.threshold = threshold;

    UnionFind uf(a);
    for (int i = 0; i < a; ++i)
        for (int j = i + 1; j < a; ++j)
            if (std::fabs(corr(i, j)) > threshold) uf.unite(i, j);

    std::vector<std::vector<int>> comps(static_cast<std::size_t>(a));
    for (int i = 0; i < a; ++i) comps[static_cast<std::size_t>(uf.find(i))].push_back(active[static_cast<std::size_t>(i)]);

    for (auto& comp : comps) {
        if (comp.size() < 2) continue;
        const int c = static_cast<int>(comp.size());
        Eigen::MatrixXd cols(n, c);
        for (int j = 0; j < c; ++j) cols.col(j) = xi.col(comp[static_cast<std::size_t>(j)]);
        const Eigen::MatrixXd restricted = cols * zero_sum_basis(c);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(restricted);
        ProbeCluster cluster;
        cluster.units = comp;
        cluster.s_min = svd.singularValues().minCoeff();
        out.clusters.push_back(std::move(cluster));
    }
    return out;
}

ProbeSummary probe_store(const NetworkSpec& spec, const SampleStore& store,
                         const Eigen::MatrixXd& X, const ProbeOptions& options,
                         std::int64_t stride) {
    ProbeSummary summary;
    std::vector<double> min_s;
    for (int k = 0; k < store.n_chains(); ++k) {
        for (std::int64_t s = 0; s < store.samples_per_chain(); s += stride) {
            const WeightVector w = store.sample_weights(spec, k, s);
            const ProbeResult res = flat_direction_probe(spec, w, X, options);
            ++summary.n_samples;
            if (!res.clusters.empty()) {
                ++summary.samples_with_clusters;
                double mn = res.clusters[0].s_min;
                for (const auto& c : res.clusters) mn = std::min(mn, c.s_min);
                min_s.push_back(mn);
            }
        }
    }
    if (!min_s.empty()) {
        std::sort(min_s.begin(), min_s.end());
        summary.median_min_s = min_s[min_s.size() / 2];
    }
    return summary;
}

}  // namespace pglab
