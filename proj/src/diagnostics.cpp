#include "pglab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>

namespace pglab {

namespace {

struct FlatLayout {
    std::vector<int> w_off, w_rows, w_cols;
};

FlatLayout layout_of(const NetworkSpec& spec) {
    FlatLayout fl;
    int off = 0;
    for (int l = 0; l < spec.n_affine(); ++l) {
        fl.w_off.push_back(off);
        fl.w_rows.push_back(spec.layer_out(l));
        fl.w_cols.push_back(spec.layer_in(l));
        off += spec.layer_params(l);
    }
    return fl;
}

double sq_norm(const double* p, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += p[i] * p[i];
    return s;
}

std::vector<double> batch_values(std::span<const double> per_draw, int n_batches) {
    const std::int64_t n = static_cast<std::int64_t>(per_draw.size());
    n_batches = static_cast<int>(std::min<std::int64_t>(n_batches, n));
    std::vector<double> out;
    for (int b = 0; b < n_batches; ++b) {
        const std::int64_t lo = b * n / n_batches;
        const std::int64_t hi = (b + 1) * n / n_batches;
        out.push_back(stats::mean(per_draw.subspan(static_cast<std::size_t>(lo),
                                                   static_cast<std::size_t>(hi - lo))));
    }
    return out;
}

}  // namespace

Statistic Statistic::with_se(double value, double se, double target) {
    Statistic s;
    s.value = value;
    s.se = se;
    s.target = target;
    s.pass = std::fabs(value - target) <= 3.0 * se;
    return s;
}

Statistic Statistic::with_tol(double value, double tol, double target) {
    Statistic s;
    s.value = value;
    s.tol = tol;
    s.target = target;
    s.pass = std::fabs(value - target) <= tol;
    return s;
}

BalancednessReport balancedness_report(const SampleStore& store, const NetworkSpec& spec,
                                       const PriorSpec& prior) {
    if (!store.matches(spec)) throw ShapeError("store shapes do not match the network");
    const FlatLayout fl = layout_of(spec);
    const int L = spec.n_affine();
    const int K = store.n_chains();
    const std::int64_t S = store.samples_per_chain();

    // per-chain means of ||W_l||_F^2
    std::vector<std::vector<double>> frob(static_cast<std::size_t>(L),
                                          std::vector<double>(static_cast<std::size_t>(K), 0.0));
    for (int k = 0; k < K; ++k) {
        for (std::int64_t s = 0; s < S; ++s) {
            const double* base = store.sample(k, s).data();
            for (int l = 0; l < L; ++l)
                frob[static_cast<std::size_t>(l)][static_cast<std::size_t>(k)] +=
                    sq_norm(base + fl.w_off[static_cast<std::size_t>(l)],
                            fl.w_rows[static_cast<std::size_t>(l)] * fl.w_cols[static_cast<std::size_t>(l)]);
        }
        for (int l = 0; l < L; ++l)
            frob[static_cast<std::size_t>(l)][static_cast<std::size_t>(k)] /= static_cast<double>(S);
    }

    BalancednessReport report;
    std::vector<std::vector<double>> b_chain(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
        const double t = prior.tau(l);
        const int d_l = fl.w_rows[static_cast<std::size_t>(l)] * fl.w_cols[static_cast<std::size_t>(l)];
        std::vector<double>& vals = b_chain[static_cast<std::size_t>(l)];
        for (int k = 0; k < K; ++k)
            vals.push_back(frob[static_cast<std::size_t>(l)][static_cast<std::size_t>(k)] / (t * t) - d_l);
        const auto ms = stats::chain_batched(vals);
        LayerBalance lb;
        lb.layer = l;
        lb.d_weights = d_l;
        lb.b_hat = Statistic::with_se(ms.mean, ms.se, 0.0);
        report.layers.push_back(lb);
    }

    report.all_pass = true;
    for (const auto& lb : report.layers) report.all_pass &= lb.b_hat.pass;

    for (int l = 0; l + 1 < L; ++l) {
        PairBalance pb;
        pb.layer = l;
        std::vector<double> resid, fdiff;
        for (int k = 0; k < K; ++k) {
            resid.push_back(b_chain[static_cast<std::size_t>(l)][static_cast<std::size_t>(k)] -
                            b_chain[static_cast<std::size_t>(l + 1)][static_cast<std::size_t>(k)]);
            fdiff.push_back(frob[static_cast<std::size_t>(l)][static_cast<std::size_t>(k)] -
                            frob[static_cast<std::size_t>(l + 1)][static_cast<std::size_t>(k)]);
        }
        const auto rs = stats::chain_batched(resid);
        pb.residual = Statistic::with_se(rs.mean, rs.se, 0.0);
        const double t = prior.tau(l);
        const int d_l = fl.w_rows[static_cast<std::size_t>(l)] * fl.w_cols[static_cast<std::size_t>(l)];
        const int d_n = fl.w_rows[static_cast<std::size_t>(l + 1)] * fl.w_cols[static_cast<std::size_t>(l + 1)];
        const auto fs = stats::chain_batched(fdiff);
        pb.frob_diff = Statistic::with_se(fs.mean, fs.se, t * t * (d_l - d_n));
        report.all_pass &= pb.residual.pass;
        if (prior.tau(l) == prior.tau(l + 1)) report.all_pass &= pb.frob_diff.pass;
        report.pairs.push_back(pb);
    }
    return report;
}

NeuronwiseReport neuronwise_balance(const SampleStore& store, const NetworkSpec& spec,
                                    const PriorSpec& prior) {
    if (!store.matches(spec)) throw ShapeError("store shapes do not match the network");
    const FlatLayout fl = layout_of(spec);
    const int K = store.n_chains();
    const std::int64_t S = store.samples_per_chain();

    NeuronwiseReport report;
    report.all_pass = true;
    for (int l = 0; l < spec.n_hidden(); ++l) {
        const int m = spec.widths[l];
        const int in_off = fl.w_off[static_cast<std::size_t>(l)];
        const int in_len = fl.w_cols[static_cast<std::size_t>(l)];
        const int out_off = fl.w_off[static_cast<std::size_t>(l + 1)];
        const int out_rows = fl.w_rows[static_cast<std::size_t>(l + 1)];
        const int out_stride = fl.w_cols[static_cast<std::size_t>(l + 1)];
        const double tl = prior.tau(l);
        const double tn = prior.tau(l + 1);
        const double target = 0.0;
        const double d_in = in_len, d_out = out_rows;

        for (int j = 0; j < m; ++j) {
            std::vector<double> resid;
            for (int k = 0; k < K; ++k) {
                double in_sum = 0.0, out_sum = 0.0;
                for (std::int64_t s = 0; s < S; ++s) {
                    const double* base = store.sample(k, s).data();
                    in_sum += sq_norm(base + in_off + j * in_len, in_len);
                    const double* col = base + out_off + j;
                    double cs = 0.0;
                    for (int r = 0; r < out_rows; ++r) cs += col[r * out_stride] * col[r * out_stride];
                    out_sum += cs;
                }
                const double in_mean = in_sum / static_cast<double>(S);
                const double out_mean = out_sum / static_cast<double>(S);
                resid.push_back(in_mean / (tl * tl) - out_mean / (tn * tn) - (d_in - d_out));
            }
            const auto ms = stats::chain_batched(resid);
            UnitBalance ub;
            ub.layer = l;
            ub.unit = j;
            ub.residual = Statistic::with_se(ms.mean, ms.se, target);
            report.all_pass &= ub.residual.pass;
            report.units.push_back(ub);
        }
    }
    return report;
}

DirichletGof dirichlet_gof(const Eigen::MatrixXd& rho, double alpha) {
    const int k = static_cast<int>(rho.cols());
    const std::int64_t n = rho.rows();
    if (k < 2) throw ShapeError("dirichlet_gof needs k >= 2");
    if (n < 8) throw ShapeError("dirichlet_gof needs more draws");
    for (std::int64_t t = 0; t < n; ++t) {
        if (rho.row(t).minCoeff() < -1e-12 || std::fabs(rho.row(t).sum() - 1.0) > 1e-6)
            throw ShapeError("row " + std::to_string(t) + " is not on the simplex");
    }

    DirichletGof out;
    out.alpha = alpha;
    out.k = k;
    const double beta_b = (k - 1) * alpha;
    std::vector<double> col(static_cast<std::size_t>(n));
    out.min_p = 1.0;
    for (int j = 0; j < k; ++j) {
        for (std::int64_t t = 0; t < n; ++t)
            col[static_cast<std::size_t>(t)] = std::clamp(rho(t, j), 0.0, 1.0);
        std::sort(col.begin(), col.end());
        const auto ks = stats::ks_test_sorted(
            col, [&](double x) { return stats::beta_cdf(alpha, beta_b, x); });
        out.min_p = std::min(out.min_p, ks.p_value);
        out.marginals.push_back(ks);
    }

    // mean over unordered pairs of rho_i rho_j, per draw: (1 - sum rho^2) / (k (k-1))
    const double pair_norm = static_cast<double>(k) * (k - 1);
    std::vector<double> per_draw(static_cast<std::size_t>(n));
    for (std::int64_t t = 0; t < n; ++t)
        per_draw[static_cast<std::size_t>(t)] =
            (1.0 - rho.row(t).squaredNorm()) / pair_norm - 1.0 / (static_cast<double>(k) * k);
    const double est = stats::mean(per_draw);
    const double se = std::sqrt(stats::variance(per_draw) / static_cast<double>(n));
    const double alpha0 = k * alpha;
    const double target = -alpha * alpha / (alpha0 * alpha0 * (alpha0 + 1.0));
    out.pairwise_cov = Statistic::with_se(est, se, target);
    out.pass = out.min_p > 0.01 && out.pairwise_cov.pass;
    return out;
}

BlockMomentPoint block_moments(const std::vector<Eigen::MatrixXd>& group_rho, int n_batches) {
    if (group_rho.empty()) throw ShapeError("no groups");
    const std::int64_t n = group_rho[0].rows();
    int m_total = 0;
    double pair_count = 0.0;
    for (const auto& g : group_rho) {
        if (g.rows() != n) throw ShapeError("group draw counts differ");
        m_total += static_cast<int>(g.cols());
        pair_count += static_cast<double>(g.cols()) * (g.cols() - 1);
    }
    const int n_groups = static_cast<int>(group_rho.size());

    std::vector<double> mean_draw(static_cast<std::size_t>(n));
    std::vector<double> within_draw(static_cast<std::size_t>(n));
    std::vector<double> cross_draw(static_cast<std::size_t>(n));
    std::vector<std::vector<double>> group_mean_draw(
        static_cast<std::size_t>(n_groups), std::vector<double>(static_cast<std::size_t>(n)));

    double cross_pairs = 0.0;
    if (n_groups > 1) {
        double sk = 0.0, sk2 = 0.0;
        for (const auto& g : group_rho) {
            sk += static_cast<double>(g.cols());
            sk2 += static_cast<double>(g.cols()) * g.cols();
        }
        cross_pairs = sk * sk - sk2;
    }

    for (std::int64_t t = 0; t < n; ++t) {
        double s_all = 0.0, within = 0.0, s_sq = 0.0;
        for (int g = 0; g < n_groups; ++g) {
            const auto row = group_rho[static_cast<std::size_t>(g)].row(t);
            const double s1 = row.array().sqrt().sum();
            s_all += s1;
            s_sq += s1 * s1;
            within += s1 * s1 - 1.0;
            group_mean_draw[static_cast<std::size_t>(g)][static_cast<std::size_t>(t)] =
                s1 / static_cast<double>(row.size());
        }
        mean_draw[static_cast<std::size_t>(t)] = s_all / m_total;
        within_draw[static_cast<std::size_t>(t)] = pair_count > 0.0 ? within / pair_count : 0.0;
        cross_draw[static_cast<std::size_t>(t)] =
            n_groups > 1 ? (s_all * s_all - s_sq) / cross_pairs : 0.0;
    }

    BlockMomentPoint out;
    out.m_total = m_total;
    const auto mean_batches = batch_values(mean_draw, n_batches);
    out.mean_sqrt_rho = stats::chain_batched(mean_batches);

    // covariance per batch: E[pair product] - (E sqrt rho)^2 within the batch
    const auto within_b = batch_values(within_draw, n_batches);
    std::vector<double> within_cov_b;
    for (std::size_t b = 0; b < within_b.size(); ++b)
        within_cov_b.push_back(within_b[b] - mean_batches[b] * mean_batches[b]);
    out.within_cov = stats::chain_batched(within_cov_b);

    if (n_groups > 1) {
        out.has_between = true;
        const auto cross_b = batch_values(cross_draw, n_batches);
        std::vector<std::vector<double>> gm_b;
        for (const auto& gm : group_mean_draw) gm_b.push_back(batch_values(gm, n_batches));
        std::vector<double> between_b;
        for (std::size_t b = 0; b < cross_b.size(); ++b) {
            double prod = 0.0;
            for (int g = 0; g < n_groups; ++g)
                for (int h = 0; h < n_groups; ++h) {
                    if (g == h) continue;
                    const double kg = static_cast<double>(group_rho[static_cast<std::size_t>(g)].cols());
                    const double kh = static_cast<double>(group_rho[static_cast<std::size_t>(h)].cols());
                    prod += kg * kh * gm_b[static_cast<std::size_t>(g)][b] *
                            gm_b[static_cast<std::size_t>(h)][b];
                }
            between_b.push_back(cross_b[b] - prod / cross_pairs);
        }
        out.between_cov = stats::chain_batched(between_b);
    }
    return out;
}

ScalingReport block_moment_scaling(const std::vector<BlockMomentPoint>& points) {
    if (points.size() < 3) throw ShapeError("scaling fit needs at least three widths");
    ScalingReport out;
    out.points = points;
    std::vector<double> lx, ly_mean, ly_cov;
    for (const auto& p : points) {
        lx.push_back(std::log(static_cast<double>(p.m_total)));
        ly_mean.push_back(std::log(p.mean_sqrt_rho.mean));
        ly_cov.push_back(std::log(std::fabs(p.within_cov.mean)));
    }
    out.mean_fit = stats::fit_line(lx, ly_mean);
    out.cov_fit = stats::fit_line(lx, ly_cov);
    return out;
}

ConstrainedMoments constrained_moments(const SampleStore& store, const NetworkSpec& spec,
                                       double beta, double tau) {
    if (spec.n_hidden() != 1 || spec.input_dim != 1 || spec.output_dim != 1)
        throw ShapeError("constrained_moments expects a 1-M-1 network");
    for (int l = 0; l < spec.n_affine(); ++l)
        if (spec.has_bias(l)) throw ShapeError("constrained_moments expects no biases");
    if (!store.matches(spec)) throw ShapeError("store shapes do not match the network");

    const int m = spec.widths[0];
    const int K = store.n_chains();
    const std::int64_t S = store.samples_per_chain();

    // The posterior is exactly invariant under the per-unit sign flip
    // (w_{1,m}, w_{2,m}) -> (-w_{1,m}, -w_{2,m}) because the likelihood sees
    // the weights only through the products. Every coordinate therefore has
    // mean zero, and the raw second moments below already are the centred
    // variance and covariance. Subtracting per-chain empirical means would
    // instead measure within-mode moments whenever a chain spends its whole
    // run in one sign orthant, which is the typical behaviour.
    std::vector<double> mean_c, var_c, cov_c;
    std::vector<std::vector<double>> unit_cov_c(static_cast<std::size_t>(m));
    for (int k = 0; k < K; ++k) {
        Eigen::VectorXd s1 = Eigen::VectorXd::Zero(2 * m);
        double sq = 0.0;
        Eigen::VectorXd s12 = Eigen::VectorXd::Zero(m);
        for (std::int64_t s = 0; s < S; ++s) {
            const auto w = store.sample(k, s);
            s1 += w;
            sq += w.squaredNorm();
            s12 += w.head(m).cwiseProduct(w.tail(m));
        }
        const double ns = static_cast<double>(S);
        mean_c.push_back(s1.sum() / (2.0 * m * ns));
        var_c.push_back(sq / (2.0 * m * ns));
        double cov = 0.0;
        for (int j = 0; j < m; ++j) {
            const double c = s12[j] / ns;
            cov += c;
            unit_cov_c[static_cast<std::size_t>(j)].push_back(c);
        }
        cov_c.push_back(cov / m);
    }

    ConstrainedMoments out;
    const auto ms = stats::chain_batched(mean_c);
    out.mean_w = Statistic::with_se(ms.mean, ms.se, 0.0);
    const auto vs = stats::chain_batched(var_c);
    out.var_w = Statistic::with_se(vs.mean, vs.se, tau * tau);
    const auto cs = stats::chain_batched(cov_c);
    out.cov_pair = Statistic::with_se(cs.mean, cs.se, beta / m);
    for (int j = 0; j < m; ++j) {
        const auto us = stats::chain_batched(unit_cov_c[static_cast<std::size_t>(j)]);
        out.unit_cov.push_back(Statistic::with_se(us.mean, us.se, beta / m));
    }
    return out;
}

ConformityReport prior_conformity_test(const Eigen::MatrixXd& projected, double tau2,
                                       int n_chains) {
    const int r = static_cast<int>(projected.cols());
    if (r == 0) throw ShapeError("no kernel directions to test");
    const std::int64_t total = projected.rows();
    if (n_chains < 1 || total % n_chains != 0)
        throw ShapeError("row count is not a multiple of the chain count");
    const std::int64_t per_chain = total / n_chains;
    if (per_chain < 2) throw ShapeError("need at least two samples per chain");

    ConformityReport out;
    out.all_pass = true;
    const double sd = std::sqrt(tau2);
    std::vector<double> col(static_cast<std::size_t>(total));
    for (int j = 0; j < r; ++j) {
        std::vector<double> ratios;
        for (int k = 0; k < n_chains; ++k) {
            const auto seg = projected.col(j).segment(k * per_chain, per_chain);
            const double mu = seg.mean();
            const double var = (seg.array() - mu).square().sum() / static_cast<double>(per_chain - 1);
            ratios.push_back(var / tau2);
        }
        const auto ms = stats::chain_batched(ratios);
        out.variance_ratio.push_back(Statistic::with_se(ms.mean, ms.se, 1.0));
        out.all_pass &= out.variance_ratio.back().pass;

        for (std::int64_t t = 0; t < total; ++t) col[static_cast<std::size_t>(t)] = projected(t, j);
        std::sort(col.begin(), col.end());
        out.normality.push_back(
            stats::ks_test_sorted(col, [&](double x) { return stats::normal_cdf(x / sd); }));
    }
    return out;
}

CovarianceReport sample_covariance(const SampleStore& store, const std::vector<int>& subset) {
    if (store.total_samples() < 2) throw ShapeError("need at least two samples");
    for (int idx : subset)
        if (idx < 0 || idx >= store.dim())
            throw ShapeError("subset index " + std::to_string(idx) + " out of range");
    const int q = static_cast<int>(subset.size());
    const std::int64_t total = store.total_samples();
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMajor> samples(store.payload().data(), total, store.dim());

    Eigen::MatrixXd sel(total, q);
    for (int j = 0; j < q; ++j) sel.col(j) = samples.col(subset[static_cast<std::size_t>(j)]);
    const Eigen::RowVectorXd mu = sel.colwise().mean();
    sel.rowwise() -= mu;

    CovarianceReport out;
    out.subset = subset;
    out.cov = sel.transpose() * sel / static_cast<double>(total - 1);
    out.corr = Eigen::MatrixXd::Zero(q, q);
    std::vector<bool> degenerate(static_cast<std::size_t>(q), false);
    for (int j = 0; j < q; ++j)
        if (out.cov(j, j) <= 0.0) {
            degenerate[static_cast<std::size_t>(j)] = true;
            out.zero_variance.push_back(j);
        }
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) {
            if (degenerate[static_cast<std::size_t>(i)] || degenerate[static_cast<std::size_t>(j)])
                continue;
            out.corr(i, j) = out.cov(i, j) / std::sqrt(out.cov(i, i) * out.cov(j, j));
        }
    return out;
}

MarginalGrids marginal_grids(const SampleStore& store, const std::vector<int>& singles,
                             const std::vector<std::pair<int, int>>& pairs, int bins, double lo,
                             double hi) {
    if (singles.empty() && pairs.empty()) throw ShapeError("empty grid selection");
    if (bins < 1) throw ShapeError("bins must be >= 1");
    if (!(hi > lo)) throw ShapeError("empty grid range");
    const std::int64_t total = store.total_samples();
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMajor> samples(store.payload().data(), total, store.dim());
    const double width = (hi - lo) / bins;

    const auto bin_of = [&](double x) -> int {
        if (x < lo || x > hi) return -1;
        if (x == hi) return bins - 1;
        return static_cast<int>((x - lo) / width);
    };

    MarginalGrids out;
    for (int idx : singles) {
        if (idx < 0 || idx >= store.dim()) throw ShapeError("grid index out of range");
        Grid1D g;
        g.index = idx;
        g.lo = lo;
        g.hi = hi;
        std::vector<std::int64_t> counts(static_cast<std::size_t>(bins), 0);
        for (std::int64_t t = 0; t < total; ++t) {
            const int b = bin_of(samples(t, idx));
            if (b >= 0) {
                ++counts[static_cast<std::size_t>(b)];
                ++g.n_in;
            }
        }
        g.density.resize(static_cast<std::size_t>(bins), 0.0);
        if (g.n_in > 0)
            for (int b = 0; b < bins; ++b)
                g.density[static_cast<std::size_t>(b)] =
                    static_cast<double>(counts[static_cast<std::size_t>(b)]) /
                    (static_cast<double>(g.n_in) * width);
        out.singles.push_back(std::move(g));
    }
    for (const auto& [ix, iy] : pairs) {
        if (ix < 0 || ix >= store.dim() || iy < 0 || iy >= store.dim())
            throw ShapeError("grid index out of range");
        Grid2D g;
        g.index_x = ix;
        g.index_y = iy;
        g.lo = lo;
        g.hi = hi;
        g.bins = bins;
        std::vector<std::int64_t> counts(static_cast<std::size_t>(bins) * bins, 0);
        for (std::int64_t t = 0; t < total; ++t) {
            const int bx = bin_of(samples(t, ix));
            const int by = bin_of(samples(t, iy));
            if (bx >= 0 && by >= 0) {
                ++counts[static_cast<std::size_t>(bx) * bins + by];
                ++g.n_in;
            }
        }
        g.density.resize(static_cast<std::size_t>(bins) * bins, 0.0);
        if (g.n_in > 0)
            for (std::size_t i = 0; i < counts.size(); ++i)
                g.density[i] = static_cast<double>(counts[i]) /
                               (static_cast<double>(g.n_in) * width * width);
        out.pairs.push_back(std::move(g));
    }
    return out;
}

void write_grid_csv(std::ostream& os, const Grid1D& grid) {
    const int bins = static_cast<int>(grid.density.size());
    const double width = (grid.hi - grid.lo) / bins;
    os << "bin_lo,bin_hi,density\n" << std::setprecision(17);
    for (int b = 0; b < bins; ++b)
        os << grid.lo + b * width << "," << grid.lo + (b + 1) * width << ","
           << grid.density[static_cast<std::size_t>(b)] << "\n";
}

void write_grid_csv(std::ostream& os, const Grid2D& grid) {
    const double width = (grid.hi - grid.lo) / grid.bins;
    os << "x_lo,x_hi,y_lo,y_hi,density\n" << std::setprecision(17);
    for (int bx = 0; bx < grid.bins; ++bx)
        for (int by = 0; by < grid.bins; ++by)
            os << grid.lo + bx * width << "," << grid.lo + (bx + 1) * width << ","
               << grid.lo + by * width << "," << grid.lo + (by + 1) * width << ","
               << grid.density[static_cast<std::size_t>(bx) * grid.bins + by] << "\n";
}

}  // namespace pglab
