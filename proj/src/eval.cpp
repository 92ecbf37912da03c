#include "pglab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "pglab/errors.hpp"
#include "pglab/rng.hpp"

namespace pglab {

namespace {

double padded_tree(const std::vector<double>& v, std::size_t pad, std::size_t begin,
                   std::size_t len) {
    if (begin + len <= pad) return 0.0;
    if (len == 1) return v[begin - pad];
    const std::size_t h = len / 2;
    return padded_tree(v, pad, begin, h) + padded_tree(v, pad, begin + h, h);
}

void check_store_data(const NetworkSpec& spec, const SampleStore& store, const Dataset& data) {
    if (!store.matches(spec)) throw ShapeError("store shapes do not match the network");
    if (store.total_samples() < 1) throw ShapeError("empty sample store");
    if (data.n() < 1) throw ShapeError("empty test set");
    if (data.p() != spec.input_dim) throw ShapeError("test inputs do not match the input width");
}

int expected_outputs(const LikelihoodSpec& lik, const NetworkSpec& spec) {
    return lik.family == Family::kGaussian ? spec.output_dim : 1;
}

}  // namespace

double sorted_pairwise_sum(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    std::size_t p = 1;
    while (p < values.size()) p <<= 1;
    return padded_tree(values, p - values.size(), 0, p);
}

Eigen::MatrixXd pointwise_log_densities(const NetworkSpec& spec, const SampleStore& store,
                                        const Dataset& data, const LikelihoodSpec& lik) {
    check_store_data(spec, store, data);
    if (data.y.cols() != expected_outputs(lik, spec))
        throw ShapeError("test targets do not match the likelihood family");
    const std::int64_t total = store.total_samples();
    Eigen::MatrixXd out(data.n(), total);
    std::int64_t col = 0;
    for (int k = 0; k < store.n_chains(); ++k) {
        for (std::int64_t s = 0; s < store.samples_per_chain(); ++s, ++col) {
            const WeightVector w = store.sample_weights(spec, k, s);
            const Eigen::MatrixXd f = forward_batch(spec, w, data.X);
            for (int i = 0; i < data.n(); ++i)
                out(i, col) = log_predictive_density(lik, f.row(i).transpose(),
                                                     data.y.row(i).transpose());
        }
    }
    return out;
}

double lppd_from_log_densities(const Eigen::MatrixXd& logdens, const std::vector<int>& columns) {
    const std::int64_t n_cols =
        columns.empty() ? logdens.cols() : static_cast<std::int64_t>(columns.size());
    if (logdens.rows() < 1 || n_cols < 1) throw ShapeError("no log densities to average");
    std::vector<double> vals(static_cast<std::size_t>(n_cols));
    std::vector<double> contrib(static_cast<std::size_t>(logdens.rows()));
    for (std::int64_t i = 0; i < logdens.rows(); ++i) {
        for (std::int64_t c = 0; c < n_cols; ++c)
            vals[static_cast<std::size_t>(c)] =
                logdens(i, columns.empty() ? c : columns[static_cast<std::size_t>(c)]);
        const double m = *std::max_element(vals.begin(), vals.end());
        if (!std::isfinite(m)) throw NumericError("lppd", "non-finite log density");
        std::vector<double> e(vals.size());
        for (std::size_t c = 0; c < vals.size(); ++c) e[c] = std::exp(vals[c] - m);
        const double s = sorted_pairwise_sum(std::move(e));
        contrib[static_cast<std::size_t>(i)] = std::log(s / static_cast<double>(n_cols)) + m;
    }
    double total = 0.0;
    for (double c : contrib) total += c;
    return total / static_cast<double>(logdens.rows());
}

double lppd(const NetworkSpec& spec, const SampleStore& store, const Dataset& data,
            const LikelihoodSpec& lik) {
    return lppd_from_log_densities(pointwise_log_densities(spec, store, data, lik));
}

double rmse(const NetworkSpec& spec, const SampleStore& store, const Dataset& data,
            const LikelihoodSpec& lik) {
    if (lik.family != Family::kGaussian) throw ShapeError("rmse needs a gaussian likelihood");
    check_store_data(spec, store, data);
    Eigen::MatrixXd mean_f = Eigen::MatrixXd::Zero(data.n(), spec.output_dim);
    for (int k = 0; k < store.n_chains(); ++k)
        for (std::int64_t s = 0; s < store.samples_per_chain(); ++s)
            mean_f += forward_batch(spec, store.sample_weights(spec, k, s), data.X);
    mean_f /= static_cast<double>(store.total_samples());
    return std::sqrt((mean_f - data.y).squaredNorm() /
                     static_cast<double>(data.y.size()));
}

double accuracy(const NetworkSpec& spec, const SampleStore& store, const Dataset& data,
                const LikelihoodSpec& lik) {
    if (lik.family == Family::kGaussian) throw ShapeError("accuracy needs a classification likelihood");
    check_store_data(spec, store, data);
    const int n_classes = lik.family == Family::kBernoulliLogit ? 2 : spec.output_dim;
    Eigen::MatrixXd mean_prob = Eigen::MatrixXd::Zero(data.n(), n_classes);
    for (int k = 0; k < store.n_chains(); ++k)
        for (std::int64_t s = 0; s < store.samples_per_chain(); ++s) {
            const Eigen::MatrixXd f = forward_batch(spec, store.sample_weights(spec, k, s), data.X);
            if (lik.family == Family::kBernoulliLogit) {
                for (int i = 0; i < data.n(); ++i) {
                    const double p1 = 1.0 / (1.0 + std::exp(-f(i, 0)));
                    mean_prob(i, 0) += 1.0 - p1;
                    mean_prob(i, 1) += p1;
                }
            } else {
                for (int i = 0; i < data.n(); ++i) {
                    const double m = f.row(i).maxCoeff();
                    Eigen::RowVectorXd e = (f.row(i).array() - m).exp();
                    mean_prob.row(i) += e / e.sum();
                }
            }
        }
    int correct = 0;
    for (int i = 0; i < data.n(); ++i) {
        Eigen::Index pred;
        mean_prob.row(i).maxCoeff(&pred);
        if (static_cast<int>(pred) == static_cast<int>(data.y(i, 0))) ++correct;
    }
    return static_cast<double>(correct) / data.n();
}

std::vector<CurvePoint> cumulative_lppd(const NetworkSpec& spec, const SampleStore& store,
                                        const Dataset& data, const LikelihoodSpec& lik,
                                        int n_orderings, std::uint64_t seed) {
    if (store.n_chains() < 2) throw ShapeError("cumulative curve needs at least two chains");
    if (n_orderings < 1) throw ShapeError("need at least one ordering");
    const Eigen::MatrixXd logdens = pointwise_log_densities(spec, store, data, lik);
    const int K = store.n_chains();
    const std::int64_t S = store.samples_per_chain();

    Eigen::MatrixXd curve_vals(n_orderings, K);
    for (int r = 0; r < n_orderings; ++r) {
        Rng rng(seed, "eval/orderings", static_cast<std::uint64_t>(r));
        std::vector<int> order(static_cast<std::size_t>(K));
        std::iota(order.begin(), order.end(), 0);
        for (int i = K - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)],
                      order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
        std::vector<int> cols;
        for (int j = 0; j < K; ++j) {
            const int c = order[static_cast<std::size_t>(j)];
            for (std::int64_t s = 0; s < S; ++s) cols.push_back(static_cast<int>(c * S + s));
            curve_vals(r, j) = lppd_from_log_densities(logdens, cols);
        }
    }

    std::vector<CurvePoint> out;
    for (int j = 0; j < K; ++j) {
        CurvePoint pt;
        pt.k = j + 1;
        bool same = true;
        for (int r = 1; r < n_orderings; ++r) same &= curve_vals(r, j) == curve_vals(0, j);
        if (same) {
            pt.lppd_mean = curve_vals(0, j);
            pt.lppd_sd = 0.0;
        } else {
            pt.lppd_mean = curve_vals.col(j).mean();
            pt.lppd_sd = std::sqrt((curve_vals.col(j).array() - pt.lppd_mean).square().sum() /
                                   (n_orderings - 1));
        }
        out.push_back(pt);
    }
    return out;
}

EvalReport evaluate(const NetworkSpec& spec, const SampleStore& store, const Dataset& data,
                    const LikelihoodSpec& lik, int n_orderings, std::uint64_t seed) {
    EvalReport report;
    report.n_chains = store.n_chains();
    report.samples_per_chain = store.samples_per_chain();
    report.n_test = data.n();
    report.lppd = lppd(spec, store, data, lik);
    if (lik.family == Family::kGaussian)
        report.rmse = rmse(spec, store, data, lik);
    else
        report.accuracy = accuracy(spec, store, data, lik);
    if (store.n_chains() >= 2)
        report.curve = cumulative_lppd(spec, store, data, lik, n_orderings, seed);
    else
        report.curve = {CurvePoint{1, report.lppd, 0.0}};
    return report;
}

void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
    os << "k,lppd_mean,lppd_sd\n";
    os << std::setprecision(17);
    for (const auto& pt : curve) os << pt.k << "," << pt.lppd_mean << "," << pt.lppd_sd << "\n";
}

}  // namespace pglab
