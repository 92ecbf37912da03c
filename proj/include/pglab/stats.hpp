#pragma once

#include <functional>
#include <span>
#include <vector>

namespace pglab::stats {

/// Pairwise (tree) sum: splits at n/2 recursively. Deterministic for a fixed
/// element order, and summing a block concatenated with itself yields exactly
/// twice the block sum.
double tree_sum(std::span<const double> values);

double mean(std::span<const double> values);
double variance(std::span<const double> values);  // unbiased, n-1

/// Mean of per-chain means with a between-chain standard error, the
/// Monte-Carlo error model used throughout the diagnostics: chains are
/// independent, so se = sd(chain means) / sqrt(K).
struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    int n_chains = 0;
};
MeanSe chain_batched(std::span<const double> chain_means);

/// Regularized incomplete beta I_x(a,b) by Lentz continued fraction,
/// converged to ~1e-14 relative. I_{0.5}(1,1) == 0.5 exactly.
double reg_inc_beta(double a, double b, double x);

inline double beta_cdf(double a, double b, double x) { return reg_inc_beta(a, b, x); }

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2).
double kolmogorov_q(double lambda);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// One-sample KS test of `sorted` (ascending) against a continuous CDF.
/// p-value uses the asymptotic distribution with the Stephens small-n factor.
KsResult ks_test_sorted(std::span<const double> sorted,
                        const std::function<double(double)>& cdf);

double normal_cdf(double x);
double normal_quantile(double p);

/// Least-squares line y = intercept + slope * x with the usual slope
/// standard error from residual variance (needs >= 3 points).
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace pglab::stats
