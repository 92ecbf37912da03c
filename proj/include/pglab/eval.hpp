#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "pglab/model.hpp"
#include "pglab/network.hpp"
#include "pglab/store.hpp"

namespace pglab {

/// Order-exact reduction: sorts ascending, pads with leading zeros up to a
/// power of two, then adds strictly pairwise. The result is invariant to the
/// input order, and duplicating every element yields bitwise twice the sum,
/// which makes the predictive mixture below invariant under sample
/// duplication at the bit level.
double sorted_pairwise_sum(std::vector<double> values);

/// n_test x (K*S) matrix of log p(y_i | f(x_i; w)), columns chain-major in
/// store order.
Eigen::MatrixXd pointwise_log_densities(const NetworkSpec& spec, const SampleStore& store,
                                        const Dataset& data, const LikelihoodSpec& lik);

/// Mixture log predictive density averaged over test points, restricted to
/// the given sample columns (empty = all).
double lppd_from_log_densities(const Eigen::MatrixXd& logdens,
                               const std::vector<int>& columns = {});

double lppd(const NetworkSpec& spec, const SampleStore& store, const Dataset& data,
            const LikelihoodSpec& lik);

/// Root mean squared error of the posterior-mean prediction on the scale the
/// dataset is stored in (standardized when standardization is active).
double rmse(const NetworkSpec& spec, const SampleStore& store, const Dataset& data,
            const LikelihoodSpec& lik);

/// Classification accuracy of the argmax of the posterior-mean class
/// probabilities.
double accuracy(const NetworkSpec& spec, const SampleStore& store, const Dataset& data,
                const LikelihoodSpec& lik);

struct CurvePoint {
    int k = 0;
    double lppd_mean = 0.0;
    double lppd_sd = 0.0;
};

/// LPPD of the first j chains, j = 1..K, averaged over random chain
/// orderings drawn from the derived stream ("eval/orderings", r).
std::vector<CurvePoint> cumulative_lppd(const NetworkSpec& spec, const SampleStore& store,
                                        const Dataset& data, const LikelihoodSpec& lik,
                                        int n_orderings, std::uint64_t seed);

struct EvalReport {
    double lppd = 0.0;
    std::optional<double> rmse;
    std::optional<double> accuracy;
    std::vector<CurvePoint> curve;
    int n_chains = 0;
    std::int64_t samples_per_chain = 0;
    int n_test = 0;
};

EvalReport evaluate(const NetworkSpec& spec, const SampleStore& store, const Dataset& data,
                    const LikelihoodSpec& lik, int n_orderings = 5, std::uint64_t seed = 0);

void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve);

}  // namespace pglab
