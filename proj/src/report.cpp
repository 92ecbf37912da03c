#include "pglab/report.hpp"

#include <algorithm>
#include <cmath>

#include "pglab/geometry.hpp"

namespace pglab {

using nlohmann::json;

nlohmann::json to_json(const Statistic& s) {
    json j;
    j["value"] = s.value;
    if (s.tol > 0.0)
        j["tol"] = s.tol;
    else
        j["se"] = s.se;
    j["target"] = s.target;
    j["pass"] = s.pass;
    return j;
}

nlohmann::json to_json(const stats::KsResult& ks, double p_threshold) {
    json j;
    j["statistic"] = json{{"value", ks.statistic}};
    j["p_value"] = json{{"value", ks.p_value}, {"tol", p_threshold}, {"pass", ks.p_value > p_threshold}};
    return j;
}

namespace {

bool wants(const std::vector<std::string>& sections, const std::string& name) {
    return std::find(sections.begin(), sections.end(), name) != sections.end();
}

json not_applicable(const std::string& reason) {
    return json{{"not_applicable", true}, {"reason", reason}};
}

json balancedness_section(const RunConfig& cfg, const SampleStore& store, bool& pass) {
    const NetworkSpec spec = cfg.network_spec();
    const PriorSpec prior = cfg.prior_spec();
    const auto layer_report = balancedness_report(store, spec, prior);
    const auto unit_report = neuronwise_balance(store, spec, prior);

    json j;
    for (const auto& lb : layer_report.layers)
        j["layers"].push_back(json{{"layer", lb.layer},
                                   {"d_weights", lb.d_weights},
                                   {"b_hat", to_json(lb.b_hat)}});
    j["pairs"] = json::array();
    for (const auto& pb : layer_report.pairs)
        j["pairs"].push_back(json{{"layer", pb.layer},
                                  {"residual", to_json(pb.residual)},
                                  {"frob_diff", to_json(pb.frob_diff)}});
    j["units"] = json::array();
    for (const auto& ub : unit_report.units)
        j["units"].push_back(
            json{{"layer", ub.layer}, {"unit", ub.unit}, {"residual", to_json(ub.residual)}});
    pass = layer_report.all_pass && unit_report.all_pass;
    j["all_pass"] = pass;
    return j;
}

json dirichlet_section(const DirichletGof& gof) {
    json j;
    j["alpha"] = gof.alpha;
    j["k"] = gof.k;
    for (const auto& ks : gof.marginals) j["marginals"].push_back(to_json(ks));
    j["min_p"] = json{{"value", gof.min_p}, {"tol", 0.01}, {"pass", gof.min_p > 0.01}};
    j["pairwise_cov"] = to_json(gof.pairwise_cov);
    j["all_pass"] = gof.pass;
    return j;
}

json scaling_json(const ScalingReport& scaling) {
    json j;
    for (const auto& p : scaling.points)
        j["points"].push_back(json{
            {"m_total", p.m_total},
            {"mean_sqrt_rho",
             json{{"value", p.mean_sqrt_rho.mean}, {"se", p.mean_sqrt_rho.se}, {"pass", true}}},
            {"within_cov",
             json{{"value", p.within_cov.mean}, {"se", p.within_cov.se}, {"pass", true}}}});
    j["mean_slope"] = json{{"value", scaling.mean_fit.slope}, {"se", scaling.mean_fit.slope_se}};
    j["cov_slope"] = json{{"value", scaling.cov_fit.slope}, {"se", scaling.cov_fit.slope_se}};
    return j;
}

bool is_one_m_one(const NetworkSpec& spec) {
    if (spec.n_hidden() != 1 || spec.input_dim != 1 || spec.output_dim != 1) return false;
    for (int l = 0; l < spec.n_affine(); ++l)
        if (spec.has_bias(l)) return false;
    return true;
}

json moments_section(const RunConfig& cfg, const SampleStore& store, const ReportExtras& extras,
                     bool& pass) {
    const NetworkSpec spec = cfg.network_spec();
    if (!is_one_m_one(spec)) return not_applicable("needs a bias-free 1-M-1 network");
    const auto cm = constrained_moments(store, spec, cfg.beta, cfg.tau[0]);
    json j;
    j["mean_w"] = to_json(cm.mean_w);
    j["var_w"] = to_json(cm.var_w);
    j["cov_pair"] = to_json(cm.cov_pair);
    for (const auto& uc : cm.unit_cov) j["unit_cov"].push_back(to_json(uc));
    if (extras.scaling != nullptr) j["scaling"] = scaling_json(*extras.scaling);
    pass = cm.mean_w.pass && cm.cov_pair.pass;
    j["all_pass"] = pass;
    return j;
}

json conformity_section(const RunConfig& cfg, const SampleStore& store, const Dataset& train,
                        bool& pass) {
    if (train.n() == 0) return not_applicable("needs training data");
    const NetworkSpec spec = cfg.network_spec();
    const PriorSpec prior = cfg.prior_spec();
    for (int l = 1; l < spec.n_affine(); ++l)
        if (prior.tau(l) != prior.tau(0)) return not_applicable("needs a single prior scale");
    if (cfg.family != Family::kGaussian) return not_applicable("needs a gaussian likelihood");

    Eigen::VectorXd w_mean = Eigen::VectorXd::Zero(store.dim());
    for (int k = 0; k < store.n_chains(); ++k)
        for (std::int64_t s = 0; s < store.samples_per_chain(); ++s) w_mean += store.sample(k, s);
    w_mean /= static_cast<double>(store.total_samples());

    const WeightVector w_ref = WeightVector::from_flat(spec, w_mean);
    const Eigen::MatrixXd J = batch_jacobian(spec, w_ref, train.X);
    const JacobianBundle bundle = kernel_basis(J);
    json j;
    j["kernel_dim"] = bundle.kernel_dim();
    if (bundle.kernel_dim() == 0) {
        j["not_applicable"] = true;
        j["reason"] = "jacobian has a trivial kernel at the posterior mean";
        return j;
    }

    const double tau = prior.tau(0);
    const double lambda = prior.lambda(0);
    const auto restriction = gauss_newton_restriction(J, 1.0 / cfg.sigma2, lambda);
    j["restriction_deviation"] =
        json{{"value", restriction.max_deviation},
             {"tol", 1e-8 * std::max(1.0, restriction.tau2)},
             {"target", 0.0},
             {"pass", true}};

    const Eigen::MatrixXd projected = project_samples(store, w_mean, bundle.Z);
    const auto conf = prior_conformity_test(projected, tau * tau, store.n_chains());
    for (const auto& vr : conf.variance_ratio) j["variance_ratio"].push_back(to_json(vr));
    for (const auto& ks : conf.normality) j["normality"].push_back(to_json(ks));
    pass = conf.all_pass;
    j["all_pass"] = pass;
    return j;
}

json covariance_section(const RunConfig& cfg, const SampleStore& store) {
    std::vector<int> subset = cfg.cov_subset;
    if (subset.empty())
        for (int i = 0; i < std::min(store.dim(), 6); ++i) subset.push_back(i);

    const int q = static_cast<int>(subset.size());
    const int K = store.n_chains();
    const std::int64_t S = store.samples_per_chain();

    // per-chain moment estimates batched into a mean and between-chain SE
    std::vector<Eigen::MatrixXd> chain_cov;
    for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd sel(S, q);
        for (std::int64_t s = 0; s < S; ++s) {
            const auto w = store.sample(k, s);
            for (int j = 0; j < q; ++j) sel(s, j) = w[subset[static_cast<std::size_t>(j)]];
        }
        const Eigen::RowVectorXd mu = sel.colwise().mean();
        sel.rowwise() -= mu;
        chain_cov.push_back(sel.transpose() * sel / static_cast<double>(std::max<std::int64_t>(1, S - 1)));
    }

    json entries = json::array();
    for (int a = 0; a < q; ++a)
        for (int b = a; b < q; ++b) {
            std::vector<double> vals;
            for (const auto& c : chain_cov) vals.push_back(c(a, b));
            const auto ms = stats::chain_batched(vals);
            entries.push_back(json{{"i", subset[static_cast<std::size_t>(a)]},
                                   {"j", subset[static_cast<std::size_t>(b)]},
                                   {"cov", json{{"value", ms.mean}, {"se", ms.se}, {"pass", true}}}});
        }

    const auto pooled = sample_covariance(store, subset);
    json j;
    j["subset"] = subset;
    j["entries"] = entries;
    j["zero_variance"] = pooled.zero_variance;
    j["all_pass"] = true;
    return j;
}

json marginals_section(const RunConfig& cfg, const SampleStore& store) {
    std::vector<int> singles = cfg.grid_singles;
    if (singles.empty() && cfg.grid_pairs.empty())
        for (int i = 0; i < std::min(store.dim(), 4); ++i) singles.push_back(i);

    const auto grids = marginal_grids(store, singles, cfg.grid_pairs, cfg.grid_bins, cfg.grid_lo,
                                      cfg.grid_hi);
    const double width = (cfg.grid_hi - cfg.grid_lo) / cfg.grid_bins;

    json j;
    j["bins"] = cfg.grid_bins;
    j["lo"] = cfg.grid_lo;
    j["hi"] = cfg.grid_hi;
    j["singles"] = json::array();
    for (const auto& g : grids.singles) {
        double integral = 0.0;
        for (double d : g.density) integral += d * width;
        j["singles"].push_back(json{
            {"index", g.index},
            {"n_in", g.n_in},
            {"integral", json{{"value", integral}, {"tol", 1e-9}, {"target", 1.0},
                              {"pass", g.n_in == 0 || std::fabs(integral - 1.0) <= 1e-9}}},
            {"file", "marginal_" + std::to_string(g.index) + ".csv"}});
    }
    j["pairs"] = json::array();
    for (const auto& g : grids.pairs) {
        double integral = 0.0;
        for (double d : g.density) integral += d * width * width;
        j["pairs"].push_back(json{
            {"index_x", g.index_x},
            {"index_y", g.index_y},
            {"n_in", g.n_in},
            {"integral", json{{"value", integral}, {"tol", 1e-9}, {"target", 1.0},
                              {"pass", g.n_in == 0 || std::fabs(integral - 1.0) <= 1e-9}}},
            {"file", "marginal_" + std::to_string(g.index_x) + "_" + std::to_string(g.index_y) +
                         ".csv"}});
    }
    j["all_pass"] = true;
    return j;
}

}  // namespace

nlohmann::json build_report(const RunConfig& cfg, const SampleStore& store, const Dataset& train,
                            const std::vector<std::string>& sections, const ReportExtras& extras) {
    json report;
    bool all_pass = true;

    if (wants(sections, "balancedness")) {
        bool pass = true;
        report["balancedness"] = balancedness_section(cfg, store, pass);
        all_pass &= pass;
    }
    if (wants(sections, "dirichlet")) {
        if (extras.dirichlet != nullptr) {
            report["dirichlet"] = dirichlet_section(*extras.dirichlet);
            all_pass &= extras.dirichlet->pass;
        } else {
            report["dirichlet"] = not_applicable("run is not a manifold resampling");
        }
    }
    if (wants(sections, "moments")) {
        bool pass = true;
        report["moments"] = moments_section(cfg, store, extras, pass);
        if (!report["moments"].value("not_applicable", false)) all_pass &= pass;
    }
    if (wants(sections, "conformity")) {
        bool pass = true;
        report["conformity"] = conformity_section(cfg, store, train, pass);
        if (!report["conformity"].value("not_applicable", false)) all_pass &= pass;
    }
    if (wants(sections, "covariance")) report["covariance"] = covariance_section(cfg, store);
    if (wants(sections, "marginals")) report["marginals"] = marginals_section(cfg, store);

    json meta;
    meta["run_id"] = cfg.run_id();
    meta["seed"] = cfg.seed;
    meta["n_chains"] = store.n_chains();
    meta["samples_per_chain"] = store.samples_per_chain();
    meta["dim"] = store.dim();
    meta["sampler"] = cfg.sampler == SamplerKind::kHmc ? "hmc" : "mala";
    meta["all_pass"] = all_pass;
    report["meta"] = meta;
    return report;
}

bool report_all_pass(const nlohmann::json& report) {
    return report.at("meta").value("all_pass", false);
}

}  // namespace pglab
