#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pglab/config.hpp"
#include "pglab/diagnostics.hpp"
#include "pglab/eval.hpp"
#include "pglab/report.hpp"
#include "pglab/samplers.hpp"
#include "pglab/store.hpp"
#include "pglab/symmetry.hpp"

namespace py = pybind11;
using namespace pglab;

namespace {

py::array_t<double> store_array(const SampleStore& store) {
    const auto K = static_cast<py::ssize_t>(store.n_chains());
    const auto S = static_cast<py::ssize_t>(store.samples_per_chain());
    const auto d = static_cast<py::ssize_t>(store.dim());
    py::array_t<double> out({K, S, d});
    std::copy(store.payload().begin(), store.payload().end(), out.mutable_data());
    return out;
}

SampleStore sample_store(const RunConfig& cfg, int n_threads) {
    const DataSplits splits = build_splits(cfg);
    const PosteriorModel model(cfg.network_spec(), cfg.prior_spec(), cfg.likelihood_spec(),
                               splits.train);
    return run_chains(model, cfg.chain_config(), n_threads, cfg.hash());
}

std::string report_json(const RunConfig& cfg, const SampleStore& store) {
    const DataSplits splits = build_splits(cfg);
    return build_report(cfg, store, splits.train, cfg.sections).dump(2);
}

py::dict evaluate_dict(const RunConfig& cfg, const SampleStore& store, int n_orderings) {
    const DataSplits splits = build_splits(cfg);
    const Dataset& test = splits.test.n() > 0 ? splits.test : splits.train;
    const EvalReport rep = evaluate(cfg.network_spec(), store, test, cfg.likelihood_spec(),
                                    n_orderings, cfg.seed);
    py::dict out;
    out["lppd"] = rep.lppd;
    out["rmse"] = rep.rmse ? py::object(py::float_(*rep.rmse)) : py::none();
    out["accuracy"] = rep.accuracy ? py::object(py::float_(*rep.accuracy)) : py::none();
    py::list ks, means, sds;
    for (const auto& pt : rep.curve) {
        ks.append(pt.k);
        means.append(pt.lppd_mean);
        sds.append(pt.lppd_sd);
    }
    out["curve_k"] = ks;
    out["curve_lppd"] = means;
    out["curve_sd"] = sds;
    out["n_test"] = rep.n_test;
    return out;
}

std::vector<py::array_t<double>> sample_rho(int m_star, int m, std::int64_t n,
                                            std::uint64_t seed) {
    const Assignment asg = Assignment::proportional(m_star, m);
    Rng rng(seed, "python/rho");
    std::vector<Eigen::MatrixXd> groups;
    for (const auto& g : asg.groups()) groups.emplace_back(n, static_cast<int>(g.size()));
    for (std::int64_t t = 0; t < n; ++t) {
        const SimplexCoords coords = sample_manifold_coords(asg, rng);
        for (std::size_t g = 0; g < groups.size(); ++g)
            groups[g].row(t) = coords.rho[g].transpose();
    }
    std::vector<py::array_t<double>> out;
    for (const auto& g : groups) {
        py::array_t<double> arr({static_cast<py::ssize_t>(g.rows()),
                                 static_cast<py::ssize_t>(g.cols())});
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            arr.mutable_data(), g.rows(), g.cols()) = g;
        out.push_back(std::move(arr));
    }
    return out;
}

py::dict trap_dict(int m, int p, double tau, const Eigen::VectorXd& x, std::int64_t n_draws,
                   std::uint64_t seed) {
    const NetworkSpec spec = NetworkSpec::shallow(p, m, 1, Activation::kRelu);
    Rng rng(seed, "python/trap");
    const TrapEstimate est = trap_probability(spec, gaussian_first_layer(m, p, tau), x, n_draws,
                                              rng);
    py::dict out;
    out["estimate"] = est.estimate;
    out["se"] = est.se;
    out["n_draws"] = est.n_draws;
    return out;
}

}  // namespace

PYBIND11_MODULE(_pglab, mod) {
    mod.doc() = "Posterior geometry lab: sampling and symmetry diagnostics for small BNNs";

    py::register_exception<ConfigError>(mod, "ConfigError");
    py::register_exception<ShapeError>(mod, "ShapeError");
    py::register_exception<NumericError>(mod, "NumericError");
    py::register_exception<IoError>(mod, "IoError");

    py::class_<RunConfig>(mod, "Config")
        .def_static("parse", &RunConfig::parse, py::arg("text"))
        .def_static("load", &RunConfig::load, py::arg("path"))
        .def("serialize", &RunConfig::serialize)
        .def_property_readonly("run_id", &RunConfig::run_id)
        .def_property_readonly("seed", [](const RunConfig& c) { return c.seed; })
        .def_property_readonly("dim", [](const RunConfig& c) { return c.network_spec().dim(); });

    py::class_<SampleStore>(mod, "Store")
        .def_static("load", [](const std::string& path) { return SampleStore::load(path); },
                    py::arg("path"))
        .def("save", [](const SampleStore& s, const std::string& path) { s.save(path); },
             py::arg("path"))
        .def_property_readonly("n_chains", &SampleStore::n_chains)
        .def_property_readonly("samples_per_chain", &SampleStore::samples_per_chain)
        .def_property_readonly("dim", &SampleStore::dim)
        .def("samples", &store_array,
             "All draws as a (chains, samples, dim) array copy.");

    mod.def("sample", &sample_store, py::arg("config"), py::arg("n_threads") = 1,
            "Run the configured sampler and return the sample store.");
    mod.def("report", &report_json, py::arg("config"), py::arg("store"),
            "Diagnostics report for the store as a JSON string.");
    mod.def("evaluate", &evaluate_dict, py::arg("config"), py::arg("store"),
            py::arg("n_orderings") = 5,
            "Predictive evaluation on the config's test split (train split when empty).");
    mod.def("sample_rho", &sample_rho, py::arg("m_star"), py::arg("m"), py::arg("n"),
            py::arg("seed") = 0,
            "Simplex reallocation draws, one (n, block size) array per reference unit.");
    mod.def("trap_probability", &trap_dict, py::arg("m"), py::arg("p"), py::arg("tau"),
            py::arg("x"), py::arg("n_draws") = 100000, py::arg("seed") = 0,
            "Monte-Carlo estimate of the all-units-off probability at input x.");
}
