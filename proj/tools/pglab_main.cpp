#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "pglab/config.hpp"
#include "pglab/diagnostics.hpp"
#include "pglab/errors.hpp"
#include "pglab/eval.hpp"
#include "pglab/experiments.hpp"
#include "pglab/geometry.hpp"
#include "pglab/report.hpp"
#include "pglab/samplers.hpp"
#include "pglab/store.hpp"
#include "pglab/symmetry.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pglab;

namespace {

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("PGLAB_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << body;
}

RunConfig load_run_config(const fs::path& run_dir) {
    const fs::path cfg_path = run_dir / "config.txt";
    if (!fs::exists(cfg_path)) throw IoError("no config.txt under " + run_dir.string());
    return RunConfig::load(cfg_path.string());
}

SampleStore load_run_store(const fs::path& run_dir) {
    const fs::path store_path = run_dir / "samples.bnns";
    if (!fs::exists(store_path)) throw IoError("no samples.bnns under " + run_dir.string());
    return SampleStore::load(store_path);
}

void print_chain_summary(const SampleStore& store) {
    std::cout << "chain  accept  init\n";
    const auto& meta = store.chain_meta();
    for (std::size_t k = 0; k < meta.size(); ++k)
        std::cout << std::setw(5) << k << "  " << std::fixed << std::setprecision(3)
                  << meta[k].accept_rate << std::defaultfloat << "  " << meta[k].init_kind
                  << (meta[k].failed ? "  FAILED" : "") << "\n";
}

json chains_json(const SampleStore& store) {
    json arr = json::array();
    for (const auto& m : store.chain_meta())
        arr.push_back(json{{"accept_rate", m.accept_rate},
                           {"warmup_steps", m.warmup_steps},
                           {"init", m.init_kind},
                           {"failed", m.failed}});
    return arr;
}

void write_marginal_csvs(const RunConfig& cfg, const SampleStore& store, const fs::path& dir) {
    std::vector<int> singles = cfg.grid_singles;
    if (singles.empty() && cfg.grid_pairs.empty())
        for (int i = 0; i < std::min(store.dim(), 4); ++i) singles.push_back(i);
    const auto grids = marginal_grids(store, singles, cfg.grid_pairs, cfg.grid_bins, cfg.grid_lo,
                                      cfg.grid_hi);
    for (const auto& g : grids.singles) {
        std::ofstream out(dir / ("marginal_" + std::to_string(g.index) + ".csv"));
        write_grid_csv(out, g);
    }
    for (const auto& g : grids.pairs) {
        std::ofstream out(dir / ("marginal_" + std::to_string(g.index_x) + "_" +
                                 std::to_string(g.index_y) + ".csv"));
        write_grid_csv(out, g);
    }
}

// ------------------------------------------------------------------ commands

int cmd_sample(const std::string& config_path, const std::string& out_base,
               std::optional<std::uint64_t> seed, int threads) {
    RunConfig cfg = RunConfig::load(config_path);
    if (seed) cfg.seed = *seed;

    const DataSplits splits = build_splits(cfg);
    const PosteriorModel model(cfg.network_spec(), cfg.prior_spec(), cfg.likelihood_spec(),
                               splits.train);
    const SampleStore store = run_chains(model, cfg.chain_config(), threads, cfg.hash());

    const fs::path run_dir = fs::path(out_base) / cfg.run_id();
    fs::create_directories(run_dir);
    store.save(run_dir / "samples.bnns");
    write_text(run_dir / "config.txt", cfg.serialize());
    write_text(run_dir / "chains.json", chains_json(store).dump(2) + "\n");

    std::cout << "run " << cfg.run_id() << " -> " << run_dir.string() << "\n";
    std::cout << "samples: " << store.n_chains() << " x " << store.samples_per_chain() << " x "
              << store.dim() << "\n";
    print_chain_summary(store);

    for (const auto& m : store.chain_meta())
        if (m.failed) {
            std::cerr << "one or more chains failed\n";
            return static_cast<int>(ExitCode::kNumeric);
        }
    return static_cast<int>(ExitCode::kOk);
}

int cmd_diagnose(const std::string& run_dir_arg, const std::vector<std::string>& sections,
                 int threads) {
    (void)threads;
    const fs::path run_dir(run_dir_arg);
    const RunConfig cfg = load_run_config(run_dir);
    const SampleStore store = load_run_store(run_dir);
    const DataSplits splits = build_splits(cfg);

    const auto& selected = sections.empty() ? cfg.sections : sections;
    const json report = build_report(cfg, store, splits.train, selected);
    write_text(run_dir / "report.json", report.dump(2) + "\n");
    if (std::find(selected.begin(), selected.end(), "marginals") != selected.end())
        write_marginal_csvs(cfg, store, run_dir);

    const bool ok = report_all_pass(report);
    std::cout << "report " << (run_dir / "report.json").string() << "\n";
    for (const auto& [name, section] : report.items()) {
        if (name == "meta") continue;
        std::string verdict = "n/a";
        if (section.is_object() && !section.contains("not_applicable"))
            verdict = section.value("all_pass", true) ? "pass" : "FAIL";
        std::cout << "  " << name << ": " << verdict << "\n";
    }
    std::cout << "all_pass: " << (ok ? "true" : "false") << "\n";
    return ok ? static_cast<int>(ExitCode::kOk) : static_cast<int>(ExitCode::kDiagnosticsFailed);
}

int cmd_eval(const std::string& run_dir_arg, int orderings) {
    const fs::path run_dir(run_dir_arg);
    const RunConfig cfg = load_run_config(run_dir);
    const SampleStore store = load_run_store(run_dir);
    const DataSplits splits = build_splits(cfg);
    if (splits.test.n() == 0) throw ConfigError("run has no test split to evaluate");

    const EvalReport rep = evaluate(cfg.network_spec(), store, splits.test,
                                    cfg.likelihood_spec(), orderings, cfg.seed);

    json j;
    j["lppd"] = rep.lppd;
    if (rep.rmse) j["rmse"] = *rep.rmse;
    if (rep.accuracy) j["accuracy"] = *rep.accuracy;
    j["n_test"] = rep.n_test;
    j["n_chains"] = rep.n_chains;
    j["samples_per_chain"] = rep.samples_per_chain;
    write_text(run_dir / "eval.json", j.dump(2) + "\n");

    std::ostringstream csv;
    write_curve_csv(csv, rep.curve);
    write_text(run_dir / "lppd_curve.csv", csv.str());

    std::cout << "lppd " << std::setprecision(6) << rep.lppd;
    if (rep.rmse) std::cout << "  rmse " << *rep.rmse;
    if (rep.accuracy) std::cout << "  accuracy " << *rep.accuracy;
    std::cout << "  (n_test " << rep.n_test << ")\n";
    std::cout << "curve " << (run_dir / "lppd_curve.csv").string() << "\n";
    return static_cast<int>(ExitCode::kOk);
}

int cmd_inspect(const std::string& run_dir_arg) {
    const fs::path run_dir(run_dir_arg);
    const RunConfig cfg = load_run_config(run_dir);
    const SampleStore store = load_run_store(run_dir);

    std::cout << "run id    " << cfg.run_id() << "\n";
    std::cout << "seed      " << store.seed() << "\n";
    std::cout << "chains    " << store.n_chains() << "\n";
    std::cout << "samples   " << store.samples_per_chain() << " per chain\n";
    std::cout << "dim       " << store.dim() << "\n";
    std::cout << "layers    ";
    for (const auto& s : store.shapes())
        std::cout << s.rows << "x" << s.cols << (s.has_bias ? "+b " : " ");
    std::cout << "\n";
    std::cout << "hash      ";
    std::cout << std::hex << std::setfill('0');
    for (const auto b : store.config_hash()) std::cout << std::setw(2) << int(b);
    std::cout << std::dec << std::setfill(' ') << "\n";

    const fs::path chains = run_dir / "chains.json";
    if (fs::exists(chains)) {
        std::ifstream in(chains);
        json arr = json::parse(in);
        std::cout << "accept    ";
        for (const auto& c : arr) std::cout << std::setprecision(3) << c.value("accept_rate", 0.0)
                                            << " ";
        std::cout << "\n";
    }
    return static_cast<int>(ExitCode::kOk);
}

// --------------------------------------------------------------------- demos

void demo_onemone(const fs::path& dir, std::uint64_t seed, int threads) {
    std::cout << "tau      M   pooled var   cov(w1,w2)\n";
    for (const double tau : {0.25, 1.0}) {
        for (const int m : {1, 4, 16}) {
            const auto run = experiments::run_one_m_one(m, tau, 1.0, 0.05, 0.0025, 64, 6, 1500,
                                                        300, seed + m, threads);
            const auto cm = constrained_moments(run.store, run.config.network_spec(), 1.0, tau);
            const auto grids = marginal_grids(run.store, {}, {{0, m}}, 60, -3.0 * tau - 1.0,
                                              3.0 * tau + 1.0);
            std::ostringstream name;
            name << "onemone_tau" << tau << "_m" << m << ".csv";
            std::ofstream out(dir / name.str());
            write_grid_csv(out, grids.pairs[0]);
            std::cout << std::setw(4) << tau << "  " << std::setw(3) << m << "   "
                      << std::setw(10) << std::setprecision(4) << cm.var_w.value << "   "
                      << std::setw(10) << cm.cov_pair.value << "\n";
        }
    }
    std::cout << "pair grids written under " << dir.string() << "\n";
}

void demo_kernel_projection(const fs::path& dir, std::uint64_t seed, int threads) {
    RunConfig cfg;
    cfg.input_dim = 1;
    cfg.widths = {2};
    cfg.output_dim = 1;
    cfg.activation = Activation::kRelu;
    cfg.bias = false;
    cfg.tau = {1.0};
    cfg.sigma2 = 0.04;
    cfg.source = DataSource::kSynthetic;
    cfg.beta = 1.0;
    cfg.noise_sd = 0.2;
    cfg.n_data = 32;
    cfg.split = {1.0, 0.0, 0.0};
    cfg.chains = 6;
    cfg.warmup = 400;
    cfg.samples = 2000;
    cfg.seed = seed;

    const DataSplits splits = build_splits(cfg);
    const PosteriorModel model(cfg.network_spec(), cfg.prior_spec(), cfg.likelihood_spec(),
                               splits.train);
    const SampleStore store = run_chains(model, cfg.chain_config(), threads, cfg.hash());

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(store.dim());
    for (int k = 0; k < store.n_chains(); ++k)
        for (std::int64_t s = 0; s < store.samples_per_chain(); ++s) mean += store.sample(k, s);
    mean /= static_cast<double>(store.total_samples());

    const NetworkSpec spec = cfg.network_spec();
    const WeightVector w_ref = WeightVector::from_flat(spec, mean);
    const Eigen::MatrixXd J = batch_jacobian(spec, w_ref, splits.train.X);
    const JacobianBundle bundle = kernel_basis(J);
    std::cout << "jacobian rank " << bundle.rank << ", kernel dim " << bundle.kernel_dim()
              << "\n";
    if (bundle.kernel_dim() == 0) {
        std::cout << "no flat directions at the posterior mean\n";
        return;
    }

    const auto gn = gauss_newton_restriction(J, 1.0 / cfg.sigma2, cfg.prior_spec().lambda(0));
    std::cout << "gauss-newton restriction deviation " << std::setprecision(3)
              << gn.max_deviation << " (tau^2 = " << gn.tau2 << ")\n";

    const Eigen::MatrixXd proj = project_samples(store, mean, bundle.Z);
    std::ofstream out(dir / "kernel_coords.csv");
    out << std::setprecision(17);
    for (int c = 0; c < proj.cols(); ++c) out << (c ? "," : "") << "z" << c;
    out << "\n";
    for (Eigen::Index r = 0; r < proj.rows(); ++r) {
        for (int c = 0; c < proj.cols(); ++c) out << (c ? "," : "") << proj(r, c);
        out << "\n";
    }
    for (int c = 0; c < proj.cols(); ++c) {
        const auto col = proj.col(c);
        const double mu = col.mean();
        const double var = (col.array() - mu).square().sum() / double(proj.rows() - 1);
        std::cout << "projected coordinate " << c << ": var " << std::setprecision(4) << var
                  << " (prior tau^2 = 1)\n";
    }
    std::cout << "coordinates written to " << (dir / "kernel_coords.csv").string() << "\n";
}

void demo_manifold_dirichlet(const fs::path& dir, std::uint64_t seed) {
    NetworkSpec ref = NetworkSpec::shallow(2, 2, 1, Activation::kRelu);
    WeightVector ref_w = WeightVector::zeros(ref);
    ref_w.layers[0].W << 1.0, 0.5, -0.7, 1.2;
    ref_w.layers[1].W << 1.5, -1.1;
    const Assignment asg = Assignment::proportional(2, 8);
    const std::int64_t n = 20000;

    Rng rng(seed, "demo/manifold");
    std::vector<Eigen::MatrixXd> rho(2, Eigen::MatrixXd(n, 4));
    for (std::int64_t t = 0; t < n; ++t) {
        const ManifoldSample ms = sample_manifold(ref, ref_w, asg, rng);
        const SimplexCoords coords = extract_rho(ms.spec, ms.w, asg);
        rho[0].row(t) = coords.rho[0].transpose();
        rho[1].row(t) = coords.rho[1].transpose();
    }

    // tube-limit law alpha = 1/2 against the naive parameter-count guess (p+1)/2
    const double p_alpha = (ref.input_dim + 1) / 2.0;
    std::ofstream out(dir / "dirichlet_gof.csv");
    out << "block,alpha,min_ks_p,pairwise_cov,cov_target,cov_se\n";
    std::cout << "block  alpha  min KS p   pairwise cov (target)\n";
    for (int g = 0; g < 2; ++g) {
        for (const double alpha : {0.5, p_alpha}) {
            const DirichletGof gof = dirichlet_gof(rho[static_cast<std::size_t>(g)], alpha);
            out << g << "," << alpha << "," << gof.min_p << "," << gof.pairwise_cov.value << ","
                << gof.pairwise_cov.target << "," << gof.pairwise_cov.se << "\n";
            std::cout << std::setw(5) << g << "  " << std::setw(5) << alpha << "  "
                      << std::setw(8) << std::setprecision(4) << gof.min_p << "   "
                      << std::setw(9) << gof.pairwise_cov.value << " (" << std::setprecision(3)
                      << gof.pairwise_cov.target << ")\n";
        }
    }
    std::cout << "table written to " << (dir / "dirichlet_gof.csv").string() << "\n";
}

void demo_balancedness(const fs::path& dir, std::uint64_t seed, int threads) {
    NetworkSpec net;
    net.input_dim = 3;
    net.widths = {8, 8};
    net.output_dim = 1;
    net.activation = Activation::kRelu;
    net.layer_bias.assign(3, false);
    const PriorSpec prior = PriorSpec::isotropic(1.0);
    Dataset empty;
    empty.X.resize(0, 3);
    empty.y.resize(0, 1);
    const PosteriorModel model(net, prior, LikelihoodSpec{}, empty);

    ChainConfig cc;
    cc.n_chains = 8;
    cc.warmup_steps = 200;
    cc.n_samples = 2000;
    cc.step_size = 0.2;
    cc.seed = seed;
    const SampleStore store = run_chains(model, cc, threads);
    const auto report = balancedness_report(store, net, prior);

    std::ofstream out(dir / "balance.csv");
    out << "layer,b_hat,se\n";
    std::cout << "layer   B_hat      se\n";
    for (const auto& lb : report.layers) {
        out << lb.layer << "," << lb.b_hat.value << "," << lb.b_hat.se << "\n";
        std::cout << std::setw(5) << lb.layer << "  " << std::setw(8) << std::setprecision(4)
                  << lb.b_hat.value << "  " << std::setw(8) << lb.b_hat.se << "\n";
    }
    std::cout << "per-layer table written to " << (dir / "balance.csv").string() << "\n";
}

void demo_trap(const fs::path& dir, std::uint64_t seed) {
    Rng rng(seed, "demo/trap");
    Eigen::VectorXd x(3);
    x << 0.8, -0.5, 1.3;
    std::ofstream out(dir / "trap.csv");
    out << "m,estimate,target,se\n";
    std::cout << "  M   estimate   2^-M      se\n";
    for (const int m : {1, 2, 3, 5}) {
        const NetworkSpec spec = NetworkSpec::shallow(3, m, 1, Activation::kRelu);
        const auto est = trap_probability(spec, gaussian_first_layer(m, 3, 1.0), x, 100000, rng);
        const double target = std::pow(2.0, -m);
        out << m << "," << est.estimate << "," << target << "," << est.se << "\n";
        std::cout << std::setw(3) << m << "   " << std::setw(8) << std::setprecision(5)
                  << est.estimate << "   " << std::setw(8) << target << "  " << std::setw(8)
                  << est.se << "\n";
    }
    std::cout << "table written to " << (dir / "trap.csv").string() << "\n";
}

int cmd_demo(const std::string& name, const std::string& out_base, std::uint64_t seed,
             int threads) {
    static const std::vector<std::string> known = {"onemone", "kernel-projection",
                                                   "manifold-dirichlet", "balancedness", "trap"};
    if (std::find(known.begin(), known.end(), name) == known.end()) {
        std::cerr << "unknown demo `" << name << "`; available:";
        for (const auto& k : known) std::cerr << " " << k;
        std::cerr << "\n";
        return static_cast<int>(ExitCode::kConfig);
    }
    const fs::path dir = fs::path(out_base) / name;
    fs::create_directories(dir);
    if (name == "onemone") demo_onemone(dir, seed, threads);
    else if (name == "kernel-projection") demo_kernel_projection(dir, seed, threads);
    else if (name == "manifold-dirichlet") demo_manifold_dirichlet(dir, seed);
    else if (name == "balancedness") demo_balancedness(dir, seed, threads);
    else demo_trap(dir, seed);
    return static_cast<int>(ExitCode::kOk);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Posterior geometry lab for small Bayesian neural networks"};
    app.require_subcommand(1);

    std::string config_path, run_dir, sections_csv, demo_name;
    std::optional<std::uint64_t> seed_flag;
    std::uint64_t demo_seed = 0;
    int threads_flag = 0;
    int orderings = 5;

    auto* sample = app.add_subcommand("sample", "Run the configured sampler into a run directory");
    sample->add_option("--config", config_path, "Run configuration file")->required();
    sample->add_option("--run-dir", run_dir, "Base directory for run output")->default_val("runs");
    sample->add_option("--seed", seed_flag, "Override the config seed");
    sample->add_option("--threads", threads_flag, "Worker threads (PGLAB_THREADS fallback)");

    auto* diagnose = app.add_subcommand("diagnose", "Write report.json for a finished run");
    diagnose->add_option("--run-dir", run_dir, "Run directory with samples.bnns")->required();
    diagnose->add_option("--sections", sections_csv,
                         "Comma list overriding the config's diagnostics sections");
    diagnose->add_option("--threads", threads_flag, "Worker threads (PGLAB_THREADS fallback)");

    auto* eval_cmd = app.add_subcommand("eval", "Predictive evaluation on the run's test split");
    eval_cmd->add_option("--run-dir", run_dir, "Run directory with samples.bnns")->required();
    eval_cmd->add_option("--orderings", orderings, "Chain orderings for the cumulative curve");

    auto* demo = app.add_subcommand("demo", "Self-contained desk-scale experiment");
    demo->add_option("name", demo_name, "onemone | kernel-projection | manifold-dirichlet | "
                                        "balancedness | trap")->required();
    demo->add_option("--run-dir", run_dir, "Base directory for demo output")->default_val("demos");
    demo->add_option("--seed", demo_seed, "Demo seed");
    demo->add_option("--threads", threads_flag, "Worker threads (PGLAB_THREADS fallback)");

    auto* inspect = app.add_subcommand("inspect", "Print the header of a stored run");
    inspect->add_option("--run-dir", run_dir, "Run directory with samples.bnns")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
    }

    const int threads = resolve_threads(threads_flag);
    try {
        if (sample->parsed()) return cmd_sample(config_path, run_dir, seed_flag, threads);
        if (diagnose->parsed()) {
            std::vector<std::string> sections;
            std::istringstream ss(sections_csv);
            for (std::string tok; std::getline(ss, tok, ',');)
                if (!tok.empty()) sections.push_back(tok);
            return cmd_diagnose(run_dir, sections, threads);
        }
        if (eval_cmd->parsed()) return cmd_eval(run_dir, orderings);
        if (demo->parsed()) return cmd_demo(demo_name, run_dir, demo_seed, threads);
        return cmd_inspect(run_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kConfig);
    } catch (const ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kConfig);
    } catch (const SymmetryError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kConfig);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kNumeric);
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kIo);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kNumeric);
    }
}
