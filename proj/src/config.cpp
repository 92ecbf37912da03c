#include "pglab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "pglab/errors.hpp"
#include "pglab/hash.hpp"
#include "pglab/rng.hpp"

namespace pglab {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    if (trim(value).empty()) return out;
    while (true) {
        const auto comma = value.find(',', pos);
        out.push_back(trim(value.substr(pos, comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Raw entries with line numbers; typed getters mark keys used so leftovers
/// can be rejected as unknown.
class Entries {
public:
    explicit Entries(const std::string& text) {
        std::istringstream in(text);
        std::string raw;
        int line_no = 0;
        while (std::getline(in, raw)) {
            ++line_no;
            const std::string line = trim(raw);
            if (line.empty() || line[0] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError(line_no, "expected `section.key = value`");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (std::count(key.begin(), key.end(), '.') != 1 || key.front() == '.' ||
                key.back() == '.')
                throw ConfigError(line_no, "key must be `section.key`, got `" + key + "`");
            if (entries_.count(key)) throw ConfigError(line_no, "duplicate key `" + key + "`");
            entries_[key] = {value, line_no};
        }
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    std::string str(const std::string& key, const std::string& fallback) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        return it->second.value;
    }

    bool flag(const std::string& key, bool fallback) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        if (it->second.value == "true") return true;
        if (it->second.value == "false") return false;
        throw ConfigError(it->second.line, "`" + key + "` must be true or false");
    }

    std::int64_t integer(const std::string& key, std::int64_t fallback) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        return to_int(it->second.value, key, it->second.line);
    }

    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        std::uint64_t v = 0;
        const std::string& s = it->second.value;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
            throw ConfigError(it->second.line, "`" + key + "` must be a nonnegative integer");
        return v;
    }

    double real(const std::string& key, double fallback) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        return to_real(it->second.value, key, it->second.line);
    }

    std::vector<double> reals(const std::string& key, std::vector<double> fallback) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        std::vector<double> out;
        for (const auto& part : split_list(it->second.value))
            out.push_back(to_real(part, key, it->second.line));
        return out;
    }

    std::vector<int> ints(const std::string& key, std::vector<int> fallback) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        std::vector<int> out;
        for (const auto& part : split_list(it->second.value))
            out.push_back(static_cast<int>(to_int(part, key, it->second.line)));
        return out;
    }

    std::vector<std::pair<int, int>> int_pairs(const std::string& key) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return {};
        it->second.used = true;
        std::vector<std::pair<int, int>> out;
        for (const auto& part : split_list(it->second.value)) {
            const auto colon = part.find(':');
            if (colon == std::string::npos)
                throw ConfigError(it->second.line, "`" + key + "` entries must be `i:j`");
            out.emplace_back(static_cast<int>(to_int(part.substr(0, colon), key, it->second.line)),
                             static_cast<int>(to_int(part.substr(colon + 1), key, it->second.line)));
        }
        return out;
    }

    int line_of(const std::string& key) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? 0 : it->second.line;
    }

    void finish() const {
        for (const auto& [key, entry] : entries_) {
            if (!entry.used) throw ConfigError(entry.line, "unknown key `" + key + "`");
        }
    }

private:
    struct Entry {
        std::string value;
        int line = 0;
        mutable bool used = false;
    };

    static std::int64_t to_int(const std::string& s, const std::string& key, int line) {
        std::int64_t v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
            throw ConfigError(line, "`" + key + "` must be an integer, got `" + s + "`");
        return v;
    }

    static double to_real(const std::string& s, const std::string& key, int line) {
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
            throw ConfigError(line, "`" + key + "` must be a number, got `" + s + "`");
        return v;
    }

    std::map<std::string, Entry> entries_;
};

template <typename T>
T pick(Entries& e, const std::string& key, const std::string& fallback,
       const std::vector<std::pair<std::string, T>>& options) {
    const std::string v = e.str(key, fallback);
    for (const auto& [name, val] : options)
        if (v == name) return val;
    std::string allowed;
    for (const auto& [name, val] : options) allowed += (allowed.empty() ? "" : ", ") + name;
    throw ConfigError(e.line_of(key), "`" + key + "` must be one of: " + allowed);
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
    Entries e(text);
    RunConfig cfg;

    cfg.input_dim = static_cast<int>(e.integer("network.input_dim", cfg.input_dim));
    cfg.widths = e.ints("network.widths", cfg.widths);
    cfg.output_dim = static_cast<int>(e.integer("network.output_dim", cfg.output_dim));
    cfg.activation = pick<Activation>(e, "network.activation", "relu",
                                      {{"relu", Activation::kRelu}, {"identity", Activation::kIdentity}});
    cfg.bias = e.flag("network.bias", cfg.bias);

    cfg.tau = e.reals("prior.tau", cfg.tau);
    cfg.bias_prior = pick<BiasPrior>(e, "prior.bias_prior", "gaussian",
                                     {{"gaussian", BiasPrior::kGaussian}, {"flat", BiasPrior::kFlat}});
    cfg.bias_tau = e.real("prior.bias_tau", cfg.bias_tau);

    cfg.family = pick<Family>(e, "likelihood.family", "gaussian",
                              {{"gaussian", Family::kGaussian},
                               {"bernoulli", Family::kBernoulliLogit},
                               {"categorical", Family::kCategoricalLogit}});
    cfg.sigma2 = e.real("likelihood.sigma2", cfg.sigma2);

    cfg.source = pick<DataSource>(e, "data.source", "synthetic",
                                  {{"synthetic", DataSource::kSynthetic},
                                   {"csv", DataSource::kCsv},
                                   {"none", DataSource::kNone}});
    cfg.csv_path = e.str("data.path", cfg.csv_path);
    cfg.target_column = e.str("data.target", cfg.target_column);
    cfg.beta = e.real("data.beta", cfg.beta);
    cfg.noise_sd = e.real("data.noise_sd", cfg.noise_sd);
    cfg.n_data = static_cast<int>(e.integer("data.n", cfg.n_data));
    {
        const auto fr = e.reals("data.split", {cfg.split[0], cfg.split[1], cfg.split[2]});
        if (fr.size() != 3) throw ConfigError(e.line_of("data.split"), "`data.split` needs three fractions");
        for (int i = 0; i < 3; ++i) cfg.split[static_cast<std::size_t>(i)] = fr[static_cast<std::size_t>(i)];
        if (fr[0] < 0 || fr[1] < 0 || fr[2] < 0 || std::fabs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9)
            throw ConfigError(e.line_of("data.split"), "`data.split` fractions must sum to 1");
    }
    cfg.standardize = e.flag("data.standardize", cfg.standardize);

    cfg.sampler = pick<SamplerKind>(e, "sampler.kind", "hmc",
                                    {{"hmc", SamplerKind::kHmc}, {"mala", SamplerKind::kMala}});
    cfg.chains = static_cast<int>(e.integer("sampler.chains", cfg.chains));
    cfg.warmup = static_cast<int>(e.integer("sampler.warmup", cfg.warmup));
    cfg.samples = e.integer("sampler.samples", cfg.samples);
    cfg.thinning = static_cast<int>(e.integer("sampler.thinning", cfg.thinning));
    cfg.step_size = e.real("sampler.step_size", cfg.step_size);
    cfg.leapfrog_steps = static_cast<int>(e.integer("sampler.leapfrog_steps", cfg.leapfrog_steps));
    cfg.init = pick<InitKind>(e, "sampler.init", "prior",
                              {{"prior", InitKind::kPriorDraw}, {"map", InitKind::kMapWarmstart}});
    cfg.map_steps = static_cast<int>(e.integer("sampler.map_steps", cfg.map_steps));
    cfg.map_learning_rate = e.real("sampler.map_learning_rate", cfg.map_learning_rate);
    cfg.adapt = e.flag("sampler.adapt", cfg.adapt);
    cfg.target_accept = e.real("sampler.target_accept", cfg.target_accept);

    {
        std::string joined;
        for (const auto& s : cfg.sections) joined += (joined.empty() ? "" : ",") + s;
        const auto parts = split_list(e.str("diagnostics.sections", joined));
        static const std::vector<std::string> known = {"balancedness", "dirichlet", "moments",
                                                       "conformity",   "covariance", "marginals"};
        for (const auto& p : parts)
            if (std::find(known.begin(), known.end(), p) == known.end())
                throw ConfigError(e.line_of("diagnostics.sections"), "unknown section `" + p + "`");
        cfg.sections.assign(parts.begin(), parts.end());
    }
    cfg.grid_bins = static_cast<int>(e.integer("diagnostics.grid_bins", cfg.grid_bins));
    cfg.grid_lo = e.real("diagnostics.grid_lo", cfg.grid_lo);
    cfg.grid_hi = e.real("diagnostics.grid_hi", cfg.grid_hi);
    cfg.grid_singles = e.ints("diagnostics.grid_singles", cfg.grid_singles);
    cfg.grid_pairs = e.int_pairs("diagnostics.grid_pairs");
    cfg.cov_subset = e.ints("diagnostics.cov_subset", cfg.cov_subset);

    cfg.seed = e.unsigned_integer("run.seed", cfg.seed);

    e.finish();

    if (cfg.widths.empty()) throw ConfigError("`network.widths` must not be empty");
    try {
        cfg.network_spec().validate();
        cfg.prior_spec().validate(cfg.network_spec());
        cfg.likelihood_spec().validate();
        cfg.chain_config().validate();
    } catch (const std::exception& ex) {
        throw ConfigError(ex.what());
    }
    if (cfg.source == DataSource::kCsv && cfg.csv_path.empty())
        throw ConfigError("`data.path` is required when data.source = csv");
    if (cfg.grid_bins < 1) throw ConfigError("`diagnostics.grid_bins` must be >= 1");
    if (!(cfg.grid_hi > cfg.grid_lo)) throw ConfigError("`diagnostics.grid_lo/hi` must be increasing");
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string RunConfig::serialize() const {
    std::ostringstream out;
    const auto join_ints = [](const std::vector<int>& v) {
        std::string s;
        for (int x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
        return s;
    };
    const auto join_reals = [](const std::vector<double>& v) {
        std::string s;
        for (double x : v) s += (s.empty() ? "" : ",") + format_double(x);
        return s;
    };

    out << "network.input_dim = " << input_dim << "\n";
    out << "network.widths = " << join_ints(widths) << "\n";
    out << "network.output_dim = " << output_dim << "\n";
    out << "network.activation = " << (activation == Activation::kRelu ? "relu" : "identity") << "\n";
    out << "network.bias = " << (bias ? "true" : "false") << "\n";

    out << "prior.tau = " << join_reals(tau) << "\n";
    out << "prior.bias_prior = " << (bias_prior == BiasPrior::kGaussian ? "gaussian" : "flat") << "\n";
    out << "prior.bias_tau = " << format_double(bias_tau) << "\n";

    out << "likelihood.family = "
        << (family == Family::kGaussian ? "gaussian"
                                        : family == Family::kBernoulliLogit ? "bernoulli" : "categorical")
        << "\n";
    out << "likelihood.sigma2 = " << format_double(sigma2) << "\n";

    out << "data.source = "
        << (source == DataSource::kSynthetic ? "synthetic" : source == DataSource::kCsv ? "csv" : "none")
        << "\n";
    out << "data.path = " << csv_path << "\n";
    out << "data.target = " << target_column << "\n";
    out << "data.beta = " << format_double(beta) << "\n";
    out << "data.noise_sd = " << format_double(noise_sd) << "\n";
    out << "data.n = " << n_data << "\n";
    out << "data.split = " << format_double(split[0]) << "," << format_double(split[1]) << ","
        << format_double(split[2]) << "\n";
    out << "data.standardize = " << (standardize ? "true" : "false") << "\n";

    out << "sampler.kind = " << (sampler == SamplerKind::kHmc ? "hmc" : "mala") << "\n";
    out << "sampler.chains = " << chains << "\n";
    out << "sampler.warmup = " << warmup << "\n";
    out << "sampler.samples = " << samples << "\n";
    out << "sampler.thinning = " << thinning << "\n";
    out << "sampler.step_size = " << format_double(step_size) << "\n";
    out << "sampler.leapfrog_steps = " << leapfrog_steps << "\n";
    out << "sampler.init = " << (init == InitKind::kPriorDraw ? "prior" : "map") << "\n";
    out << "sampler.map_steps = " << map_steps << "\n";
    out << "sampler.map_learning_rate = " << format_double(map_learning_rate) << "\n";
    out << "sampler.adapt = " << (adapt ? "true" : "false") << "\n";
    out << "sampler.target_accept = " << format_double(target_accept) << "\n";

    {
        std::string joined;
        for (const auto& s : sections) joined += (joined.empty() ? "" : ",") + s;
        out << "diagnostics.sections = " << joined << "\n";
    }
    out << "diagnostics.grid_bins = " << grid_bins << "\n";
    out << "diagnostics.grid_lo = " << format_double(grid_lo) << "\n";
    out << "diagnostics.grid_hi = " << format_double(grid_hi) << "\n";
    out << "diagnostics.grid_singles = " << join_ints(grid_singles) << "\n";
    {
        std::string joined;
        for (const auto& [a, b] : grid_pairs)
            joined += (joined.empty() ? "" : ",") + std::to_string(a) + ":" + std::to_string(b);
        out << "diagnostics.grid_pairs = " << joined << "\n";
    }
    out << "diagnostics.cov_subset = " << join_ints(cov_subset) << "\n";

    out << "run.seed = " << seed << "\n";
    return out.str();
}

std::array<std::uint8_t, 32> RunConfig::hash() const { return Sha256::digest(serialize()); }

std::string RunConfig::run_id() const {
    const auto h = hash();
    static const char* hex = "0123456789abcdef";
    std::string id;
    for (int i = 0; i < 6; ++i) {
        id += hex[h[static_cast<std::size_t>(i)] >> 4];
        id += hex[h[static_cast<std::size_t>(i)] & 0xf];
    }
    return id;
}

NetworkSpec RunConfig::network_spec() const {
    NetworkSpec spec;
    spec.input_dim = input_dim;
    spec.widths = widths;
    spec.output_dim = output_dim;
    spec.activation = activation;
    spec.layer_bias.assign(static_cast<std::size_t>(spec.n_affine()), bias);
    return spec;
}

PriorSpec RunConfig::prior_spec() const {
    PriorSpec prior;
    prior.layer_tau = tau;
    prior.bias_prior = bias_prior;
    prior.bias_tau = bias_tau;
    return prior;
}

LikelihoodSpec RunConfig::likelihood_spec() const {
    LikelihoodSpec lik;
    lik.family = family;
    lik.sigma2 = sigma2;
    return lik;
}

ChainConfig RunConfig::chain_config() const {
    ChainConfig cc;
    cc.n_chains = chains;
    cc.warmup_steps = warmup;
    cc.n_samples = samples;
    cc.thinning = thinning;
    cc.step_size = step_size;
    cc.leapfrog_steps = leapfrog_steps;
    cc.map_steps = map_steps;
    cc.map_learning_rate = map_learning_rate;
    cc.init = init;
    cc.kind = sampler;
    cc.seed = seed;
    cc.adapt_step_size = adapt;
    cc.target_accept = target_accept;
    return cc;
}

Dataset load_csv(const std::string& path, const std::string& target_column) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read data file " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty data file " + path);
    const auto headers = split_list(line);
    int target_idx = -1;
    for (std::size_t j = 0; j < headers.size(); ++j)
        if (headers[j] == target_column) target_idx = static_cast<int>(j);
    if (target_idx < 0) throw IoError("target column `" + target_column + "` not found in " + path);

    std::vector<std::vector<double>> rows;
    int row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (trim(line).empty()) continue;
        const auto cells = split_list(line);
        if (cells.size() != headers.size())
            throw IoError("row " + std::to_string(row_no) + ": expected " +
                          std::to_string(headers.size()) + " cells, got " +
                          std::to_string(cells.size()));
        std::vector<double> vals;
        for (std::size_t j = 0; j < cells.size(); ++j) {
            double v = 0.0;
            const auto res = std::from_chars(cells[j].data(), cells[j].data() + cells[j].size(), v);
            if (res.ec != std::errc{} || res.ptr != cells[j].data() + cells[j].size())
                throw IoError("non-numeric cell at (row " + std::to_string(row_no) + ", column " +
                              std::to_string(j + 1) + ") in " + path);
            vals.push_back(v);
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw IoError("no data rows in " + path);

    const int n = static_cast<int>(rows.size());
    const int p = static_cast<int>(headers.size()) - 1;
    Dataset data;
    data.X.resize(n, p);
    data.y.resize(n, 1);
    for (int i = 0; i < n; ++i) {
        int col = 0;
        for (int j = 0; j < static_cast<int>(headers.size()); ++j) {
            if (j == target_idx)
                data.y(i, 0) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            else
                data.X(i, col++) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    return data;
}

namespace {

Dataset take_rows(const Dataset& full, const std::vector<int>& idx, int lo, int hi) {
    Dataset out;
    out.X.resize(hi - lo, full.X.cols());
    out.y.resize(hi - lo, full.y.cols());
    for (int i = lo; i < hi; ++i) {
        out.X.row(i - lo) = full.X.row(idx[static_cast<std::size_t>(i)]);
        out.y.row(i - lo) = full.y.row(idx[static_cast<std::size_t>(i)]);
    }
    return out;
}

void standardize_splits(DataSplits& splits, bool scale_targets) {
    const auto& X = splits.train.X;
    Standardization st;
    st.active = true;
    st.x_mean = X.colwise().mean();
    st.x_scale.resize(X.cols());
    for (int j = 0; j < X.cols(); ++j) {
        const double var =
            (X.col(j).array() - st.x_mean[j]).square().sum() / std::max<double>(1, X.rows() - 1);
        st.x_scale[j] = std::sqrt(var) > 0 ? std::sqrt(var) : 1.0;
    }
    if (scale_targets) {
        st.y_mean = splits.train.y.colwise().mean();
        st.y_scale.resize(splits.train.y.cols());
        for (int j = 0; j < splits.train.y.cols(); ++j) {
            const double var = (splits.train.y.col(j).array() - st.y_mean[j]).square().sum() /
                               std::max<double>(1, splits.train.y.rows() - 1);
            st.y_scale[j] = std::sqrt(var) > 0 ? std::sqrt(var) : 1.0;
        }
    } else {
        st.y_mean = Eigen::VectorXd::Zero(splits.train.y.cols());
        st.y_scale = Eigen::VectorXd::Ones(splits.train.y.cols());
    }

    for (Dataset* d : {&splits.train, &splits.val, &splits.test}) {
        for (int j = 0; j < d->X.cols(); ++j)
            d->X.col(j) = (d->X.col(j).array() - st.x_mean[j]) / st.x_scale[j];
        if (scale_targets)
            for (int j = 0; j < d->y.cols(); ++j)
                d->y.col(j) = (d->y.col(j).array() - st.y_mean[j]) / st.y_scale[j];
        d->standardization = st;
    }
}

}  // namespace

DataSplits build_splits(const RunConfig& cfg) {
    Dataset full;
    if (cfg.source == DataSource::kNone) {
        full.X.resize(0, cfg.input_dim);
        full.y.resize(0, cfg.family == Family::kGaussian ? cfg.output_dim : 1);
        return DataSplits{full, full, full};
    }
    if (cfg.source == DataSource::kSynthetic) {
        SyntheticLinearTask task;
        task.beta = cfg.beta;
        task.noise_sd = cfg.noise_sd;
        task.n = cfg.n_data;
        task.seed = cfg.seed;
        full = task.generate();
    } else {
        full = load_csv(cfg.csv_path, cfg.target_column);
    }

    const int n = full.n();
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    if (cfg.source == DataSource::kCsv) {
        Rng rng(cfg.seed, "data/shuffle");
        for (int i = n - 1; i > 0; --i)
            std::swap(idx[static_cast<std::size_t>(i)],
                      idx[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    }

    const int n_train = static_cast<int>(std::llround(n * cfg.split[0]));
    const int n_val = static_cast<int>(std::llround(n * cfg.split[1]));
    if (n_train < 0 || n_val < 0 || n_train + n_val > n)
        throw ConfigError("split fractions leave no room for the test split");

    DataSplits splits;
    splits.train = take_rows(full, idx, 0, n_train);
    splits.val = take_rows(full, idx, n_train, n_train + n_val);
    splits.test = take_rows(full, idx, n_train + n_val, n);
    if (cfg.standardize) standardize_splits(splits, cfg.family == Family::kGaussian);
    return splits;
}

}  // namespace pglab
