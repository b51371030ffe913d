// Experiment configuration: a small INI-style text format (sections of
// key = value lines, '#' comments), deterministic canonicalization, and an
// FNV-1a content hash that stamps every output file.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fexp/inference.hpp"
#include "fexp/spectral.hpp"

namespace fexp {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    // [truth]
    std::string truth_kind = "finite";   // finite | powerlaw
    double d0 = 0.0;
    double truth_beta = 2.0;
    double L0 = 16.0;
    std::vector<double> theta{0.0};

    // [prior]
    PriorKind prior_kind = PriorKind::A;
    double t = 0.05;
    std::optional<double> L;             // empty: designed radius
    ThetaFamily theta_family = ThetaFamily::UniformSobolev;
    double gauss_coef = 1.0;
    double gauss_alpha = 1.0;
    double laplace_a = 1.0;
    KLaw k_law = KLaw::Poisson;
    double k_law_param = 2.0;
    double k_A = 1.0;
    std::optional<double> k_B;           // empty: largest valid on the grid

    // [run]
    std::int64_t n = 1024;
    std::vector<std::int64_t> n_grid;
    std::int64_t replicates = 1;
    std::int64_t iters = 4000;
    std::uint64_t seed = 1;
    int jobs = 0;
    bool whittle = false;
    std::int64_t k_trunc = 4096;

    // [output]
    std::string out_dir = "out";

    TruthSpec make_truth() const {
        if (truth_kind == "powerlaw")
            return make_powerlaw_truth(d0, truth_beta, L0);
        if (truth_kind == "finite")
            return make_finite_truth(d0, theta, truth_beta, L0);
        throw ConfigError("truth.kind must be 'finite' or 'powerlaw'");
    }

    double resolve_k_B(const std::vector<std::int64_t>& grid) const {
        if (k_B)
            return *k_B;
        return choose_k_B(grid.empty() ? std::vector<std::int64_t>{n} : grid,
                          truth_beta, k_A);
    }

    double resolve_L(const TruthSpec& truth, std::int64_t at_n) const {
        return L ? *L : design_sobolev_radius(truth, at_n, k_A, t);
    }

    PriorConfig make_prior(const TruthSpec& truth, std::int64_t at_n) const {
        PriorConfig cfg;
        cfg.kind = prior_kind;
        cfg.t = t;
        cfg.beta = truth_beta;
        cfg.L = resolve_L(truth, at_n);
        cfg.theta_family = theta_family;
        cfg.gauss_coef = gauss_coef;
        cfg.gauss_alpha = gauss_alpha;
        cfg.laplace_a = laplace_a;
        cfg.k_law = k_law;
        cfg.k_law_param = k_law_param;
        cfg.k_A = k_A;
        cfg.k_B = resolve_k_B(n_grid);
        return cfg;
    }

    // config + replicate index => unique, platform-independent seed
    std::uint64_t replicate_seed(std::int64_t replicate) const {
        return seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(replicate + 1);
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_doubles(const std::string& s) {
    std::istringstream is(s);
    std::vector<double> out;
    double v;
    while (is >> v)
        out.push_back(v);
    return out;
}

} // namespace detail

using ConfigMap = std::map<std::string, std::string>;   // "section.key" -> value

inline ConfigMap parse_ini(const std::string& text) {
    ConfigMap map;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (section.empty() || key.empty())
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": key outside a section");
        map[section + "." + key] = value;
    }
    return map;
}

inline ExperimentConfig config_from_map(const ConfigMap& map) {
    ExperimentConfig cfg;
    ConfigMap remaining = map;
    const auto take = [&](const std::string& key) -> std::optional<std::string> {
        auto it = remaining.find(key);
        if (it == remaining.end())
            return std::nullopt;
        std::string v = it->second;
        remaining.erase(it);
        return v;
    };
    const auto as_double = [&](const std::string& key, double def) {
        const auto v = take(key);
        if (!v)
            return def;
        try {
            return std::stod(*v);
        } catch (...) {
            throw ConfigError("config: " + key + " must be a number");
        }
    };
    const auto as_int = [&](const std::string& key, std::int64_t def) {
        const auto v = take(key);
        if (!v)
            return def;
        try {
            return static_cast<std::int64_t>(std::stoll(*v));
        } catch (...) {
            throw ConfigError("config: " + key + " must be an integer");
        }
    };

    if (auto v = take("truth.kind"))
        cfg.truth_kind = *v;
    cfg.d0 = as_double("truth.d0", cfg.d0);
    cfg.truth_beta = as_double("truth.beta", cfg.truth_beta);
    cfg.L0 = as_double("truth.L0", cfg.L0);
    if (auto v = take("truth.theta"))
        cfg.theta = detail::parse_doubles(*v);

    if (auto v = take("prior.kind")) {
        if (*v == "A")
            cfg.prior_kind = PriorKind::A;
        else if (*v == "B")
            cfg.prior_kind = PriorKind::B;
        else if (*v == "C")
            cfg.prior_kind = PriorKind::C;
        else
            throw ConfigError("config: prior.kind must be A, B or C");
    }
    cfg.t = as_double("prior.t", cfg.t);
    if (auto v = take("prior.L")) {
        if (*v != "auto") {
            try {
                cfg.L = std::stod(*v);
            } catch (...) {
                throw ConfigError("config: prior.L must be a number or 'auto'");
            }
        }
    }
    if (auto v = take("prior.theta_family")) {
        if (*v == "uniform-sobolev")
            cfg.theta_family = ThetaFamily::UniformSobolev;
        else if (*v == "truncated-gaussian")
            cfg.theta_family = ThetaFamily::TruncatedGaussian;
        else if (*v == "truncated-laplace")
            cfg.theta_family = ThetaFamily::TruncatedLaplace;
        else
            throw ConfigError("config: unknown prior.theta_family");
    }
    cfg.gauss_coef = as_double("prior.gauss_coef", cfg.gauss_coef);
    cfg.gauss_alpha = as_double("prior.gauss_alpha", cfg.gauss_alpha);
    cfg.laplace_a = as_double("prior.laplace_a", cfg.laplace_a);
    if (auto v = take("prior.k_law")) {
        if (*v == "poisson")
            cfg.k_law = KLaw::Poisson;
        else if (*v == "geometric")
            cfg.k_law = KLaw::Geometric;
        else
            throw ConfigError("config: prior.k_law must be poisson or geometric");
    }
    cfg.k_law_param = as_double("prior.k_law_param", cfg.k_law_param);
    cfg.k_A = as_double("prior.k_A", cfg.k_A);
    if (auto v = take("prior.k_B")) {
        if (*v != "auto") {
            try {
                cfg.k_B = std::stod(*v);
            } catch (...) {
                throw ConfigError("config: prior.k_B must be a number or 'auto'");
            }
        }
    }

    cfg.n = as_int("run.n", cfg.n);
    if (auto v = take("run.n_grid")) {
        for (double x : detail::parse_doubles(*v))
            cfg.n_grid.push_back(static_cast<std::int64_t>(x));
    }
    cfg.replicates = as_int("run.replicates", cfg.replicates);
    cfg.iters = as_int("run.iters", cfg.iters);
    cfg.seed = static_cast<std::uint64_t>(as_int("run.seed", 1));
    cfg.jobs = static_cast<int>(as_int("run.jobs", 0));
    if (auto v = take("run.whittle"))
        cfg.whittle = (*v == "true" || *v == "1" || *v == "yes");
    cfg.k_trunc = as_int("run.k_trunc", cfg.k_trunc);

    if (auto v = take("output.dir"))
        cfg.out_dir = *v;

    if (!remaining.empty())
        throw ConfigError("config: unknown key '" + remaining.begin()->first + "'");
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_map(parse_ini(ss.str()));
}

// Deterministic canonical form; the basis of the config hash.
inline std::string canonical_config(const ExperimentConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "truth.kind=" << c.truth_kind << "\ntruth.d0=" << c.d0
       << "\ntruth.beta=" << c.truth_beta << "\ntruth.L0=" << c.L0
       << "\ntruth.theta=";
    for (double v : c.theta)
        os << v << " ";
    os << "\nprior.kind="
       << (c.prior_kind == PriorKind::A ? "A" : c.prior_kind == PriorKind::B ? "B" : "C")
       << "\nprior.t=" << c.t << "\nprior.L=" << (c.L ? std::to_string(*c.L) : "auto")
       << "\nprior.theta_family=" << static_cast<int>(c.theta_family)
       << "\nprior.gauss_coef=" << c.gauss_coef
       << "\nprior.gauss_alpha=" << c.gauss_alpha
       << "\nprior.laplace_a=" << c.laplace_a
       << "\nprior.k_law=" << static_cast<int>(c.k_law)
       << "\nprior.k_law_param=" << c.k_law_param << "\nprior.k_A=" << c.k_A
       << "\nprior.k_B=" << (c.k_B ? std::to_string(*c.k_B) : "auto")
       << "\nrun.n=" << c.n << "\nrun.n_grid=";
    for (auto v : c.n_grid)
        os << v << " ";
    os << "\nrun.replicates=" << c.replicates << "\nrun.iters=" << c.iters
       << "\nrun.seed=" << c.seed << "\nrun.whittle=" << c.whittle
       << "\nrun.k_trunc=" << c.k_trunc << "\nrng=" << kRngName << "\n";
    return os.str();
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
    std::ostringstream os;
    os << std::hex << fnv1a(canonical_config(c));
    return os.str();
}

inline std::string truth_hash(const ExperimentConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << c.truth_kind << "|" << c.d0 << "|" << c.truth_beta << "|" << c.L0 << "|";
    for (double v : c.theta)
        os << v << ",";
    std::ostringstream hx;
    hx << std::hex << fnv1a(os.str());
    return hx.str();
}

} // namespace fexp
