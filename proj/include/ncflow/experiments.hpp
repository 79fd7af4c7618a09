#pragma once

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncflow.hpp"
#include "sieve_cache.hpp"

namespace ncflow {

using json = nlohmann::ordered_json;

inline constexpr int kConfigSchemaVersion = 1;

/// Raised for configuration problems; the CLI maps it to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 0;
    std::uint64_t n_max = 1'000'000;
    std::vector<std::uint64_t> checkpoints;  // empty -> geometric grid up to n_max
    unsigned workers = 1;
    std::string out = ".";
    json params = json::object();
};

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"sieve",   "decay",          "matrix-flow", "prop31",
                                                   "quantize", "car-demo",      "counterexample",
                                                   "pure-point", "free-clt",    "bsz-check"};
    return names;
}

/// Accepted parameters and their defaults per experiment.
inline json default_params(const std::string& experiment) {
    const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
    if (experiment == "sieve") return json::object();
    if (experiment == "decay") return {{"flow", "rotation"}, {"theta", golden}, {"dim", 8}};
    if (experiment == "matrix-flow") return {{"dim", 8}};
    if (experiment == "prop31")
        return {{"ks", {2, 4, 8, 16}}, {"d", 2}, {"N", 1000}, {"instances", 5}, {"modulus", 1}, {"residue", 0}};
    if (experiment == "quantize") return {{"dim", 8}, {"eps", 0.05}, {"N", 100}};
    if (experiment == "car-demo") return {{"d", 4}, {"samples", 20}};
    if (experiment == "counterexample") return {{"L", 10000}};
    if (experiment == "pure-point") return {{"d", 6}, {"terms", 3}};
    if (experiment == "free-clt") return {{"q", 10}, {"p_max", 8}};
    if (experiment == "bsz-check")
        return {{"flow", "rotation"}, {"theta", golden}, {"epsilon", 0.25}, {"M", 10000}, {"N", 100000},
                {"prime_cap", 200}};
    throw UsageError("unknown experiment '" + experiment + "'");
}

inline std::string canonical_experiment(const std::string& name) {
    if (name == "mertens") return "sieve";
    for (const auto& n : experiment_names())
        if (n == name) return n;
    throw UsageError("unknown experiment '" + name + "'");
}

inline json to_json(const ExperimentConfig& c) {
    json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["experiment"] = c.experiment;
    j["seed"] = c.seed;
    j["n_max"] = c.n_max;
    j["checkpoints"] = c.checkpoints;
    j["workers"] = c.workers;
    j["out"] = c.out;
    j["params"] = c.params;
    return j;
}

/// Strict parse: unknown top-level or parameter fields are rejected; missing
/// parameters are filled from the defaults.
inline ExperimentConfig config_from_json(const json& j) {
    static const std::set<std::string> known = {"schema_version", "experiment", "seed", "n_max",
                                                "checkpoints",    "workers",    "out",  "params"};
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw UsageError("unknown config field '" + k + "'");
    if (j.value("schema_version", kConfigSchemaVersion) != kConfigSchemaVersion)
        throw UsageError("unsupported schema_version");
    if (!j.contains("experiment")) throw UsageError("config lacks 'experiment'");

    ExperimentConfig c;
    try {
        c.experiment = canonical_experiment(j.at("experiment").get<std::string>());
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("n_max")) c.n_max = j.at("n_max").get<std::uint64_t>();
        if (j.contains("checkpoints")) c.checkpoints = j.at("checkpoints").get<std::vector<std::uint64_t>>();
        if (j.contains("workers")) c.workers = j.at("workers").get<unsigned>();
        if (j.contains("out")) c.out = j.at("out").get<std::string>();
    } catch (const json::exception& ex) {
        throw UsageError(std::string("config type error: ") + ex.what());
    }
    c.params = default_params(c.experiment);
    if (j.contains("params")) {
        if (!j.at("params").is_object()) throw UsageError("'params' must be an object");
        for (const auto& [k, v] : j.at("params").items()) {
            if (!c.params.contains(k))
                throw UsageError("unknown parameter '" + k + "' for experiment " + c.experiment);
            if (c.params[k].is_number() != v.is_number() || c.params[k].is_string() != v.is_string() ||
                c.params[k].is_array() != v.is_array())
                throw UsageError("parameter '" + k + "' has the wrong type");
            c.params[k] = v;
        }
    }
    return c;
}

namespace detail {

inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string series_csv(const AverageSeries& s) {
    std::ostringstream os;
    os << "N,re,im,abs,running_bound\n";
    for (std::size_t i = 0; i < s.checkpoints.size(); ++i)
        os << s.checkpoints[i] << ',' << fmt17(s.values[i].real()) << ',' << fmt17(s.values[i].imag()) << ','
           << fmt17(std::abs(s.values[i])) << ',' << fmt17(s.running_bound[i]) << '\n';
    return os.str();
}

inline json fit_json(const DecayFit& f) {
    return {{"C", f.C},
            {"h", std::isfinite(f.h) ? json(f.h) : json("inf")},
            {"r_squared", f.r_squared},
            {"points_used", f.points_used},
            {"zeros_dropped", f.zeros_dropped},
            {"exact_zero_series", f.exact_zero_series}};
}

inline std::vector<std::uint64_t> resolve_checkpoints(const ExperimentConfig& c, std::uint64_t limit) {
    std::vector<std::uint64_t> cps = c.checkpoints;
    if (cps.empty()) {
        for (auto n : geometric_checkpoints(3.0, std::log10(static_cast<double>(limit)) + 1e-9, 0.5))
            if (n <= limit) cps.push_back(n);
        if (cps.empty() || cps.back() != limit) cps.push_back(limit);
    }
    for (auto n : cps)
        if (n > limit) throw UsageError("checkpoint " + std::to_string(n) + " exceeds " + std::to_string(limit));
    return cps;
}

template <typename T>
T param(const ExperimentConfig& c, const char* key) {
    try {
        return c.params.at(key).get<T>();
    } catch (const json::exception& ex) {
        throw UsageError(std::string("parameter '") + key + "': " + ex.what());
    }
}

/// Random Hermitian symbol, generic angles and a sum of normal-ordered degree-4 monomials.
struct PurePointInstance {
    std::vector<double> angles;
    Symbol symbol;
    CARPolynomial observable;
};

inline PurePointInstance pure_point_instance(int d, int terms, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> angles(d);
    for (auto& a : angles) a = u(rng);
    std::vector<CARMonomial> monos;
    for (int t = 0; t < terms; ++t) {
        const complex c = std::polar(1.0 / terms, 2.0 * std::numbers::pi * u(rng));
        monos.push_back(random_normal_monomial(d, 2, 2, seed + 100 + t, c));
    }
    return {angles, Symbol(random_positive_contraction(d, seed + 1)), CARPolynomial(std::move(monos))};
}

}  // namespace detail

struct ExperimentOutput {
    std::string csv;
    json summary = json::object();
};

/// Runs one experiment; deterministic in (config, seed).
inline ExperimentOutput run_experiment(const ExperimentConfig& c) {
    using namespace detail;
    ExperimentOutput out;
    const std::string& e = c.experiment;

    if (e == "sieve") {
        const auto table = load_or_build_table(c.n_max);
        const auto cps = resolve_checkpoints(c, c.n_max);
        const auto ms = mertens_series(table, cps);
        std::ostringstream os;
        os << "N,mertens_over_N,squarefree_density\n";
        for (const auto& [N, v] : ms) os << N << ',' << fmt17(v) << ',' << fmt17(squarefree_density(table, N)) << '\n';
        out.csv = os.str();
        out.summary["primes_up_to_n_max"] = table.primes().size();
        return out;
    }

    if (e == "decay" || e == "matrix-flow" || e == "pure-point") {
        const auto table = load_or_build_table(c.n_max);
        const auto cps = resolve_checkpoints(c, c.n_max);
        Flow flow;
        std::string kind = e == "decay" ? param<std::string>(c, "flow") : (e == "matrix-flow" ? "ad" : "pure-point");
        if (kind == "rotation") {
            flow = rotation_flow(param<double>(c, "theta"));
        } else if (kind == "ad") {
            const int dim = param<int>(c, "dim");
            if (dim < 1) throw UsageError("dim must be >= 1");
            flow = ad_flow(haar_unitary(dim, c.seed), random_contraction(dim, c.seed + 2), random_density(dim, c.seed + 1));
        } else if (kind == "pure-point") {
            const int d = e == "pure-point" ? param<int>(c, "d") : param<int>(c, "dim");
            const int terms = e == "pure-point" ? param<int>(c, "terms") : 3;
            if (d < 1 || terms < 1) throw UsageError("d and terms must be >= 1");
            auto inst = pure_point_instance(d, terms, c.seed);
            flow = pure_point_flow(inst.angles, inst.observable, inst.symbol);
        } else {
            throw UsageError("unknown flow kind '" + kind + "'");
        }
        const auto series = average_series(flow, table, cps, c.workers);
        out.csv = series_csv(series);
        out.summary["flow"] = flow.label;
        out.summary["declared_bound"] = flow.declared_bound;
        if (cps.size() >= 3 && cps.front() >= 3) out.summary["decay_fit"] = fit_json(decay_fit(series));
        return out;
    }

    if (e == "prop31") {
        const auto ks = param<std::vector<int>>(c, "ks");
        const int d = param<int>(c, "d");
        const auto N = param<std::uint64_t>(c, "N");
        const int instances = param<int>(c, "instances");
        if (d < 1 || instances < 1) throw UsageError("d and instances must be >= 1");
        const auto table = load_or_build_table(std::max<std::uint64_t>(c.n_max, N));
        std::ostringstream os;
        os << "k,instance,re,im,abs,expansion_re,expansion_im,discrepancy\n";
        for (int k : ks) {
            if (k < 1) throw UsageError("ks entries must be >= 1");
            for (int i = 0; i < instances; ++i) {
                const std::uint64_t s = c.seed + 1000 * static_cast<std::uint64_t>(k) + 10 * i;
                TraceProductSpec spec;
                for (int j = 0; j < d; ++j) {
                    spec.unitaries.push_back(haar_unitary(k, s + 2 * j));
                    spec.contractions.push_back(random_contraction(k, s + 2 * j + 1));
                    spec.phases.push_back({0.0, static_cast<double>(j + 1)});
                }
                spec.modulus = param<std::uint64_t>(c, "modulus");
                spec.residue = param<std::uint64_t>(c, "residue");
                const bool expand = k <= 8;  // the expansion has k^(2d) terms
                const auto r = trace_product_sum(spec, table, N, expand);
                os << k << ',' << i << ',' << fmt17(r.value.real()) << ',' << fmt17(r.value.imag()) << ','
                   << fmt17(std::abs(r.value)) << ',';
                if (expand)
                    os << fmt17(r.expansion_value.real()) << ',' << fmt17(r.expansion_value.imag()) << ','
                       << fmt17(r.discrepancy);
                else
                    os << ",,";
                os << '\n';
            }
        }
        out.csv = os.str();
        return out;
    }

    if (e == "quantize") {
        const int dim = param<int>(c, "dim");
        const double eps = param<double>(c, "eps");
        const auto N = param<std::uint64_t>(c, "N");
        const auto u = haar_unitary(dim, c.seed);
        const auto q = quantize_unitary(u, eps, N);
        const double step = op_norm(u.matrix() - q.v.matrix());
        std::ostringstream os;
        os << "n,norm_diff,telescoping_bound\n";
        CMatrix un = CMatrix::Identity(dim, dim), vn = un;
        for (std::uint64_t n = 1; n <= N; ++n) {
            un = un * u.matrix();
            vn = vn * q.v.matrix();
            os << n << ',' << fmt17(op_norm(un - vn)) << ',' << fmt17(static_cast<double>(n) * step) << '\n';
        }
        out.csv = os.str();
        const auto table = load_or_build_table(std::max<std::uint64_t>(c.n_max, N));
        const auto b = finite_vn_average_bound(u, q, eps, random_contraction(dim, c.seed + 1),
                                               random_contraction(dim, c.seed + 2), table, N);
        out.summary["grid"] = q.grid;
        out.summary["max_sampled_error"] = q.max_sampled_error;
        out.summary["s_u_abs"] = std::abs(b.s_u);
        out.summary["bound"] = b.bound;
        out.summary["bound_cs"] = b.bound_cs;
        return out;
    }

    if (e == "car-demo") {
        const int d = param<int>(c, "d");
        const int samples = param<int>(c, "samples");
        if (d < 1 || d > 8) throw UsageError("car-demo: d must lie in [1, 8]");
        const FockSpace space(d);
        const CMatrix id = CMatrix::Identity(space.dim(), space.dim());
        double anti = 0, mixed = 0, square = 0, cov = 0, qf = 0;
        for (int s = 0; s < samples; ++s) {
            const CVector f = random_unit_vector(d, c.seed + 2 * s), g = random_unit_vector(d, c.seed + 2 * s + 1);
            const CMatrix af = creation_matrix(space, f), ag = creation_matrix(space, g);
            anti = std::max(anti, max_abs(af * ag + ag * af));
            mixed = std::max(mixed, max_abs(af * ag.adjoint() + ag.adjoint() * af - inner(f, g) * id));
            square = std::max(square, max_abs(af * af));
            const auto u = haar_unitary(d, c.seed + 500 + s);
            const CMatrix gu = gamma(space, u).matrix();
            cov = std::max(cov, max_abs(gu * af * gu.adjoint() - creation_matrix(space, u.matrix() * f)));
            const Symbol t(random_positive_contraction(d, c.seed + 900 + s));
            const auto rho = quasifree_density_matrix(t, space);
            const CARPolynomial p({random_normal_monomial(d, 2, 2, c.seed + 1300 + s)});
            qf = std::max(qf, std::abs(quasifree_eval(t, p) - rho.expect(fock_matrix(space, p))));
        }
        std::ostringstream os;
        os << "check,max_error\n"
           << "a(f)a(g)+a(g)a(f)," << fmt17(anti) << '\n'
           << "a(f)a(g)*+a(g)*a(f)-<f,g>," << fmt17(mixed) << '\n'
           << "a(f)^2," << fmt17(square) << '\n'
           << "Gamma(U)a(f)Gamma(U)*-a(Uf)," << fmt17(cov) << '\n'
           << "determinant-vs-density," << fmt17(qf) << '\n';
        out.csv = os.str();
        return out;
    }

    if (e == "counterexample") {
        const auto L = param<std::uint64_t>(c, "L");
        const auto table = load_or_build_table(std::max<std::uint64_t>(c.n_max, L));
        const auto cps = resolve_checkpoints(c, L);
        const auto flows = counterexample_flow(L, table);
        const auto bh = average_series(flows.bh_flow, table, cps, c.workers);
        const auto car = average_series(flows.car_flow, table, cps, c.workers);
        std::ostringstream os;
        os << "N,re,im,abs,running_bound,car_re,car_im,car_abs\n";
        for (std::size_t i = 0; i < cps.size(); ++i)
            os << cps[i] << ',' << fmt17(bh.values[i].real()) << ',' << fmt17(bh.values[i].imag()) << ','
               << fmt17(std::abs(bh.values[i])) << ',' << fmt17(bh.running_bound[i]) << ','
               << fmt17(car.values[i].real()) << ',' << fmt17(car.values[i].imag()) << ','
               << fmt17(std::abs(car.values[i])) << '\n';
        out.csv = os.str();
        out.summary["valid_N"] = flows.valid_N;
        return out;
    }

    if (e == "free-clt") {
        const int q = param<int>(c, "q");
        const int p_max = param<int>(c, "p_max");
        const auto m = free_clt_moments(q, p_max);
        const auto semi = semicircle_moments(p_max, Rational(1, 2));
        std::ostringstream os;
        os << "p,m_p,semicircle_m_p,gap,m_p_exact\n";
        for (int p = 1; p <= p_max; ++p)
            os << p << ',' << fmt17(static_cast<double>(m[p - 1])) << ',' << fmt17(static_cast<double>(semi[p - 1]))
               << ',' << fmt17(static_cast<double>(semi[p - 1] - m[p - 1])) << ',' << m[p - 1] << '\n';
        out.csv = os.str();
        return out;
    }

    if (e == "bsz-check") {
        const auto M = param<std::uint64_t>(c, "M");
        const auto N = param<std::uint64_t>(c, "N");
        const auto cap = param<std::uint64_t>(c, "prime_cap");
        const auto table = load_or_build_table(std::max({c.n_max, N, cap * M}));
        const std::string kind = param<std::string>(c, "flow");
        Flow f;
        if (kind == "rotation") f = rotation_flow(param<double>(c, "theta"));
        else if (kind == "constant") f = constant_flow(1.0);
        else throw UsageError("bsz-check: flow must be 'rotation' or 'constant'");
        const auto r = bsz_check(f, table, param<double>(c, "epsilon"), M, N, cap);
        std::ostringstream os;
        os << "epsilon,prime_cap,cap_truncated,prime_pairs_checked,hypothesis_holds,max_correlation_ratio,"
              "mobius_sum_abs,paper_bound,bound_respected\n"
           << fmt17(r.epsilon) << ',' << r.prime_cap << ',' << r.cap_truncated << ',' << r.prime_pairs_checked << ','
           << r.hypothesis_holds << ',' << fmt17(r.max_correlation_ratio) << ',' << fmt17(r.mobius_sum_abs) << ','
           << fmt17(r.paper_bound) << ',' << r.bound_respected << '\n';
        out.csv = os.str();
        return out;
    }

    throw UsageError("unknown experiment '" + e + "'");
}

/// Writes <out>/<experiment>.csv and <out>/<experiment>.json; returns the process exit code.
inline int run(const ExperimentConfig& c) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentOutput res = run_experiment(c);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::filesystem::path dir(c.out);
    std::filesystem::create_directories(dir);
    {
        std::ofstream csv(dir / (c.experiment + ".csv"), std::ios::binary | std::ios::trunc);
        csv << res.csv;
    }
    json side;
    // Worker count never changes results, so it lives next to the timing data.
    json cfg = to_json(c);
    cfg.erase("workers");
    side["config"] = cfg;
    side["version"] = kVersion;
    side["summary"] = res.summary;
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    side["timing"] = {{"timestamp", stamp}, {"wall_time_s", wall}, {"workers", c.workers}};
    std::ofstream js(dir / (c.experiment + ".json"), std::ios::binary | std::ios::trunc);
    js << side.dump(2) << '\n';
    return 0;
}

}  // namespace ncflow
