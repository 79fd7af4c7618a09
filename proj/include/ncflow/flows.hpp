#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "linalg.hpp"
#include "moebius.hpp"

namespace ncflow {

/// Fixed evaluation block. Batch evaluators restart their internal state at
/// every block boundary, so results never depend on the worker count.
inline constexpr std::uint64_t kFlowBlock = 10'000;

/// n -> rho(alpha^n(A)) with a declared bound |value| <= declared_bound.
///
/// Evaluators must be pure. `batch`, when set, fills out[i] = value(first + i)
/// and may keep state across one call (incremental powers) but not across calls.
struct Flow {
    std::function<complex(std::uint64_t)> evaluator;
    double declared_bound = 1.0;
    std::string label;
    std::function<void(std::uint64_t, std::span<complex>)> batch;

    complex operator()(std::uint64_t n) const { return evaluator(n); }

    void fill(std::uint64_t first, std::span<complex> out) const {
        if (batch) {
            batch(first, out);
            return;
        }
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = evaluator(first + i);
    }
};

inline Flow rotation_flow(double theta) {
    return {[theta](std::uint64_t n) {
                const double c[2] = {0.0, theta};
                return e_turns(reduce_phase(c, n));
            },
            1.0, "rotation(" + std::to_string(theta) + ")", {}};
}

inline Flow constant_flow(complex c) {
    return {[c](std::uint64_t) { return c; }, std::abs(c), "constant", {}};
}

/// Pointwise linear combination sum_j w_j F_j.
inline Flow combine(const std::vector<std::pair<complex, Flow>>& parts, std::string label = "combination") {
    double bound = 0.0;
    for (const auto& [w, f] : parts) bound += std::abs(w) * f.declared_bound;
    return {[parts](std::uint64_t n) {
                complex acc{};
                for (const auto& [w, f] : parts) acc += w * f(n);
                return acc;
            },
            bound, std::move(label), {}};
}

struct AverageSeries {
    std::vector<std::uint64_t> checkpoints;
    std::vector<complex> values;
    /// B * (1/N) sum_{n<=N} |mu(n)|, the trivial envelope of |s_N|.
    std::vector<double> running_bound;
};

/// Rounded 10^x for x = lo, lo+step, ..., hi.
inline std::vector<std::uint64_t> geometric_checkpoints(double lo_exp = 3.0, double hi_exp = 6.0, double step = 0.5) {
    std::vector<std::uint64_t> out;
    const int count = static_cast<int>(std::floor((hi_exp - lo_exp) / step + 1e-9)) + 1;
    for (int i = 0; i < count; ++i) {
        const auto v = static_cast<std::uint64_t>(std::llround(std::pow(10.0, lo_exp + i * step)));
        if (out.empty() || v > out.back()) out.push_back(v);
    }
    return out;
}

namespace detail {

inline std::vector<complex> weighted_terms(const Flow& flow, const MoebiusTable& table, std::uint64_t top,
                                           unsigned workers) {
    std::vector<complex> terms(top);
    const auto mu = table.values();
    const std::uint64_t blocks = (top + kFlowBlock - 1) / kFlowBlock;
    const double slack = flow.declared_bound * (1.0 + 1e-9) + 1e-12;

    std::mutex err_mu;
    std::string error;
    std::exception_ptr thrown;
    std::atomic<std::uint64_t> next{0};

    auto work = [&] {
        std::vector<complex> buf;
        for (;;) {
            const std::uint64_t b = next.fetch_add(1);
            if (b >= blocks) return;
            const std::uint64_t first = b * kFlowBlock + 1;
            const std::uint64_t len = std::min(kFlowBlock, top - (first - 1));
            buf.resize(len);
            try {
                flow.fill(first, buf);
            } catch (...) {
                std::lock_guard lk(err_mu);
                if (!thrown && error.empty()) thrown = std::current_exception();
                return;
            }
            for (std::uint64_t i = 0; i < len; ++i) {
                const std::uint64_t n = first + i;
                const complex v = buf[i];
                if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
                    std::lock_guard lk(err_mu);
                    if (error.empty())
                        error = "flow '" + flow.label + "': non-finite value at n=" + std::to_string(n);
                    return;
                }
                if (std::abs(v) > slack) {
                    std::lock_guard lk(err_mu);
                    if (error.empty())
                        error = "flow '" + flow.label + "': |value| = " + std::to_string(std::abs(v)) +
                                " exceeds declared bound " + std::to_string(flow.declared_bound) +
                                " at n=" + std::to_string(n);
                    return;
                }
                terms[n - 1] = mu[n] == 0 ? complex{} : static_cast<double>(mu[n]) * v;
            }
        }
    };

    workers = std::max(1u, workers);
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (thrown) std::rethrow_exception(thrown);
    if (!error.empty()) throw std::runtime_error(error);
    return terms;
}

}  // namespace detail

/// Moebius-weighted averages s_N = (1/N) sum_{n<=N} mu(n) flow(n) at each checkpoint.
///
/// Terms are produced once (optionally by several workers over fixed blocks)
/// and every checkpoint is a pairwise sum over the same prefix. For flows
/// without a batch path the value at N is bit-identical to
/// weighted_average(table, flow, N).
inline AverageSeries average_series(const Flow& flow, const MoebiusTable& table,
                                    std::span<const std::uint64_t> checkpoints, unsigned workers = 1) {
    if (checkpoints.empty()) throw std::invalid_argument("average_series: no checkpoints");
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        if (checkpoints[i] == 0) throw std::invalid_argument("average_series: checkpoint 0");
        if (i && checkpoints[i] <= checkpoints[i - 1])
            throw std::invalid_argument("average_series: checkpoints must be strictly ascending");
    }
    const std::uint64_t top = checkpoints.back();
    if (top > table.n_max())
        throw std::out_of_range("average_series: checkpoint " + std::to_string(top) + " exceeds table n_max " +
                                std::to_string(table.n_max()));

    const auto terms = detail::weighted_terms(flow, table, top, workers);
    const auto mu = table.values();

    AverageSeries out;
    std::uint64_t squarefree = 0, n = 0;
    for (auto N : checkpoints) {
        for (; n < N; ++n) squarefree += mu[n + 1] != 0;
        const std::span<const complex> prefix(terms.data(), N);
        out.checkpoints.push_back(N);
        out.values.push_back(pairwise_sum(prefix) / static_cast<double>(N));
        out.running_bound.push_back(flow.declared_bound * static_cast<double>(squarefree) / static_cast<double>(N));
    }
    return out;
}

struct DecayFit {
    double C = 0.0;
    double h = 0.0;
    double r_squared = 0.0;
    std::size_t points_used = 0;
    std::size_t zeros_dropped = 0;
    bool exact_zero_series = false;
};

/// Least squares of log|s_N| = log C - h log log N over the nonzero checkpoints.
inline DecayFit decay_fit(const AverageSeries& series) {
    DecayFit fit;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < series.checkpoints.size(); ++i) {
        if (series.checkpoints[i] < 3)
            throw std::invalid_argument("decay_fit: checkpoints must be >= 3 so that log log N > 0");
        const double a = std::abs(series.values[i]);
        if (a == 0.0) {
            ++fit.zeros_dropped;
            continue;
        }
        xs.push_back(std::log(std::log(static_cast<double>(series.checkpoints[i]))));
        ys.push_back(std::log(a));
    }
    if (xs.empty()) {
        fit.exact_zero_series = true;
        fit.h = std::numeric_limits<double>::infinity();
        fit.r_squared = 1.0;
        return fit;
    }
    if (xs.size() < 3) throw std::invalid_argument("decay_fit: need at least 3 nonzero checkpoints");

    const double m = static_cast<double>(xs.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("decay_fit: checkpoints must be distinct");
    const double slope = sxy / sxx;
    fit.h = -slope;
    fit.C = std::exp(my - slope * mx);
    double ss_res = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - (my + slope * (xs[i] - mx));
        ss_res += r * r;
    }
    fit.r_squared = syy > 0 ? 1.0 - ss_res / syy : 1.0;
    fit.points_used = xs.size();
    return fit;
}

struct BSZReport {
    double epsilon = 0.0;
    std::uint64_t prime_cap = 0;
    /// True when e^{1/eps} was cut down by the hard cap or by n_max / M.
    bool cap_truncated = false;
    std::size_t prime_pairs_checked = 0;
    bool hypothesis_holds = false;
    double max_correlation_ratio = 0.0;
    double mobius_sum_abs = 0.0;
    double paper_bound = 0.0;
    bool bound_respected = false;
};

inline constexpr std::uint64_t kDefaultBszPrimeCap = 200;

/// Bilinear prime-pair criterion: checks |sum_{m<=M} f(p1 m) conj f(p2 m)| <= eps M for
/// all primes p1 < p2 under the cap, then compares |sum_{n<=N} mu(n) f(n)| with
/// 2 sqrt(eps log(1/eps)) N.
inline BSZReport bsz_check(const Flow& f, const MoebiusTable& table, double epsilon, std::uint64_t M,
                           std::uint64_t N, std::uint64_t hard_cap = kDefaultBszPrimeCap) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("bsz_check: epsilon must lie in (0,1)");
    if (M == 0) throw std::invalid_argument("bsz_check: M must be positive");
    if (f.declared_bound > 1.0 + 1e-12) throw std::invalid_argument("bsz_check: flow must be bounded by 1");
    detail::check_horizon(table, N, "bsz_check");

    BSZReport rep;
    rep.epsilon = epsilon;
    const double natural = std::exp(1.0 / epsilon);
    std::uint64_t cap = hard_cap;
    if (natural < static_cast<double>(cap)) cap = static_cast<std::uint64_t>(std::floor(natural));
    cap = std::min(cap, table.n_max() / M);
    rep.prime_cap = cap;
    rep.cap_truncated = static_cast<double>(cap) < std::floor(natural);

    std::vector<std::uint64_t> primes;
    for (auto p : table.primes()) {
        if (p > cap) break;
        primes.push_back(p);
    }
    // f(p m) for every prime under the cap, evaluated once
    std::vector<std::vector<complex>> samples(primes.size(), std::vector<complex>(M));
    for (std::size_t i = 0; i < primes.size(); ++i)
        for (std::uint64_t m = 1; m <= M; ++m) samples[i][m - 1] = f(primes[i] * m);

    rep.hypothesis_holds = true;
    std::vector<complex> prod(M);
    for (std::size_t i = 0; i < primes.size(); ++i)
        for (std::size_t j = i + 1; j < primes.size(); ++j) {
            for (std::uint64_t m = 0; m < M; ++m) prod[m] = samples[i][m] * std::conj(samples[j][m]);
            const double ratio = std::abs(pairwise_sum<complex>(prod)) / static_cast<double>(M);
            rep.max_correlation_ratio = std::max(rep.max_correlation_ratio, ratio);
            if (ratio > epsilon) rep.hypothesis_holds = false;
            ++rep.prime_pairs_checked;
        }

    rep.mobius_sum_abs = std::abs(weighted_average(table, f, N)) * static_cast<double>(N);
    rep.paper_bound = 2.0 * std::sqrt(epsilon * std::log(1.0 / epsilon)) * static_cast<double>(N);
    rep.bound_respected = rep.mobius_sum_abs <= rep.paper_bound;
    return rep;
}

/// Smallest q in [1, max_period] with ||U^q - I||_max <= tol, or 0.
inline std::uint64_t find_period(const UnitaryMatrix& u, std::uint64_t max_period = 1000, double tol = 1e-10) {
    CMatrix p = u.matrix();
    const CMatrix id = CMatrix::Identity(u.dim(), u.dim());
    for (std::uint64_t q = 1; q <= max_period; ++q) {
        if (max_abs(p - id) <= tol) return q;
        p = p * u.matrix();
    }
    return 0;
}

/// n -> trace(rho U*^n A U^n) for a unitary of finite order; values are tabulated over one period.
inline Flow periodic_flow(const UnitaryMatrix& u, const DensityState& rho, const CMatrix& a,
                          std::uint64_t max_period = 1000) {
    if (a.rows() != u.dim() || a.cols() != u.dim() || rho.dim() != u.dim())
        throw std::invalid_argument("periodic_flow: dimension mismatch");
    const std::uint64_t q = find_period(u, max_period);
    if (q == 0)
        throw std::invalid_argument("periodic_flow: no period <= " + std::to_string(max_period) +
                                    " with U^q = I");
    std::vector<complex> values(q);
    CMatrix un = CMatrix::Identity(u.dim(), u.dim());
    for (std::uint64_t r = 0; r < q; ++r) {
        values[r] = rho.expect(un.adjoint() * a * un);
        un = un * u.matrix();
    }
    const double bound = op_norm(a);
    return {[values, q](std::uint64_t n) { return values[n % q]; }, bound,
            "periodic(q=" + std::to_string(q) + ")", {}};
}

}  // namespace ncflow
