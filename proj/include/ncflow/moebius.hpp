#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "summation.hpp"

namespace ncflow {

/// Default upper limit on sieve size; callers may raise it explicitly.
inline constexpr std::uint64_t kDefaultSieveCap = 100'000'000;

/// Table of mu(1..n_max) and the primes up to n_max.
class MoebiusTable {
public:
    MoebiusTable() = default;

    std::uint64_t n_max() const { return n_max_; }

    int mu(std::uint64_t n) const {
        if (n == 0 || n > n_max_)
            throw std::out_of_range("mu(" + std::to_string(n) + ") outside table of size " +
                                    std::to_string(n_max_));
        return mu_[n];
    }

    /// mu values, index 0 is a zero placeholder.
    std::span<const std::int8_t> values() const { return mu_; }
    std::span<const std::uint32_t> primes() const { return primes_; }

    /// Build from precomputed values (cache loading); index 0 must be a placeholder.
    static MoebiusTable from_values(std::vector<std::int8_t> mu) {
        if (mu.size() < 2) throw std::invalid_argument("moebius table needs n_max >= 1");
        MoebiusTable t;
        t.n_max_ = mu.size() - 1;
        t.mu_ = std::move(mu);
        t.mu_[0] = 0;
        // primes are recovered as the n > 1 with mu = -1 and no smaller prime divisor
        std::vector<bool> composite(t.mu_.size(), false);
        for (std::uint64_t i = 2; i <= t.n_max_; ++i) {
            if (composite[i]) continue;
            t.primes_.push_back(static_cast<std::uint32_t>(i));
            for (std::uint64_t j = i * i; j <= t.n_max_; j += i) composite[j] = true;
        }
        return t;
    }

    friend MoebiusTable build_table(std::uint64_t n_max, std::uint64_t hard_cap);

private:
    std::uint64_t n_max_ = 0;
    std::vector<std::int8_t> mu_;
    std::vector<std::uint32_t> primes_;
};

/// Linear sieve: each composite is crossed out exactly once by its smallest prime factor.
inline MoebiusTable build_table(std::uint64_t n_max, std::uint64_t hard_cap = kDefaultSieveCap) {
    if (n_max == 0) throw std::invalid_argument("build_table: n_max must be positive");
    if (n_max > hard_cap)
        throw std::invalid_argument("build_table: n_max " + std::to_string(n_max) +
                                    " exceeds hard cap " + std::to_string(hard_cap));
    MoebiusTable t;
    t.n_max_ = n_max;
    t.mu_.assign(n_max + 1, 0);
    std::vector<std::uint32_t> spf(n_max + 1, 0);
    t.mu_[1] = 1;
    for (std::uint64_t i = 2; i <= n_max; ++i) {
        if (spf[i] == 0) {
            spf[i] = static_cast<std::uint32_t>(i);
            t.primes_.push_back(static_cast<std::uint32_t>(i));
            t.mu_[i] = -1;
        }
        for (std::uint32_t p : t.primes_) {
            if (p > spf[i] || i * p > n_max) break;
            spf[i * p] = p;
            t.mu_[i * p] = (p == spf[i]) ? 0 : static_cast<std::int8_t>(-t.mu_[i]);
        }
    }
    return t;
}

/// Coefficients a_0..a_d of a real polynomial phase, restricted to n = residue (mod modulus).
struct PolynomialPhase {
    std::vector<double> coeffs;
    std::uint64_t modulus = 1;
    std::uint64_t residue = 0;

    void validate() const {
        if (modulus == 0) throw std::invalid_argument("PolynomialPhase: modulus must be >= 1");
        if (residue >= modulus)
            throw std::invalid_argument("PolynomialPhase: residue must lie in [0, modulus)");
    }

    double turns(std::uint64_t n) const { return reduce_phase(coeffs, n); }

    static PolynomialPhase linear(double theta, std::uint64_t modulus = 1, std::uint64_t residue = 0) {
        return {{0.0, theta}, modulus, residue};
    }
};

namespace detail {

inline void check_horizon(const MoebiusTable& table, std::uint64_t N, const char* what) {
    if (N == 0) throw std::invalid_argument(std::string(what) + ": N must be positive");
    if (N > table.n_max())
        throw std::out_of_range(std::string(what) + ": N=" + std::to_string(N) +
                                " exceeds table n_max=" + std::to_string(table.n_max()));
}

}  // namespace detail

/// (1/N) sum_{n<=N} mu(n) f(n), summed pairwise in ascending n.
template <typename F>
complex weighted_average(const MoebiusTable& table, F&& f, std::uint64_t N) {
    detail::check_horizon(table, N, "weighted_average");
    const auto mu = table.values();
    std::vector<complex> terms(N);
    for (std::uint64_t n = 1; n <= N; ++n)
        terms[n - 1] = mu[n] == 0 ? complex{} : static_cast<double>(mu[n]) * complex(f(n));
    return pairwise_sum<complex>(terms) / static_cast<double>(N);
}

/// Pairs (N, M(N)/N) with the Mertens sum accumulated in integers.
inline std::vector<std::pair<std::uint64_t, double>> mertens_series(
    const MoebiusTable& table, std::span<const std::uint64_t> checkpoints) {
    std::vector<std::pair<std::uint64_t, double>> out;
    out.reserve(checkpoints.size());
    std::uint64_t top = 0;
    for (auto N : checkpoints) {
        detail::check_horizon(table, N, "mertens_series");
        top = std::max(top, N);
    }
    std::vector<std::int64_t> prefix(top + 1, 0);
    const auto mu = table.values();
    for (std::uint64_t n = 1; n <= top; ++n) prefix[n] = prefix[n - 1] + mu[n];
    for (auto N : checkpoints)
        out.emplace_back(N, static_cast<double>(prefix[N]) / static_cast<double>(N));
    return out;
}

inline std::int64_t mertens(const MoebiusTable& table, std::uint64_t N) {
    if (N > table.n_max()) throw std::out_of_range("mertens: N exceeds table");
    std::int64_t m = 0;
    const auto mu = table.values();
    for (std::uint64_t n = 1; n <= N; ++n) m += mu[n];
    return m;
}

inline std::uint64_t squarefree_count(const MoebiusTable& table, std::uint64_t N) {
    if (N > table.n_max()) throw std::out_of_range("squarefree_count: N exceeds table");
    std::uint64_t q = 0;
    const auto mu = table.values();
    for (std::uint64_t n = 1; n <= N; ++n) q += mu[n] != 0;
    return q;
}

inline double squarefree_density(const MoebiusTable& table, std::uint64_t N) {
    detail::check_horizon(table, N, "squarefree_density");
    return static_cast<double>(squarefree_count(table, N)) / static_cast<double>(N);
}

/// (1/N) sum over n<=N, n = l (mod p) of mu(n) e(phase(n)).
inline complex exp_sum(const MoebiusTable& table, const PolynomialPhase& phase, std::uint64_t N) {
    phase.validate();
    return weighted_average(
        table,
        [&](std::uint64_t n) -> complex {
            if (n % phase.modulus != phase.residue) return {};
            return e_turns(phase.turns(n));
        },
        N);
}

}  // namespace ncflow
