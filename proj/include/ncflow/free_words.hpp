#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <compare>
#include <complex>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flows.hpp"
#include "moebius.hpp"

namespace ncflow {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

// ---------------------------------------------------------------------------
// Free group on generators g_i, i in Z

/// Freely reduced word, stored run-length compressed as (generator, nonzero power)
/// syllables with no two adjacent syllables on the same generator.
class ReducedWord {
public:
    struct Syllable {
        std::int64_t generator;
        std::int64_t power;
        auto operator<=>(const Syllable&) const = default;
    };

    ReducedWord() = default;

    static ReducedWord generator(std::int64_t i, std::int64_t power = 1) {
        ReducedWord w;
        w.push(i, power);
        return w;
    }

    /// Reduces an arbitrary letter sequence (generator, +-1).
    static ReducedWord from_letters(const std::vector<std::pair<std::int64_t, int>>& letters) {
        ReducedWord w;
        for (const auto& [g, e] : letters) {
            if (e != 1 && e != -1) throw std::invalid_argument("ReducedWord: letter exponents must be +-1");
            w.push(g, e);
        }
        return w;
    }

    /// g_{i_1} g_{i_2} ... g_{i_k}
    static ReducedWord product_of(const std::vector<std::int64_t>& indices) {
        ReducedWord w;
        for (auto i : indices) w.push(i, 1);
        return w;
    }

    bool is_identity() const { return syl_.empty(); }
    const std::vector<Syllable>& syllables() const { return syl_; }

    std::size_t length() const {
        std::size_t n = 0;
        for (const auto& s : syl_) n += static_cast<std::size_t>(s.power < 0 ? -s.power : s.power);
        return n;
    }

    std::vector<std::pair<std::int64_t, int>> letters() const {
        std::vector<std::pair<std::int64_t, int>> out;
        for (const auto& s : syl_)
            for (std::int64_t k = 0; k < (s.power < 0 ? -s.power : s.power); ++k)
                out.emplace_back(s.generator, s.power < 0 ? -1 : 1);
        return out;
    }

    ReducedWord inverse() const {
        ReducedWord w;
        for (auto it = syl_.rbegin(); it != syl_.rend(); ++it) w.syl_.push_back({it->generator, -it->power});
        return w;
    }

    /// g_i -> g_{i+n}
    ReducedWord shifted(std::int64_t n) const {
        ReducedWord w = *this;
        for (auto& s : w.syl_) s.generator += n;
        return w;
    }

    friend ReducedWord operator*(const ReducedWord& a, const ReducedWord& b) {
        ReducedWord w = a;
        for (const auto& s : b.syl_) w.push(s.generator, s.power);
        return w;
    }

    auto operator<=>(const ReducedWord&) const = default;
    bool operator==(const ReducedWord&) const = default;

    std::string to_string() const {
        if (syl_.empty()) return "e";
        std::string out;
        for (const auto& s : syl_) {
            if (!out.empty()) out += ' ';
            out += "g" + std::to_string(s.generator);
            if (s.power != 1) out += "^" + std::to_string(s.power);
        }
        return out;
    }

private:
    /// Stack reduction: merge into the top syllable, pop when the power cancels.
    void push(std::int64_t g, std::int64_t p) {
        if (p == 0) return;
        if (!syl_.empty() && syl_.back().generator == g) {
            syl_.back().power += p;
            if (syl_.back().power == 0) syl_.pop_back();
        } else {
            syl_.push_back({g, p});
        }
    }

    std::vector<Syllable> syl_;
};

inline ReducedWord multiply(const ReducedWord& a, const ReducedWord& b) { return a * b; }

namespace detail {
inline complex conj_coeff(const complex& c) { return std::conj(c); }
inline Rational conj_coeff(const Rational& c) { return c; }
inline double conj_coeff(double c) { return c; }
}  // namespace detail

/// Finite sum of group elements with coefficients in C (complex) or Q (Rational).
template <typename Coeff>
class GroupElementSum {
public:
    GroupElementSum() = default;

    static GroupElementSum single(const ReducedWord& w, Coeff c = Coeff(1)) {
        GroupElementSum s;
        s.add(w, c);
        return s;
    }

    void add(const ReducedWord& w, const Coeff& c) {
        if (c == Coeff(0)) return;
        auto [it, inserted] = terms_.try_emplace(w, c);
        if (!inserted) {
            it->second += c;
            if (it->second == Coeff(0)) terms_.erase(it);
        }
    }

    const std::map<ReducedWord, Coeff>& terms() const { return terms_; }
    std::size_t size() const { return terms_.size(); }

    /// Canonical trace: coefficient of the identity.
    Coeff trace() const {
        auto it = terms_.find(ReducedWord{});
        return it == terms_.end() ? Coeff(0) : it->second;
    }

    GroupElementSum adjoint() const {
        GroupElementSum s;
        for (const auto& [w, c] : terms_) s.add(w.inverse(), detail::conj_coeff(c));
        return s;
    }

    GroupElementSum shifted(std::int64_t n) const {
        GroupElementSum s;
        for (const auto& [w, c] : terms_) s.add(w.shifted(n), c);
        return s;
    }

    GroupElementSum scaled(const Coeff& k) const {
        GroupElementSum s;
        for (const auto& [w, c] : terms_) s.add(w, c * k);
        return s;
    }

    friend GroupElementSum operator+(const GroupElementSum& a, const GroupElementSum& b) {
        GroupElementSum s = a;
        for (const auto& [w, c] : b.terms_) s.add(w, c);
        return s;
    }

    friend GroupElementSum operator*(const GroupElementSum& a, const GroupElementSum& b) {
        GroupElementSum s;
        for (const auto& [wa, ca] : a.terms_)
            for (const auto& [wb, cb] : b.terms_) s.add(wa * wb, ca * cb);
        return s;
    }

    bool operator==(const GroupElementSum&) const = default;

private:
    std::map<ReducedWord, Coeff> terms_;
};

template <typename Coeff>
Coeff trace(const GroupElementSum<Coeff>& x) {
    return x.trace();
}

template <typename Coeff>
GroupElementSum<Coeff> shift(const GroupElementSum<Coeff>& x, std::int64_t n) {
    return x.shifted(n);
}

/// n -> tau(v^{-1} alpha^n(w) v), the vector state of delta_v in the left regular representation.
inline Flow free_shift_flow(const ReducedWord& w, const ReducedWord& v) {
    const ReducedWord vinv = v.inverse();
    return {[w, v, vinv](std::uint64_t n) -> complex {
                return (vinv * w.shifted(static_cast<std::int64_t>(n)) * v).is_identity() ? 1.0 : 0.0;
            },
            1.0, "free shift " + w.to_string(), {}};
}

// ---------------------------------------------------------------------------
// Non-crossing partitions and free cumulants

inline constexpr int kMaxNcOrder = 14;

/// Set partition of {1..n} without crossings; block_of[i] is the block of element i+1,
/// blocks numbered by first appearance.
struct NonCrossingPartition {
    std::vector<std::uint8_t> block_of;

    int size() const { return static_cast<int>(block_of.size()); }

    std::vector<std::vector<int>> blocks() const {
        std::vector<std::vector<int>> out;
        for (int i = 0; i < size(); ++i) {
            if (block_of[i] >= out.size()) out.resize(block_of[i] + 1);
            out[block_of[i]].push_back(i + 1);
        }
        return out;
    }
};

/// No a < b < c < d with a, c in one block and b, d in another.
inline bool is_noncrossing(const std::vector<std::uint8_t>& block_of) {
    const int n = static_cast<int>(block_of.size());
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            if (block_of[b] == block_of[a]) continue;
            for (int c = b + 1; c < n; ++c) {
                if (block_of[c] != block_of[a]) continue;
                for (int d = c + 1; d < n; ++d)
                    if (block_of[d] == block_of[b]) return false;
            }
        }
    return true;
}

namespace detail {

inline void nc_extend(int i, int n, std::vector<std::uint8_t>& cur, std::vector<int>& first, std::vector<int>& last,
                      std::vector<NonCrossingPartition>& out) {
    if (i == n) {
        out.push_back({cur});
        return;
    }
    const int nblocks = static_cast<int>(first.size());
    for (int b = 0; b < nblocks; ++b) {
        // joining block b is allowed iff every element strictly between last[b] and i
        // lies in a block that was opened after last[b]
        bool ok = true;
        for (int x = last[b] + 1; x < i && ok; ++x) ok = first[cur[x]] > last[b];
        if (!ok) continue;
        const int saved = last[b];
        cur[i] = static_cast<std::uint8_t>(b);
        last[b] = i;
        nc_extend(i + 1, n, cur, first, last, out);
        last[b] = saved;
    }
    cur[i] = static_cast<std::uint8_t>(nblocks);
    first.push_back(i);
    last.push_back(i);
    nc_extend(i + 1, n, cur, first, last, out);
    first.pop_back();
    last.pop_back();
}

}  // namespace detail

/// All of NC(n), each exactly once, in a fixed depth-first order.
inline std::vector<NonCrossingPartition> nc_partitions(int n) {
    if (n < 0 || n > kMaxNcOrder)
        throw std::invalid_argument("nc_partitions: n must lie in [0, " + std::to_string(kMaxNcOrder) + "]");
    std::vector<NonCrossingPartition> out;
    std::vector<std::uint8_t> cur(n, 0);
    std::vector<int> first, last;
    detail::nc_extend(0, n, cur, first, last, out);
    return out;
}

template <typename Scalar>
struct CumulantTable {
    /// kappa[i] and moments[i] hold order i+1.
    std::vector<Scalar> kappa;
    std::vector<Scalar> moments;
};

namespace detail {

/// [z^r] (sum_{i>=0} m_i z^i)^s for r <= rmax, with m_0 = 1, as table[s][r].
template <typename Scalar>
std::vector<std::vector<Scalar>> moment_powers(const std::vector<Scalar>& m, std::size_t n) {
    std::vector<Scalar> series(n + 1, Scalar(0));
    series[0] = Scalar(1);
    for (std::size_t i = 1; i <= n && i <= m.size(); ++i) series[i] = m[i - 1];
    std::vector<std::vector<Scalar>> pw(n + 1, std::vector<Scalar>(n + 1, Scalar(0)));
    pw[0][0] = Scalar(1);
    for (std::size_t s = 1; s <= n; ++s)
        for (std::size_t r = 0; r <= n; ++r) {
            Scalar acc(0);
            for (std::size_t i = 0; i <= r; ++i) acc += pw[s - 1][r - i] * series[i];
            pw[s][r] = acc;
        }
    return pw;
}

}  // namespace detail

/// Free cumulants from moments via the first-block recursion
/// m_n = sum_{s=1}^{n} kappa_s [z^{n-s}] M(z)^s, M(z) = 1 + sum m_i z^i.
template <typename Scalar>
CumulantTable<Scalar> moments_to_cumulants(const std::vector<Scalar>& moments) {
    const std::size_t n = moments.size();
    if (n > static_cast<std::size_t>(kMaxNcOrder))
        throw std::invalid_argument("moments_to_cumulants: order exceeds " + std::to_string(kMaxNcOrder));
    const auto pw = detail::moment_powers(moments, n);
    CumulantTable<Scalar> t{std::vector<Scalar>(n, Scalar(0)), moments};
    for (std::size_t k = 1; k <= n; ++k) {
        Scalar acc = moments[k - 1];
        for (std::size_t s = 1; s < k; ++s) acc -= t.kappa[s - 1] * pw[s][k - s];
        t.kappa[k - 1] = acc;
    }
    return t;
}

template <typename Scalar>
CumulantTable<Scalar> cumulants_to_moments(const std::vector<Scalar>& kappa) {
    const std::size_t n = kappa.size();
    if (n > static_cast<std::size_t>(kMaxNcOrder))
        throw std::invalid_argument("cumulants_to_moments: order exceeds " + std::to_string(kMaxNcOrder));
    CumulantTable<Scalar> t{kappa, std::vector<Scalar>(n, Scalar(0))};
    for (std::size_t k = 1; k <= n; ++k) {
        // m_k only needs m_1..m_{k-1}
        std::vector<Scalar> known(t.moments.begin(), t.moments.begin() + static_cast<std::ptrdiff_t>(k - 1));
        const auto pw = detail::moment_powers(known, k);
        Scalar acc(0);
        for (std::size_t s = 1; s <= k; ++s) acc += kappa[s - 1] * pw[s][k - s];
        t.moments[k - 1] = acc;
    }
    return t;
}

inline BigInt binomial(unsigned n, unsigned k) {
    BigInt r = 1;
    for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

inline BigInt catalan(unsigned n) { return binomial(2 * n, n) / (n + 1); }

/// Moments of x = (u + u*)/2 for a Haar unitary u: m_{2j} = C(2j, j) / 4^j.
inline std::vector<Rational> arcsine_moments(int p_max) {
    std::vector<Rational> m(p_max, Rational(0));
    for (int p = 2; p <= p_max; p += 2) m[p - 1] = Rational(binomial(p, p / 2), BigInt(1) << p);
    return m;
}

/// Semicircle of variance sigma2: m_{2j} = Catalan_j sigma2^j.
inline std::vector<Rational> semicircle_moments(int p_max, const Rational& sigma2) {
    std::vector<Rational> m(p_max, Rational(0));
    Rational s = 1;
    for (int p = 2; p <= p_max; p += 2) {
        s *= sigma2;
        m[p - 1] = Rational(catalan(p / 2)) * s;
    }
    return m;
}

inline constexpr int kMaxCltOrder = 12;

/// tau(s_q^p) by exact expansion of ((1/sqrt q) sum_{i<q} (g_i + g_i^{-1})/2)^p over the free group.
inline std::vector<Rational> free_clt_word_moments(int q, int p_max) {
    if (q < 1 || p_max < 1) throw std::invalid_argument("free_clt_word_moments: q and p_max must be positive");
    std::vector<BigInt> returns(p_max + 1, 0);
    // depth-first over letter sequences with the running reduced word as a stack
    std::vector<std::pair<int, int>> stack;
    auto rec = [&](auto&& self, int depth) -> void {
        if (stack.empty() && depth > 0) returns[depth] += 1;
        if (depth == p_max) return;
        for (int g = 0; g < q; ++g)
            for (int e : {1, -1}) {
                const bool cancels = !stack.empty() && stack.back().first == g && stack.back().second == -e;
                if (cancels) {
                    const auto saved = stack.back();
                    stack.pop_back();
                    self(self, depth + 1);
                    stack.push_back(saved);
                } else {
                    stack.emplace_back(g, e);
                    self(self, depth + 1);
                    stack.pop_back();
                }
            }
    };
    rec(rec, 0);
    std::vector<Rational> m(p_max, Rational(0));
    for (int p = 2; p <= p_max; p += 2) {
        BigInt qpow = 1;
        for (int i = 0; i < p / 2; ++i) qpow *= q;
        m[p - 1] = Rational(returns[p], qpow * (BigInt(1) << p));
    }
    return m;
}

/// Moments m_1..m_{p_max} of s_q = (x_1 + ... + x_q)/sqrt(q) for free arcsine copies x_i,
/// through kappa_n(s_q) = q^{1 - n/2} kappa_n(x). For q <= 3, p_max <= 6 the result is also
/// checked against the exact word expansion.
inline std::vector<Rational> free_clt_moments(int q, int p_max) {
    if (q < 1) throw std::invalid_argument("free_clt_moments: q must be >= 1");
    if (p_max < 1 || p_max > kMaxCltOrder)
        throw std::invalid_argument("free_clt_moments: p_max must lie in [1, " + std::to_string(kMaxCltOrder) + "]");
    const auto base = moments_to_cumulants(arcsine_moments(p_max));
    std::vector<Rational> kappa(p_max, Rational(0));
    for (int n = 1; n <= p_max; ++n) {
        if (base.kappa[n - 1] == 0) continue;
        if (n % 2) throw std::logic_error("free_clt_moments: odd arcsine cumulant is nonzero");
        BigInt qpow = 1;
        for (int i = 0; i < n / 2 - 1; ++i) qpow *= q;
        kappa[n - 1] = base.kappa[n - 1] / Rational(qpow);
    }
    auto m = cumulants_to_moments(kappa).moments;
    if (q <= 3 && p_max <= 6 && m != free_clt_word_moments(q, p_max))
        throw std::logic_error("free_clt_moments: cumulant and word-expansion moments disagree");
    return m;
}

// ---------------------------------------------------------------------------
// Block sums B = sum_j mu(j(2l+1)+k) alpha^{j(2l+1)+k}(g_m)

inline GroupElementSum<Rational> bkn_element(const MoebiusTable& table, std::int64_t l,
                                             const std::vector<std::int64_t>& word, std::int64_t k, int q) {
    if (l < 0) throw std::invalid_argument("bkn_element: l must be >= 0");
    for (auto i : word)
        if ((i < 0 ? -i : i) > l) throw std::invalid_argument("bkn_element: l must be >= max |i_j|");
    if (k < 1 || k > 2 * l + 1) throw std::invalid_argument("bkn_element: k must lie in [1, 2l+1]");
    if (q < 1) throw std::invalid_argument("bkn_element: q must be >= 1");
    const ReducedWord g = ReducedWord::product_of(word);
    GroupElementSum<Rational> b;
    for (int j = 0; j < q; ++j) {
        const auto n = static_cast<std::uint64_t>(j * (2 * l + 1) + k);
        b.add(g.shifted(static_cast<std::int64_t>(n)), Rational(table.mu(n)));
    }
    return b;
}

struct BknMomentNorm {
    /// tau((B* B / q^2)^{p/2}), exact
    Rational trace_moment;
    /// trace_moment^{1/p}, a lower proxy for ||B / q||
    double estimate = 0.0;
    std::size_t nonzero_terms = 0;
};

inline constexpr double kWordExpansionBudget = 5e7;

inline BknMomentNorm moment_norm(const GroupElementSum<Rational>& b, int q, int p,
                                 double budget = kWordExpansionBudget) {
    if (p < 2 || p % 2) throw std::invalid_argument("moment_norm: p must be even and >= 2");
    std::size_t max_len = 1;
    for (const auto& [w, c] : b.terms()) max_len = std::max(max_len, w.length());
    const double cost = std::pow(static_cast<double>(std::max<std::size_t>(b.size(), 1)), p) *
                        static_cast<double>(max_len * static_cast<std::size_t>(p));
    if (cost > budget)
        throw std::invalid_argument("moment_norm: word expansion cost " + std::to_string(cost) + " exceeds budget " +
                                    std::to_string(budget));
    const auto bb = (b.adjoint() * b).scaled(Rational(1, q * q));
    GroupElementSum<Rational> acc = GroupElementSum<Rational>::single(ReducedWord{});
    for (int i = 0; i < p / 2; ++i) acc = acc * bb;
    BknMomentNorm out;
    out.trace_moment = acc.trace();
    out.estimate = std::pow(static_cast<double>(out.trace_moment), 1.0 / p);
    out.nonzero_terms = b.size();
    return out;
}

inline BknMomentNorm bkn_moment_norm(const MoebiusTable& table, std::int64_t l, const std::vector<std::int64_t>& word,
                                     std::int64_t k, int q, int p, double budget = kWordExpansionBudget) {
    return moment_norm(bkn_element(table, l, word, k, q), q, p, budget);
}

}  // namespace ncflow
