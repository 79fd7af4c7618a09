#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flows.hpp"
#include "linalg.hpp"
#include "moebius.hpp"

namespace ncflow {

// ---------------------------------------------------------------------------
// Fock space

/// Antisymmetric Fock space over C^d. Basis vectors e_S are indexed by
/// occupation bitmasks (bit j <-> mode j) and ordered by |S|, then
/// lexicographically on the ascending element list.
class FockSpace {
public:
    static constexpr int kMaxModes = 14;

    explicit FockSpace(int d) : d_(d) {
        if (d < 0 || d > kMaxModes)
            throw std::invalid_argument("FockSpace: d must be in [0, " + std::to_string(kMaxModes) + "]");
        const std::uint32_t n = std::uint32_t{1} << d;
        basis_.resize(n);
        for (std::uint32_t m = 0; m < n; ++m) basis_[m] = m;
        std::sort(basis_.begin(), basis_.end(), [](std::uint32_t a, std::uint32_t b) {
            const int pa = std::popcount(a), pb = std::popcount(b);
            if (pa != pb) return pa < pb;
            // same size: compare ascending element lists, i.e. the lowest differing bit decides
            const std::uint32_t diff = a ^ b;
            const std::uint32_t low = diff & (~diff + 1);
            return (a & low) != 0;
        });
        index_.resize(n);
        for (std::uint32_t i = 0; i < n; ++i) index_[basis_[i]] = i;
    }

    int modes() const { return d_; }
    Eigen::Index dim() const { return static_cast<Eigen::Index>(basis_.size()); }
    std::uint32_t mask(Eigen::Index i) const { return basis_.at(static_cast<std::size_t>(i)); }
    Eigen::Index index(std::uint32_t mask) const { return index_.at(mask); }
    Eigen::Index vacuum() const { return index(0); }

    /// Basis positions belonging to the n-particle sector, in basis order.
    std::vector<Eigen::Index> sector(int n) const {
        std::vector<Eigen::Index> out;
        for (std::size_t i = 0; i < basis_.size(); ++i)
            if (std::popcount(basis_[i]) == n) out.push_back(static_cast<Eigen::Index>(i));
        return out;
    }

private:
    int d_;
    std::vector<std::uint32_t> basis_;
    std::vector<Eigen::Index> index_;
};

/// a(e_j) e_S = (-1)^{#{i in S : i < j}} e_{S + j}, zero when j is in S.
inline CMatrix creation_matrix(const FockSpace& space, const CVector& f) {
    if (f.size() != space.modes()) throw std::invalid_argument("creation_matrix: vector has wrong dimension");
    CMatrix out = CMatrix::Zero(space.dim(), space.dim());
    for (Eigen::Index col = 0; col < space.dim(); ++col) {
        const std::uint32_t s = space.mask(col);
        for (int j = 0; j < space.modes(); ++j) {
            const std::uint32_t bit = std::uint32_t{1} << j;
            if (s & bit || f(j) == complex{}) continue;
            const int below = std::popcount(s & (bit - 1));
            out(space.index(s | bit), col) += (below % 2 ? -1.0 : 1.0) * f(j);
        }
    }
    return out;
}

inline CMatrix annihilation_matrix(const FockSpace& space, const CVector& f) {
    return creation_matrix(space, f).adjoint();
}

/// Second quantisation: <e_T, Gamma(U) e_S> = det U[T, S] for |T| = |S|.
inline UnitaryMatrix gamma(const FockSpace& space, const UnitaryMatrix& u) {
    if (u.dim() != space.modes()) throw std::invalid_argument("gamma: unitary has wrong dimension");
    CMatrix g = CMatrix::Zero(space.dim(), space.dim());
    for (int n = 0; n <= space.modes(); ++n) {
        const auto idx = space.sector(n);
        for (auto r : idx)
            for (auto c : idx) {
                if (n == 0) {
                    g(r, c) = 1.0;
                    continue;
                }
                CMatrix minor(n, n);
                const std::uint32_t tm = space.mask(r), sm = space.mask(c);
                int a = 0;
                for (int i = 0; i < space.modes(); ++i) {
                    if (!(tm >> i & 1u)) continue;
                    int b = 0;
                    for (int j = 0; j < space.modes(); ++j)
                        if (sm >> j & 1u) minor(a, b++) = u.matrix()(i, j);
                    ++a;
                }
                g(r, c) = minor.determinant();
            }
    }
    return UnitaryMatrix(std::move(g), 1e-9);
}

// ---------------------------------------------------------------------------
// Formal CAR polynomials

/// One factor a(v) (starred = false) or a(v)* (starred = true).
struct CARFactor {
    CVector vec;
    bool starred = false;

    bool operator==(const CARFactor& o) const {
        return starred == o.starred && vec.size() == o.vec.size() && vec == o.vec;
    }
};

/// scalar * f_1 f_2 ... f_r, read left to right as an operator product.
struct CARMonomial {
    complex scalar{1.0};
    std::vector<CARFactor> factors;

    /// Every starred factor precedes every plain one.
    bool normal_ordered() const {
        bool seen_plain = false;
        for (const auto& f : factors) {
            if (!f.starred) seen_plain = true;
            else if (seen_plain) return false;
        }
        return true;
    }

    std::size_t degree() const { return factors.size(); }
};

class CARPolynomial {
public:
    CARPolynomial() = default;
    explicit CARPolynomial(std::vector<CARMonomial> terms) : terms_(std::move(terms)) { canonicalize(); }

    static CARPolynomial scalar(complex c) { return CARPolynomial({CARMonomial{c, {}}}); }
    static CARPolynomial identity() { return scalar(1.0); }
    /// a(f)
    static CARPolynomial a(const CVector& f) { return CARPolynomial({CARMonomial{1.0, {{f, false}}}}); }
    /// a(g)*
    static CARPolynomial a_star(const CVector& g) { return CARPolynomial({CARMonomial{1.0, {{g, true}}}}); }

    const std::vector<CARMonomial>& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }

    bool normal_ordered() const {
        return std::all_of(terms_.begin(), terms_.end(), [](const auto& m) { return m.normal_ordered(); });
    }

    CARPolynomial adjoint() const {
        std::vector<CARMonomial> out;
        for (const auto& m : terms_) {
            CARMonomial r{std::conj(m.scalar), {}};
            for (auto it = m.factors.rbegin(); it != m.factors.rend(); ++it) r.factors.push_back({it->vec, !it->starred});
            out.push_back(std::move(r));
        }
        return CARPolynomial(std::move(out));
    }

    friend CARPolynomial operator+(const CARPolynomial& x, const CARPolynomial& y) {
        auto t = x.terms_;
        t.insert(t.end(), y.terms_.begin(), y.terms_.end());
        return CARPolynomial(std::move(t));
    }

    friend CARPolynomial operator*(complex c, const CARPolynomial& x) {
        auto t = x.terms_;
        for (auto& m : t) m.scalar *= c;
        return CARPolynomial(std::move(t));
    }

    friend CARPolynomial operator*(const CARPolynomial& x, const CARPolynomial& y) {
        std::vector<CARMonomial> t;
        for (const auto& a : x.terms_)
            for (const auto& b : y.terms_) {
                CARMonomial m{a.scalar * b.scalar, a.factors};
                m.factors.insert(m.factors.end(), b.factors.begin(), b.factors.end());
                t.push_back(std::move(m));
            }
        return CARPolynomial(std::move(t));
    }

private:
    /// Merges monomials with identical factor lists, drops zero coefficients.
    void canonicalize() {
        std::vector<CARMonomial> merged;
        for (auto& m : terms_) {
            auto it = std::find_if(merged.begin(), merged.end(), [&](const CARMonomial& o) { return o.factors == m.factors; });
            if (it == merged.end()) merged.push_back(std::move(m));
            else it->scalar += m.scalar;
        }
        std::erase_if(merged, [](const CARMonomial& m) { return m.scalar == complex{}; });
        terms_ = std::move(merged);
    }

    std::vector<CARMonomial> terms_;
};

/// Operator realised on Fock space.
inline CMatrix fock_matrix(const FockSpace& space, const CARPolynomial& p) {
    CMatrix out = CMatrix::Zero(space.dim(), space.dim());
    for (const auto& m : p.terms()) {
        CMatrix prod = CMatrix::Identity(space.dim(), space.dim());
        for (const auto& f : m.factors)
            prod = prod * (f.starred ? annihilation_matrix(space, f.vec) : creation_matrix(space, f.vec));
        out += m.scalar * prod;
    }
    return out;
}

/// Rewrites a(f) a(g)* -> <f,g> 1 - a(g)* a(f) until every monomial is normal-ordered.
/// Each rewrite removes one plain-before-starred inversion, so this terminates.
inline CARPolynomial normal_order(const CARPolynomial& p) {
    std::vector<CARMonomial> work(p.terms().begin(), p.terms().end());
    std::vector<CARMonomial> done;
    while (!work.empty()) {
        CARMonomial m = std::move(work.back());
        work.pop_back();
        std::size_t i = 0;
        while (i + 1 < m.factors.size() && !(!m.factors[i].starred && m.factors[i + 1].starred)) ++i;
        if (i + 1 >= m.factors.size()) {
            done.push_back(std::move(m));
            continue;
        }
        const complex fg = inner(m.factors[i].vec, m.factors[i + 1].vec);
        if (fg != complex{}) {
            CARMonomial contracted{m.scalar * fg, {}};
            for (std::size_t j = 0; j < m.factors.size(); ++j)
                if (j != i && j != i + 1) contracted.factors.push_back(m.factors[j]);
            work.push_back(std::move(contracted));
        }
        CARMonomial swapped = std::move(m);
        swapped.scalar = -swapped.scalar;
        std::swap(swapped.factors[i], swapped.factors[i + 1]);
        work.push_back(std::move(swapped));
    }
    return CARPolynomial(std::move(done));
}

// ---------------------------------------------------------------------------
// One-particle unitaries acting on vectors

struct DiagonalUnitary {
    std::vector<double> angles;
};

/// Cyclic shift xi_k -> xi_{k+1 mod dim} on the coordinate basis.
struct CyclicShift {
    Eigen::Index dim = 1;
};

inline CVector apply_power(const UnitaryMatrix& u, const CVector& v, std::int64_t n) {
    return u.power(n) * v;
}

inline CVector apply_power(const DiagonalUnitary& u, const CVector& v, std::int64_t n) {
    if (static_cast<std::size_t>(v.size()) != u.angles.size())
        throw std::invalid_argument("apply_power: dimension mismatch");
    CVector out(v.size());
    const auto an = static_cast<std::uint64_t>(n < 0 ? -n : n);
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        const double c[2] = {0.0, u.angles[k]};
        double t = reduce_phase(c, an);
        if (n < 0) t = -t;
        out(k) = e_turns(t) * v(k);
    }
    return out;
}

inline CVector apply_power(const CyclicShift& u, const CVector& v, std::int64_t n) {
    if (v.size() != u.dim) throw std::invalid_argument("apply_power: dimension mismatch");
    CVector out(v.size());
    const std::int64_t d = u.dim;
    const std::int64_t s = ((n % d) + d) % d;
    for (std::int64_t i = 0; i < d; ++i) out((i + s) % d) = v(i);
    return out;
}

template <typename U>
concept OneParticleUnitary = requires(const U& u, const CVector& v, std::int64_t n) {
    { apply_power(u, v, n) } -> std::convertible_to<CVector>;
};

/// Bogoliubov action alpha_U^n: every vector v in every factor becomes U^n v.
template <OneParticleUnitary U>
CARPolynomial bogoliubov_apply(const U& u, const CARPolynomial& p, std::int64_t n) {
    if (n == 0) return p;
    std::vector<CARMonomial> out;
    for (const auto& m : p.terms()) {
        CARMonomial r{m.scalar, {}};
        for (const auto& f : m.factors) r.factors.push_back({apply_power(u, f.vec, n), f.starred});
        out.push_back(std::move(r));
    }
    return CARPolynomial(std::move(out));
}

/// Dense matrix specialisation: computes U^n once for all factors.
inline CARPolynomial bogoliubov_apply(const UnitaryMatrix& u, const CARPolynomial& p, std::int64_t n) {
    if (n == 0) return p;
    const CMatrix un = u.power(n);
    std::vector<CARMonomial> out;
    for (const auto& m : p.terms()) {
        CARMonomial r{m.scalar, {}};
        for (const auto& f : m.factors) {
            if (f.vec.size() != u.dim()) throw std::invalid_argument("bogoliubov_apply: dimension mismatch");
            r.factors.push_back({un * f.vec, f.starred});
        }
        out.push_back(std::move(r));
    }
    return CARPolynomial(std::move(out));
}

// ---------------------------------------------------------------------------
// Quasi-free states

/// Symbol 0 <= T <= 1 of a gauge-invariant quasi-free state.
class Symbol {
public:
    explicit Symbol(CMatrix t, double tol = 1e-10) : t_(std::move(t)) {
        if (t_.rows() != t_.cols() || t_.rows() == 0) throw std::invalid_argument("Symbol: T must be square");
        if (max_abs(t_ - t_.adjoint()) > tol) throw std::invalid_argument("Symbol: T must be self-adjoint");
        Eigen::SelfAdjointEigenSolver<CMatrix> es(t_, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -tol || es.eigenvalues().maxCoeff() > 1.0 + tol)
            throw std::invalid_argument("Symbol: spectrum of T must lie in [0,1]");
    }

    const CMatrix& matrix() const { return t_; }
    Eigen::Index dim() const { return t_.rows(); }
    /// <T f, g>
    complex pairing(const CVector& f, const CVector& g) const { return inner(CVector(t_ * f), g); }

private:
    CMatrix t_;
};

/// Symbol diagonal in the coordinate basis; never materialises a dense matrix.
class DiagonalSymbol {
public:
    explicit DiagonalSymbol(std::vector<double> lambda) : lambda_(std::move(lambda)) {
        for (double l : lambda_)
            if (l < -1e-10 || l > 1.0 + 1e-10) throw std::invalid_argument("DiagonalSymbol: entries must be in [0,1]");
    }

    Eigen::Index dim() const { return static_cast<Eigen::Index>(lambda_.size()); }
    const std::vector<double>& diagonal() const { return lambda_; }
    complex pairing(const CVector& f, const CVector& g) const {
        complex acc{};
        for (Eigen::Index i = 0; i < f.size(); ++i)
            if (f(i) != complex{} && g(i) != complex{}) acc += lambda_[i] * f(i) * std::conj(g(i));
        return acc;
    }

private:
    std::vector<double> lambda_;
};

template <typename S>
concept QuasiFreeSymbol = requires(const S& s, const CVector& v) {
    { s.pairing(v, v) } -> std::convertible_to<complex>;
    { s.dim() } -> std::convertible_to<Eigen::Index>;
};

/// phi_T(a(g_m)* ... a(g_1)* a(f_1) ... a(f_n)) = delta_{mn} det(<T f_i, g_j>), summed over
/// the normal-ordered form of p.
template <QuasiFreeSymbol S>
complex quasifree_eval(const S& t, const CARPolynomial& p) {
    const CARPolynomial no = p.normal_ordered() ? p : normal_order(p);
    complex total{};
    for (const auto& m : no.terms()) {
        std::vector<const CVector*> starred, plain;
        for (const auto& f : m.factors) (f.starred ? starred : plain).push_back(&f.vec);
        if (starred.size() != plain.size()) continue;
        const auto n = static_cast<Eigen::Index>(plain.size());
        if (n == 0) {
            total += m.scalar;
            continue;
        }
        CMatrix g(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                g(i, j) = t.pairing(*plain[i], *starred[n - 1 - j]);  // g_{j+1} sits at starred[n-1-j]
        total += m.scalar * g.determinant();
    }
    return total;
}

/// Density matrix of phi_T on Fock space. In the eigenbasis v_k of T the state is a
/// product: mode k is empty with probability lambda_k (a(v)* a(v) = 1 - N_v here).
inline DensityState quasifree_density_matrix(const Symbol& t, const FockSpace& space) {
    if (t.dim() != space.modes()) throw std::invalid_argument("quasifree_density_matrix: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(t.matrix());
    const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseMin(1.0);
    CMatrix diag = CMatrix::Zero(space.dim(), space.dim());
    for (Eigen::Index i = 0; i < space.dim(); ++i) {
        const std::uint32_t s = space.mask(i);
        double w = 1.0;
        for (int k = 0; k < space.modes(); ++k) w *= (s >> k & 1u) ? 1.0 - lam(k) : lam(k);
        diag(i, i) = w;
    }
    const CMatrix g = gamma(space, UnitaryMatrix(es.eigenvectors(), 1e-9)).matrix();
    CMatrix rho = g * diag * g.adjoint();
    rho = 0.5 * (rho + rho.adjoint()).eval();
    return DensityState(std::move(rho), 1e-9);
}

// ---------------------------------------------------------------------------
// Flows

inline constexpr std::uint64_t kCounterexampleDimCap = 4'000'001;

struct CounterexampleFlows {
    /// n -> <U^n T U*^n xi_0, xi_0> = mu(n)
    Flow bh_flow;
    /// n -> phi_{(T+I)/2}(a(U*^n xi_0)* a(U*^n xi_0)) = (mu(n) + 1) / 2
    Flow car_flow;
    std::uint64_t valid_N = 0;
};

/// Cyclic truncation to C^{2L+1} (basis xi_{-L}..xi_L) of the bilateral-shift construction
/// with T = sum_{k=1}^{L} mu(k) P_{-k}. Inside n <= L the wraparound is never seen.
inline CounterexampleFlows counterexample_flow(std::uint64_t L, const MoebiusTable& table,
                                               std::uint64_t dim_cap = kCounterexampleDimCap) {
    if (L == 0) throw std::invalid_argument("counterexample_flow: L must be >= 1");
    if (2 * L + 1 > dim_cap)
        throw std::invalid_argument("counterexample_flow: 2L+1 exceeds dimension cap " + std::to_string(dim_cap));
    if (L > table.n_max()) throw std::out_of_range("counterexample_flow: L exceeds table n_max");

    const auto dim = static_cast<Eigen::Index>(2 * L + 1);
    const auto origin = static_cast<Eigen::Index>(L);  // position of xi_0
    std::vector<double> t_diag(dim, 0.0), half_diag(dim, 0.5);
    for (std::uint64_t k = 1; k <= L; ++k) {
        t_diag[origin - k] = table.mu(k);
        half_diag[origin - k] = 0.5 * (table.mu(k) + 1.0);
    }
    const CyclicShift shift{dim};
    CVector xi = CVector::Zero(dim);
    xi(origin) = 1.0;
    const CARPolynomial number_like = CARPolynomial::a_star(xi) * CARPolynomial::a(xi);
    const DiagonalSymbol half(half_diag);

    auto guard = [L](std::uint64_t n, const char* which) {
        if (n == 0 || n > L)
            throw std::out_of_range(std::string(which) + ": n=" + std::to_string(n) + " outside validity window [1, " +
                                    std::to_string(L) + "]");
    };

    CounterexampleFlows out;
    out.valid_N = L;
    out.bh_flow = {[=](std::uint64_t n) -> complex {
                       guard(n, "counterexample bh_flow");
                       const CVector v = apply_power(shift, xi, -static_cast<std::int64_t>(n));
                       complex acc{};
                       for (Eigen::Index i = 0; i < dim; ++i)
                           if (v(i) != complex{}) acc += t_diag[i] * std::norm(v(i));
                       return acc;
                   },
                   1.0, "counterexample B(H)", {}};
    out.car_flow = {[=](std::uint64_t n) -> complex {
                        guard(n, "counterexample car_flow");
                        return quasifree_eval(half, bogoliubov_apply(shift, number_like, -static_cast<std::int64_t>(n)));
                    },
                    1.0, "counterexample CAR", {}};
    return out;
}

/// Upper bound on ||P|| from ||a(f)|| = ||f||.
inline double operator_norm_bound(const CARPolynomial& p) {
    double b = 0.0;
    for (const auto& m : p.terms()) {
        double t = std::abs(m.scalar);
        for (const auto& f : m.factors) t *= f.vec.norm();
        b += t;
    }
    return b;
}

/// n -> phi_T(alpha_U^n(A)) for U = diag(e(theta_k)); never touches the 2^d-dimensional space.
template <QuasiFreeSymbol S>
Flow pure_point_flow(const std::vector<double>& angles, const CARPolynomial& a, const S& t) {
    if (static_cast<Eigen::Index>(angles.size()) != t.dim())
        throw std::invalid_argument("pure_point_flow: symbol dimension differs from number of angles");
    const CARPolynomial ordered = normal_order(a);
    const DiagonalUnitary u{angles};
    return {[ordered, u, t](std::uint64_t n) {
                return quasifree_eval(t, bogoliubov_apply(u, ordered, static_cast<std::int64_t>(n)));
            },
            operator_norm_bound(a), "pure-point CAR d=" + std::to_string(angles.size()), {}};
}

/// a(g_m)* ... a(g_1)* a(f_1) ... a(f_n) with seeded random unit vectors in C^d.
inline CARMonomial random_normal_monomial(Eigen::Index d, int starred, int plain, std::uint64_t seed,
                                          complex scalar = 1.0) {
    CARMonomial m{scalar, {}};
    for (int i = 0; i < starred; ++i) m.factors.push_back({random_unit_vector(d, seed * 7919 + i), true});
    for (int i = 0; i < plain; ++i) m.factors.push_back({random_unit_vector(d, seed * 7919 + 1000 + i), false});
    return m;
}

}  // namespace ncflow
