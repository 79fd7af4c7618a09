#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "flows.hpp"
#include "linalg.hpp"
#include "moebius.hpp"

namespace ncflow {

/// Finite-dimensional C*-algebra M_{k_1} (+) ... (+) M_{k_r}, realised as block-diagonal matrices.
class FdAlgebra {
public:
    explicit FdAlgebra(std::vector<Eigen::Index> block_dims) : dims_(std::move(block_dims)) {
        if (dims_.empty()) throw std::invalid_argument("FdAlgebra: need at least one block");
        for (auto k : dims_)
            if (k <= 0) throw std::invalid_argument("FdAlgebra: block sizes must be positive");
    }

    const std::vector<Eigen::Index>& block_dims() const { return dims_; }
    Eigen::Index matrix_dim() const { return std::accumulate(dims_.begin(), dims_.end(), Eigen::Index{0}); }
    Eigen::Index total_dim() const {
        Eigen::Index s = 0;
        for (auto k : dims_) s += k * k;
        return s;
    }

    Eigen::Index offset(std::size_t block) const {
        Eigen::Index o = 0;
        for (std::size_t i = 0; i < block; ++i) o += dims_.at(i);
        return o;
    }

    CMatrix embed(const std::vector<CMatrix>& blocks) const {
        if (blocks.size() != dims_.size()) throw std::invalid_argument("FdAlgebra::embed: wrong block count");
        CMatrix out = CMatrix::Zero(matrix_dim(), matrix_dim());
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            if (blocks[i].rows() != dims_[i] || blocks[i].cols() != dims_[i])
                throw std::invalid_argument("FdAlgebra::embed: block " + std::to_string(i) + " has wrong size");
            out.block(offset(i), offset(i), dims_[i], dims_[i]) = blocks[i];
        }
        return out;
    }

    /// Places one block and zeros elsewhere.
    CMatrix embed_block(std::size_t block, const CMatrix& a) const {
        std::vector<CMatrix> blocks;
        for (auto k : dims_) blocks.push_back(CMatrix::Zero(k, k));
        blocks.at(block) = a;
        return embed(blocks);
    }

    CMatrix block(const CMatrix& a, std::size_t i) const {
        return a.block(offset(i), offset(i), dims_.at(i), dims_.at(i));
    }

    bool contains(const CMatrix& a, double tol = 1e-12) const {
        if (a.rows() != matrix_dim() || a.cols() != matrix_dim()) return false;
        CMatrix rest = a;
        for (std::size_t i = 0; i < dims_.size(); ++i)
            rest.block(offset(i), offset(i), dims_[i], dims_[i]).setZero();
        return max_abs(rest) <= tol;
    }

private:
    std::vector<Eigen::Index> dims_;
};

/// Steps between polar re-unitarisations of an incrementally built power.
inline constexpr std::uint64_t kReunitarizeEvery = 10'000;

/// n -> trace(rho U^n A U*^n).
///
/// The batch path builds U^n incrementally from a fresh U^first at each block.
inline Flow ad_flow(const UnitaryMatrix& u, const CMatrix& a, const DensityState& rho) {
    if (a.rows() != u.dim() || a.cols() != u.dim() || rho.dim() != u.dim())
        throw std::invalid_argument("ad_flow: dimension mismatch");
    const CMatrix um = u.matrix();
    const CMatrix rm = rho.matrix();
    auto value = [a, rm](const CMatrix& p) -> complex { return (rm * p * a * p.adjoint()).trace(); };
    Flow f;
    f.declared_bound = op_norm(a);
    f.label = "ad(U) dim " + std::to_string(u.dim());
    f.evaluator = [u, value](std::uint64_t n) { return value(u.power(static_cast<std::int64_t>(n))); };
    f.batch = [u, um, value](std::uint64_t first, std::span<complex> out) {
        CMatrix p = u.power(static_cast<std::int64_t>(first));
        std::uint64_t since = 0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (i) {
                p = p * um;
                if (++since == kReunitarizeEvery) {
                    p = polar_unitarize(p);
                    since = 0;
                }
            }
            out[i] = value(p);
        }
    };
    return f;
}

/// Data for (1/N) sum_{n<=N, n=l (p)} mu(n) tr_k(U_1^{phi_1(n)} A_1 ... U_d^{phi_d(n)} A_d).
struct TraceProductSpec {
    std::vector<UnitaryMatrix> unitaries;
    std::vector<CMatrix> contractions;
    /// phi_j coefficients, constant term first; values must be integers.
    std::vector<std::vector<double>> phases;
    std::uint64_t modulus = 1;
    std::uint64_t residue = 0;

    Eigen::Index k() const { return unitaries.empty() ? 0 : unitaries.front().dim(); }

    void validate() const {
        const std::size_t d = unitaries.size();
        if (d == 0) throw std::invalid_argument("TraceProductSpec: d must be >= 1");
        if (contractions.size() != d || phases.size() != d)
            throw std::invalid_argument("TraceProductSpec: need d unitaries, contractions and phases");
        for (std::size_t j = 0; j < d; ++j) {
            if (unitaries[j].dim() != k() || contractions[j].rows() != k() || contractions[j].cols() != k())
                throw std::invalid_argument("TraceProductSpec: all matrices must be k x k");
            if (op_norm(contractions[j]) > 1.0 + 1e-10)
                throw std::invalid_argument("TraceProductSpec: A_" + std::to_string(j + 1) + " is not a contraction");
            for (double c : phases[j])
                if (c != std::floor(c) || !std::isfinite(c))
                    throw std::invalid_argument("TraceProductSpec: phase polynomials must have integer coefficients");
        }
        if (modulus == 0 || residue >= modulus) throw std::invalid_argument("TraceProductSpec: bad residue class");
    }
};

struct TraceProductResult {
    complex value;
    bool two_path = false;
    complex expansion_value;
    double discrepancy = 0.0;
};

namespace detail {

inline std::int64_t integer_poly(const std::vector<double>& coeffs, std::uint64_t n) {
    std::int64_t acc = 0;
    for (std::size_t j = coeffs.size(); j-- > 0;) {
        std::int64_t t;
        if (__builtin_mul_overflow(acc, static_cast<std::int64_t>(n), &t) ||
            __builtin_add_overflow(t, static_cast<std::int64_t>(coeffs[j]), &acc))
            throw std::invalid_argument("integer phase polynomial overflows at n=" + std::to_string(n));
    }
    return acc;
}

}  // namespace detail

inline constexpr double kTwoPathTol = 1e-9;

/// Direct evaluation by matrix powers; optionally re-evaluated through the eigen-expansion
/// (1/k) sum_{t_1..t_d} [moebius exponential sum of sum_j theta^{(j)}_{t_j} phi_j] * B-products,
/// with B_j = W_j* A_j W_{j+1} in the eigenbases W_j. The two must agree to kTwoPathTol.
inline TraceProductResult trace_product_sum(const TraceProductSpec& spec, const MoebiusTable& table,
                                            std::uint64_t N, bool two_path) {
    spec.validate();
    detail::check_horizon(table, N, "trace_product_sum");
    const std::size_t d = spec.unitaries.size();
    const Eigen::Index k = spec.k();

    TraceProductResult res;
    res.value = weighted_average(
        table,
        [&](std::uint64_t n) -> complex {
            if (n % spec.modulus != spec.residue) return {};
            CMatrix prod = CMatrix::Identity(k, k);
            for (std::size_t j = 0; j < d; ++j)
                prod = prod * spec.unitaries[j].power(detail::integer_poly(spec.phases[j], n)) * spec.contractions[j];
            return normalized_trace(prod);
        },
        N);
    if (!two_path) return res;

    std::vector<SpectralDecomp> spectra;
    std::vector<CMatrix> bases;
    std::vector<std::vector<double>> thetas;
    for (const auto& u : spec.unitaries) {
        spectra.push_back(eig_unitary(u));
        // orthonormal eigenbasis assembled from the projections
        CMatrix w(k, k);
        std::vector<double> th;
        Eigen::Index col = 0;
        for (std::size_t g = 0; g < spectra.back().angles.size(); ++g) {
            Eigen::SelfAdjointEigenSolver<CMatrix> es(spectra.back().projections[g]);
            for (Eigen::Index c = k - 1; c >= 0; --c) {
                if (es.eigenvalues()(c) < 0.5) break;
                w.col(col++) = es.eigenvectors().col(c);
                th.push_back(spectra.back().angles[g]);
            }
        }
        if (col != k) throw std::runtime_error("trace_product_sum: eigenbasis assembly failed");
        bases.push_back(std::move(w));
        thetas.push_back(std::move(th));
    }
    std::vector<CMatrix> b(d);
    for (std::size_t j = 0; j < d; ++j) b[j] = bases[j].adjoint() * spec.contractions[j] * bases[(j + 1) % d];

    std::size_t max_deg = 0;
    for (const auto& p : spec.phases) max_deg = std::max(max_deg, p.size());

    complex total{};
    std::vector<Eigen::Index> t(d, 0);
    for (;;) {
        complex coeff = 1.0;
        for (std::size_t j = 0; j < d; ++j) coeff *= b[j](t[j], t[(j + 1) % d]);
        if (coeff != complex{}) {
            PolynomialPhase ph{std::vector<double>(max_deg, 0.0), spec.modulus, spec.residue};
            for (std::size_t j = 0; j < d; ++j)
                for (std::size_t i = 0; i < spec.phases[j].size(); ++i)
                    ph.coeffs[i] += thetas[j][t[j]] * spec.phases[j][i];
            total += exp_sum(table, ph, N) * coeff;
        }
        std::size_t j = 0;
        while (j < d && ++t[j] == k) t[j++] = 0;
        if (j == d) break;
    }
    res.two_path = true;
    res.expansion_value = total / static_cast<double>(k);
    res.discrepancy = std::abs(res.expansion_value - res.value);
    if (res.discrepancy > kTwoPathTol)
        throw std::runtime_error("trace_product_sum: direct and eigen-expansion paths differ by " +
                                 std::to_string(res.discrepancy));
    return res;
}

/// n -> <U*^n P_xi U^n eta, eta> = |<U^n eta, xi>|^2.
inline Flow rank_one_flow(const UnitaryMatrix& u, const CVector& xi, const CVector& eta) {
    if (xi.size() != u.dim() || eta.size() != u.dim())
        throw std::invalid_argument("rank_one_flow: dimension mismatch");
    if (std::abs(xi.norm() - 1.0) > 1e-10 || std::abs(eta.norm() - 1.0) > 1e-10)
        throw std::invalid_argument("rank_one_flow: xi and eta must be unit vectors");
    const SpectralDecomp sd = eig_unitary(u);
    std::vector<complex> c;
    for (const auto& p : sd.projections) c.push_back(inner(CVector(p * eta), xi));
    const std::vector<double> angles = sd.angles;
    return {[c, angles](std::uint64_t n) {
                complex amp{};
                for (std::size_t k = 0; k < c.size(); ++k) {
                    const double coeffs[2] = {0.0, angles[k]};
                    amp += e_turns(reduce_phase(coeffs, n)) * c[k];
                }
                return complex(std::norm(amp), 0.0);
            },
            1.0, "rank-one", {}};
}

struct QuantizedUnitary {
    UnitaryMatrix v;
    SpectralDecomp spectrum;
    std::uint64_t grid = 0;
    /// max over sampled n in {1, N/2, N} of ||U^n - V^n||.
    double max_sampled_error = 0.0;
};

inline constexpr std::uint64_t kQuantizeGridCap = std::uint64_t{1} << 40;

/// Rounds U's eigenphases to the grid (1/m)Z with m = ceil(2 pi N / eps); then
/// ||U^n - V^n|| <= n ||U - V|| <= eps for n <= N.
inline QuantizedUnitary quantize_unitary(const UnitaryMatrix& u, double eps, std::uint64_t N,
                                         std::uint64_t grid_cap = kQuantizeGridCap) {
    if (!(eps > 0.0)) throw std::invalid_argument("quantize_unitary: eps must be positive");
    if (N == 0) throw std::invalid_argument("quantize_unitary: N must be >= 1");
    const double m_real = std::ceil(2.0 * std::numbers::pi * static_cast<double>(N) / eps);
    if (!(m_real <= static_cast<double>(grid_cap)))
        throw std::invalid_argument("quantize_unitary: required grid m = " + std::to_string(m_real) +
                                    " exceeds cap " + std::to_string(grid_cap));
    const auto m = static_cast<std::uint64_t>(m_real);
    const SpectralDecomp sd = eig_unitary(u);

    SpectralDecomp q;
    bool unchanged = true;
    for (std::size_t i = 0; i < sd.angles.size(); ++i) {
        const double md = static_cast<double>(m);
        double a = std::round(sd.angles[i] * md) / md;
        if (a >= 1.0) a -= 1.0;
        unchanged = unchanged && a == sd.angles[i];
        q.angles.push_back(a);
        q.projections.push_back(sd.projections[i]);
    }
    CMatrix vm = unchanged ? u.matrix() : q.reconstruct();
    QuantizedUnitary out{UnitaryMatrix(vm, 1e-9), q, m, 0.0};

    for (std::uint64_t n : {std::uint64_t{1}, std::max<std::uint64_t>(1, N / 2), N}) {
        const double err = op_norm(u.power(static_cast<std::int64_t>(n)) - out.v.power(static_cast<std::int64_t>(n)));
        out.max_sampled_error = std::max(out.max_sampled_error, err);
    }
    if (out.max_sampled_error > eps)
        throw std::runtime_error("quantize_unitary: sampled ||U^n - V^n|| = " +
                                 std::to_string(out.max_sampled_error) + " exceeds eps");
    return out;
}

/// Averages of n -> tau(U*^n T U^n A A*) / tau(A A*) and the decomposed bound through V.
struct FiniteVnBound {
    complex s_u;
    complex s_v_direct;
    complex s_v_expanded;
    /// 2 eps ||T|| ||A||^2 / tau(AA*)
    double eps_term = 0.0;
    /// |sum_{l,k} es(theta_l - theta_k) tau(P_k T P_l AA*)| / tau(AA*)
    double expanded_term = 0.0;
    /// max |es| * ||T||_2 ||AA*||_2 / tau(AA*)
    double cs_term = 0.0;
    double bound = 0.0;
    double bound_cs = 0.0;
    /// sum_{l,k} |tau(P_k T P_l AA*)| and ||T||_2 ||AA*||_2
    double cs_lhs = 0.0;
    double cs_rhs = 0.0;
    /// sum_{l,k} ||P_k T P_l||_2^2 against ||T||_2^2
    double pythagoras_lhs = 0.0;
    double pythagoras_rhs = 0.0;
};

inline FiniteVnBound finite_vn_average_bound(const UnitaryMatrix& u, const QuantizedUnitary& vq, double eps,
                                             const CMatrix& t, const CMatrix& a, const MoebiusTable& table,
                                             std::uint64_t N) {
    const Eigen::Index k = u.dim();
    if (t.rows() != k || a.rows() != k || vq.v.dim() != k)
        throw std::invalid_argument("finite_vn_average_bound: dimension mismatch");
    if (op_norm(t) > 1.0 + 1e-10) throw std::invalid_argument("finite_vn_average_bound: ||T|| must be <= 1");
    const CMatrix aa = a * a.adjoint();
    const double norm_state = normalized_trace(aa).real();
    if (!(norm_state > 0.0)) throw std::invalid_argument("finite_vn_average_bound: A must be nonzero");

    FiniteVnBound out;
    auto conj_flow = [&](const UnitaryMatrix& w) {
        return [&, w](std::uint64_t n) -> complex {
            const CMatrix p = w.power(static_cast<std::int64_t>(n));
            return normalized_trace(p.adjoint() * t * p * aa) / norm_state;
        };
    };
    out.s_u = weighted_average(table, conj_flow(u), N);
    out.s_v_direct = weighted_average(table, conj_flow(vq.v), N);

    const auto& sd = vq.spectrum;
    complex sum{};
    double max_es = 0.0;
    for (std::size_t l = 0; l < sd.angles.size(); ++l)
        for (std::size_t kk = 0; kk < sd.angles.size(); ++kk) {
            const CMatrix ptp = sd.projections[kk] * t * sd.projections[l];
            const complex tr = normalized_trace(ptp * aa);
            const complex es = exp_sum(table, PolynomialPhase::linear(sd.angles[l] - sd.angles[kk]), N);
            max_es = std::max(max_es, std::abs(es));
            sum += es * tr;
            out.cs_lhs += std::abs(tr);
            out.pythagoras_lhs += std::pow(hs_norm(ptp), 2);
        }
    out.s_v_expanded = sum / norm_state;
    out.cs_rhs = hs_norm(t) * hs_norm(aa);
    out.pythagoras_rhs = std::pow(hs_norm(t), 2);
    out.eps_term = 2.0 * eps * op_norm(t) * std::pow(op_norm(a), 2) / norm_state;
    out.expanded_term = std::abs(sum) / norm_state;
    out.cs_term = max_es * out.cs_rhs / norm_state;
    out.bound = out.eps_term + out.expanded_term;
    out.bound_cs = out.eps_term + out.cs_term;
    return out;
}

}  // namespace ncflow
