#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "summation.hpp"

namespace ncflow {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr double kUnitaryTol = 1e-10;
inline constexpr double kDegeneracyTurns = 1e-9;

inline bool all_finite(const CMatrix& a) {
    return a.real().allFinite() && a.imag().allFinite();
}

inline double max_abs(const CMatrix& a) {
    return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

/// <f, g>, linear in the first argument.
inline complex inner(const CVector& f, const CVector& g) {
    return g.dot(f);
}

inline double op_norm(const CMatrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<CMatrix> svd(a);
    return svd.singularValues()(0);
}

/// Sum of singular values.
inline double trace_norm(const CMatrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<CMatrix> svd(a);
    return svd.singularValues().sum();
}

inline complex normalized_trace(const CMatrix& a) {
    if (a.rows() != a.cols() || a.rows() == 0)
        throw std::invalid_argument("normalized_trace: matrix must be square and nonempty");
    return a.trace() / static_cast<double>(a.rows());
}

/// Tracial 2-norm tr_k(A* A)^{1/2}.
inline double hs_norm(const CMatrix& a) {
    if (a.rows() != a.cols() || a.rows() == 0)
        throw std::invalid_argument("hs_norm: matrix must be square and nonempty");
    return a.norm() / std::sqrt(static_cast<double>(a.rows()));
}

/// (A (x) B)[(i1,i2),(j1,j2)] = A[i1,j1] B[i2,j2], pairs flattened row-major.
inline CMatrix tensor(const CMatrix& a, const CMatrix& b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline CVector tensor(const CVector& a, const CVector& b) {
    CVector out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

inline CMatrix direct_sum(const CMatrix& a, const CMatrix& b) {
    CMatrix out = CMatrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
    out.topLeftCorner(a.rows(), a.cols()) = a;
    out.bottomRightCorner(b.rows(), b.cols()) = b;
    return out;
}

/// Nearest unitary in the polar sense: W V* from the SVD W S V*.
inline CMatrix polar_unitarize(const CMatrix& m) {
    Eigen::JacobiSVD<CMatrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

/// A square matrix with U U* = I to within kUnitaryTol (max-entry norm).
class UnitaryMatrix {
public:
    explicit UnitaryMatrix(CMatrix m, double tol = kUnitaryTol) : m_(std::move(m)) {
        if (m_.rows() != m_.cols() || m_.rows() == 0)
            throw std::invalid_argument("UnitaryMatrix: matrix must be square and nonempty");
        if (!all_finite(m_)) throw std::invalid_argument("UnitaryMatrix: non-finite entries");
        const double err = max_abs(m_ * m_.adjoint() - CMatrix::Identity(m_.rows(), m_.cols()));
        if (err > tol)
            throw std::invalid_argument("UnitaryMatrix: ||U U* - I||_max = " + std::to_string(err));
    }

    static UnitaryMatrix identity(Eigen::Index dim) { return UnitaryMatrix(CMatrix::Identity(dim, dim)); }

    static UnitaryMatrix diagonal(const std::vector<double>& angles) {
        CMatrix m = CMatrix::Zero(angles.size(), angles.size());
        for (std::size_t k = 0; k < angles.size(); ++k) m(k, k) = e_turns(angles[k]);
        return UnitaryMatrix(std::move(m));
    }

    const CMatrix& matrix() const { return m_; }
    Eigen::Index dim() const { return m_.rows(); }
    UnitaryMatrix adjoint() const { return UnitaryMatrix(m_.adjoint(), 1e-8); }

    /// U^n by binary powering; negative n uses U*.
    CMatrix power(std::int64_t n) const {
        CMatrix base = n < 0 ? CMatrix(m_.adjoint()) : m_;
        std::uint64_t e = n < 0 ? static_cast<std::uint64_t>(-n) : static_cast<std::uint64_t>(n);
        CMatrix acc = CMatrix::Identity(dim(), dim());
        while (e) {
            if (e & 1u) acc = acc * base;
            e >>= 1;
            if (e) base = base * base;
        }
        return acc;
    }

    UnitaryMatrix operator*(const UnitaryMatrix& o) const { return UnitaryMatrix(m_ * o.m_, 1e-8); }

private:
    CMatrix m_;
};

/// Density matrix: Hermitian, positive semidefinite, unit trace.
class DensityState {
public:
    explicit DensityState(CMatrix rho, double tol = kUnitaryTol) : rho_(std::move(rho)) {
        if (rho_.rows() != rho_.cols() || rho_.rows() == 0)
            throw std::invalid_argument("DensityState: matrix must be square and nonempty");
        if (!all_finite(rho_)) throw std::invalid_argument("DensityState: non-finite entries");
        if (max_abs(rho_ - rho_.adjoint()) > tol)
            throw std::invalid_argument("DensityState: not Hermitian");
        if (std::abs(rho_.trace() - complex(1.0)) > tol)
            throw std::invalid_argument("DensityState: trace differs from 1");
        Eigen::SelfAdjointEigenSolver<CMatrix> es(rho_, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -tol)
            throw std::invalid_argument("DensityState: negative eigenvalue " +
                                        std::to_string(es.eigenvalues().minCoeff()));
    }

    static DensityState pure(const CVector& psi) {
        const CVector v = psi / psi.norm();
        return DensityState(v * v.adjoint());
    }

    const CMatrix& matrix() const { return rho_; }
    Eigen::Index dim() const { return rho_.rows(); }

    /// trace(rho X)
    complex expect(const CMatrix& x) const {
        if (x.rows() != dim() || x.cols() != dim())
            throw std::invalid_argument("DensityState::expect: dimension mismatch");
        return (rho_ * x).trace();
    }

private:
    CMatrix rho_;
};

/// Eigenphases (turns, ascending in [0,1)) with the matching orthogonal projections.
struct SpectralDecomp {
    std::vector<double> angles;
    std::vector<CMatrix> projections;

    CMatrix reconstruct() const {
        CMatrix out = CMatrix::Zero(projections.front().rows(), projections.front().cols());
        for (std::size_t k = 0; k < angles.size(); ++k) out += e_turns(angles[k]) * projections[k];
        return out;
    }

    /// sum_k e(n theta_k) P_k, with n theta_k reduced mod 1 in double-double.
    CMatrix power(std::int64_t n) const {
        CMatrix out = CMatrix::Zero(projections.front().rows(), projections.front().cols());
        for (std::size_t k = 0; k < angles.size(); ++k) {
            const double coeffs[2] = {0.0, angles[k]};
            double t = reduce_phase(coeffs, static_cast<std::uint64_t>(n < 0 ? -n : n));
            if (n < 0) t = -t;
            out += e_turns(t) * projections[k];
        }
        return out;
    }
};

/// Spectral decomposition of a unitary via the complex Schur form, which is
/// diagonal for normal matrices and always has an orthonormal basis.
inline SpectralDecomp eig_unitary(const UnitaryMatrix& u) {
    const auto k = u.dim();
    Eigen::ComplexSchur<CMatrix> schur(u.matrix());
    if (schur.info() != Eigen::Success) throw std::runtime_error("eig_unitary: Schur decomposition failed");
    const CMatrix& t = schur.matrixT();
    const CMatrix& q = schur.matrixU();

    struct Mode {
        double angle;
        Eigen::Index col;
    };
    std::vector<Mode> modes;
    modes.reserve(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        double a = std::arg(t(i, i)) / (2.0 * std::numbers::pi);
        if (a < 0) a += 1.0;
        if (a >= 1.0) a -= 1.0;
        modes.push_back({a, i});
    }
    std::sort(modes.begin(), modes.end(), [](const Mode& x, const Mode& y) { return x.angle < y.angle; });

    std::vector<std::vector<Mode>> groups;
    for (const auto& m : modes) {
        if (!groups.empty() && m.angle - groups.back().back().angle < kDegeneracyTurns)
            groups.back().push_back(m);
        else
            groups.push_back({m});
    }
    // circle wraparound: a cluster straddling 0 ~ 1 becomes one group at the front
    if (groups.size() > 1 && groups.front().front().angle + 1.0 - groups.back().back().angle < kDegeneracyTurns) {
        for (auto& m : groups.back()) {
            m.angle -= 1.0;
            groups.front().insert(groups.front().begin(), m);
        }
        groups.pop_back();
    }

    SpectralDecomp out;
    for (const auto& g : groups) {
        double mean = 0.0;
        CMatrix p = CMatrix::Zero(k, k);
        for (const auto& m : g) {
            mean += m.angle;
            p += q.col(m.col) * q.col(m.col).adjoint();
        }
        mean /= static_cast<double>(g.size());
        if (mean < 0) mean += 1.0;
        if (mean >= 1.0) mean = 0.0;  // -tiny + 1 rounds to 1
        out.angles.push_back(mean);
        out.projections.push_back(std::move(p));
    }
    // the wrap fix-up can leave the first group above later ones
    std::vector<std::size_t> order(out.angles.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return out.angles[a] < out.angles[b]; });
    SpectralDecomp sorted;
    for (auto i : order) {
        sorted.angles.push_back(out.angles[i]);
        sorted.projections.push_back(std::move(out.projections[i]));
    }
    return sorted;
}

// ---------------------------------------------------------------------------
// Seeded random instances. The seed is always explicit.

inline CMatrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    CMatrix z(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double re = g(rng);
            const double im = g(rng);
            z(i, j) = complex(re, im) / std::sqrt(2.0);
        }
    return z;
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with R's diagonal phases removed.
inline UnitaryMatrix haar_unitary(Eigen::Index dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const CMatrix z = gaussian_matrix(dim, dim, rng);
    Eigen::HouseholderQR<CMatrix> qr(z);
    CMatrix q = qr.householderQ() * CMatrix::Identity(dim, dim);
    const CMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < dim; ++i) {
        const complex d = r(i, i);
        const double a = std::abs(d);
        if (a > 0) q.col(i) *= d / a;
    }
    return UnitaryMatrix(q);
}

inline CVector random_unit_vector(Eigen::Index dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    CVector v = gaussian_matrix(dim, 1, rng);
    return v / v.norm();
}

/// Random full-rank density matrix G G* / tr(G G*).
inline DensityState random_density(Eigen::Index dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const CMatrix g = gaussian_matrix(dim, dim, rng);
    CMatrix rho = g * g.adjoint();
    rho /= rho.trace().real();
    rho = 0.5 * (rho + rho.adjoint()).eval();
    return DensityState(rho);
}

/// Random matrix rescaled to operator norm exactly 1.
inline CMatrix random_contraction(Eigen::Index dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    CMatrix a = gaussian_matrix(dim, dim, rng);
    return a / op_norm(a);
}

/// Random Hermitian matrix with spectrum in [0,1].
inline CMatrix random_positive_contraction(Eigen::Index dim, std::uint64_t seed) {
    const UnitaryMatrix w = haar_unitary(dim, seed);
    std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd lam(dim);
    for (Eigen::Index i = 0; i < dim; ++i) lam(i) = u(rng);
    CMatrix t = w.matrix() * lam.cast<complex>().asDiagonal() * w.matrix().adjoint();
    return 0.5 * (t + t.adjoint());
}

}  // namespace ncflow
