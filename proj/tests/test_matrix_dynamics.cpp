#include <gtest/gtest.h>

#include "ncflow/matrix_dynamics.hpp"

using namespace ncflow;

namespace {

const MoebiusTable& table() {
    static const MoebiusTable t = build_table(100'000);
    return t;
}

std::vector<complex> terms(const Flow& f, std::uint64_t first, std::size_t count) {
    std::vector<complex> out(count);
    f.fill(first, out);
    return out;
}

TraceProductSpec random_spec(Eigen::Index k, std::size_t d, std::uint64_t seed) {
    TraceProductSpec s;
    for (std::size_t j = 0; j < d; ++j) {
        s.unitaries.push_back(haar_unitary(k, seed + 2 * j));
        s.contractions.push_back(random_contraction(k, seed + 2 * j + 1));
        s.phases.push_back({static_cast<double>(j), static_cast<double>(j + 1), j == 1 ? 1.0 : 0.0});
    }
    return s;
}

}  // namespace

TEST(FdAlgebra, Shapes) {
    const FdAlgebra alg({2, 3, 1});
    EXPECT_EQ(alg.matrix_dim(), 6);
    EXPECT_EQ(alg.total_dim(), 14);
    EXPECT_EQ(alg.offset(2), 5);
    const CMatrix b = random_contraction(3, 1);
    const CMatrix x = alg.embed_block(1, b);
    EXPECT_TRUE(alg.contains(x));
    EXPECT_EQ(alg.block(x, 1), b);
    EXPECT_FALSE(alg.contains(random_contraction(6, 2)));
    EXPECT_THROW(FdAlgebra({}), std::invalid_argument);
    EXPECT_THROW(FdAlgebra({2, 0}), std::invalid_argument);
    EXPECT_THROW(alg.embed({b}), std::invalid_argument);
}

TEST(AdFlow, IdentityObservableGivesMertens) {
    const auto f = ad_flow(haar_unitary(3, 1), CMatrix::Identity(3, 3), random_density(3, 2));
    const std::vector<std::uint64_t> cps = {100, 10'000};
    const auto s = average_series(f, table(), cps);
    EXPECT_NEAR(s.values[0].real(), 0.01, 1e-12);
    EXPECT_NEAR(s.values[1].real(), -0.0023, 1e-12);
}

TEST(AdFlow, DiagonalReducesToRotation) {
    const std::vector<double> th = {0.1, 0.37, 0.8};
    CMatrix e = CMatrix::Zero(3, 3);
    e(0, 2) = 1.0;
    CVector psi(3);
    psi << 1.0, 0.0, 1.0;
    const auto rho = DensityState::pure(psi);
    const auto f = ad_flow(UnitaryMatrix::diagonal(th), e, rho);
    const auto rot = rotation_flow(th[0] - th[2] + 1.0);
    for (std::uint64_t n = 1; n < 200; ++n) EXPECT_NEAR(std::abs(f(n) - 0.5 * rot(n)), 0.0, 1e-12);
}

TEST(AdFlow, BatchPathTracksExactPowers) {
    const auto u = haar_unitary(8, 3);
    const auto f = ad_flow(u, random_contraction(8, 4), random_density(8, 5));
    const auto batch = terms(f, 1, 25'000);
    for (std::uint64_t n : {1ull, 2ull, 9'999ull, 10'001ull, 20'000ull, 25'000ull})
        EXPECT_NEAR(std::abs(batch[n - 1] - f.evaluator(n)), 0.0, 1e-10) << n;
}

TEST(AdFlow, DimensionMismatch) {
    EXPECT_THROW(ad_flow(haar_unitary(3, 1), CMatrix::Identity(2, 2), random_density(3, 1)), std::invalid_argument);
}

TEST(Invariants, ConjugationTermByTerm) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto u = haar_unitary(5, 10 * s), w = haar_unitary(5, 10 * s + 1);
        const auto rho = random_density(5, 10 * s + 2);
        const CMatrix a = random_contraction(5, 10 * s + 3);
        const UnitaryMatrix conj(w.matrix() * u.matrix() * w.matrix().adjoint(), 1e-12);
        const auto lhs = ad_flow(conj, a, rho);
        const DensityState pulled(w.matrix().adjoint() * rho.matrix() * w.matrix(), 1e-12);
        const auto rhs = ad_flow(u, w.matrix().adjoint() * a * w.matrix(), pulled);
        for (std::uint64_t n = 1; n <= 50; ++n) ASSERT_NEAR(std::abs(lhs(n) - rhs(n)), 0.0, 1e-12);
    }
}

TEST(Invariants, BlockRestriction) {
    const FdAlgebra alg({2, 3});
    const auto u1 = haar_unitary(2, 1), u2 = haar_unitary(3, 2);
    const UnitaryMatrix u(alg.embed({u1.matrix(), u2.matrix()}));
    const CMatrix b = random_contraction(3, 3);
    const auto rho2 = random_density(3, 4);
    const DensityState rho(alg.embed({CMatrix::Zero(2, 2), rho2.matrix()}));
    const auto whole = ad_flow(u, alg.embed_block(1, b), rho);
    const auto inner_flow = ad_flow(u2, b, rho2);
    for (std::uint64_t n = 1; n <= 50; ++n) EXPECT_NEAR(std::abs(whole(n) - inner_flow(n)), 0.0, 1e-12);
}

TEST(Invariants, StateApproximation) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto u = haar_unitary(4, s);
        const CMatrix a = random_contraction(4, s + 50);
        const auto rho = random_density(4, s + 100);
        const auto other = random_density(4, s + 200);
        const double mix = 0.01 * static_cast<double>(s + 1);
        const DensityState rho_m(CMatrix((1 - mix) * rho.matrix() + mix * other.matrix()));
        const std::vector<std::uint64_t> cps = {5000};
        const auto s1 = average_series(ad_flow(u, a, rho), table(), cps);
        const auto s2 = average_series(ad_flow(u, a, rho_m), table(), cps);
        const double bound = trace_norm(rho.matrix() - rho_m.matrix()) * op_norm(a);
        EXPECT_LE(std::abs(s1.values[0] - s2.values[0]), bound + 1e-12);
    }
}

TEST(TraceProduct, IdentityDataGivesMertens) {
    TraceProductSpec s;
    for (int j = 0; j < 2; ++j) {
        s.unitaries.push_back(UnitaryMatrix::identity(3));
        s.contractions.push_back(CMatrix::Identity(3, 3));
        s.phases.push_back({0.0, 1.0});
    }
    const auto r = trace_product_sum(s, table(), 1000, true);
    EXPECT_NEAR(r.value.real(), 0.002, 1e-15);
    EXPECT_NEAR(r.discrepancy, 0.0, 1e-12);
}

TEST(TraceProduct, ScalarReduction) {
    const double theta = 0.2718281828;
    TraceProductSpec s;
    s.unitaries.push_back(UnitaryMatrix::diagonal({theta}));
    CMatrix a(1, 1);
    a(0, 0) = complex(0.6, -0.3);
    s.contractions.push_back(a);
    s.phases.push_back({0.0, 1.0});
    const auto r = trace_product_sum(s, table(), 20'000, true);
    EXPECT_NEAR(std::abs(r.value - exp_sum(table(), PolynomialPhase::linear(theta), 20'000) * a(0, 0)), 0.0, 1e-11);
}

TEST(TraceProduct, TwoPathsAgreeOnSeededSpecs) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        auto s = random_spec(2 + static_cast<Eigen::Index>(seed % 3) * 2, 1 + seed % 3, 40 * seed);
        s.modulus = 1 + seed % 2;
        s.residue = seed % s.modulus;
        const auto r = trace_product_sum(s, table(), 1000, true);
        EXPECT_LT(r.discrepancy, 1e-9) << seed;
    }
}

TEST(TraceProduct, Validation) {
    auto s = random_spec(2, 2, 1);
    s.phases[0] = {0.5, 1.0};
    EXPECT_THROW(trace_product_sum(s, table(), 10, false), std::invalid_argument);
    s = random_spec(2, 2, 1);
    s.contractions[1] *= 2.0;
    EXPECT_THROW(trace_product_sum(s, table(), 10, false), std::invalid_argument);
    s = random_spec(2, 2, 1);
    s.phases[0] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1e6};
    EXPECT_THROW(trace_product_sum(s, table(), 100'000, false), std::invalid_argument);
}

TEST(RankOne, TensorIdentity) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto u = haar_unitary(6, s);
        const CVector xi = random_unit_vector(6, s + 10), eta = random_unit_vector(6, s + 20);
        const auto f = rank_one_flow(u, xi, eta);
        for (std::int64_t n = 1; n <= 100; ++n) {
            const CMatrix un = u.power(n);
            const complex rhs = inner(CVector(tensor(un, CMatrix(un.adjoint())) * tensor(eta, xi)), tensor(xi, eta));
            ASSERT_NEAR(std::abs(f(n) - rhs), 0.0, 1e-12);
            ASSERT_NEAR(f(n).real(), std::norm(inner(CVector(un * eta), xi)), 1e-12);
        }
    }
}

TEST(RankOne, EigenvectorAndOrthogonalCases) {
    const auto u = UnitaryMatrix::diagonal({0.1, 0.2, 0.3});
    CVector e0 = CVector::Zero(3), e1 = CVector::Zero(3);
    e0(0) = 1.0;
    e1(1) = 1.0;
    const auto one = rank_one_flow(u, e0, e0), zero = rank_one_flow(u, e1, e0);
    for (std::uint64_t n = 1; n < 50; ++n) {
        EXPECT_NEAR(one(n).real(), 1.0, 1e-14);
        EXPECT_NEAR(std::abs(zero(n)), 0.0, 1e-14);
    }
    EXPECT_THROW(rank_one_flow(u, 2.0 * e0, e0), std::invalid_argument);
}

TEST(Quantize, GridArithmetic) {
    const auto u = UnitaryMatrix::diagonal({0.1234567});
    const auto q = quantize_unitary(u, 0.01, 10);
    const auto m = static_cast<std::uint64_t>(std::ceil(2 * std::numbers::pi * 10 / 0.01));
    EXPECT_EQ(q.grid, m);
    ASSERT_EQ(q.spectrum.angles.size(), 1u);
    EXPECT_LE(std::abs(q.spectrum.angles[0] - 0.1234567), 0.01 / (2 * std::numbers::pi * 10));
    EXPECT_DOUBLE_EQ(q.spectrum.angles[0] * static_cast<double>(m), std::round(0.1234567 * static_cast<double>(m)));
}

TEST(Quantize, AlreadyOnGridIsUnchanged) {
    const auto m = static_cast<double>(static_cast<std::uint64_t>(std::ceil(2 * std::numbers::pi * 10 / 0.1)));
    const auto u = UnitaryMatrix::diagonal({3 / m, 17 / m, 40 / m});
    const auto q = quantize_unitary(u, 0.1, 10);
    EXPECT_EQ(q.v.matrix(), u.matrix());
}

TEST(Quantize, PowersStayClose) {
    for (std::uint64_t s = 0; s < 4; ++s) {
        const auto u = haar_unitary(8, s);
        const auto q = quantize_unitary(u, 0.05, 100);
        for (std::int64_t n = 1; n <= 100; n += 11) EXPECT_LE(op_norm(u.power(n) - q.v.power(n)), 0.05);
    }
    EXPECT_THROW(quantize_unitary(haar_unitary(2, 1), 1e-9, 1'000'000), std::invalid_argument);
    EXPECT_THROW(quantize_unitary(haar_unitary(2, 1), 0.0, 10), std::invalid_argument);
}

TEST(FiniteVn, IdentityTIsConstant) {
    const auto u = haar_unitary(4, 1);
    const auto q = quantize_unitary(u, 0.1, 1000);
    const auto b = finite_vn_average_bound(u, q, 0.1, CMatrix::Identity(4, 4), random_contraction(4, 2), table(), 1000);
    EXPECT_NEAR(b.s_u.real(), 0.002, 1e-14);
    EXPECT_NEAR(b.s_v_direct.real(), 0.002, 1e-14);
}

TEST(FiniteVn, ChainHolds) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto u = haar_unitary(6, s);
        const double eps = 0.05;
        const auto q = quantize_unitary(u, eps, 2000);
        const auto b = finite_vn_average_bound(u, q, eps, random_contraction(6, s + 7), random_contraction(6, s + 8),
                                               table(), 2000);
        EXPECT_NEAR(std::abs(b.s_v_direct - b.s_v_expanded), 0.0, 1e-9);
        EXPECT_LE(std::abs(b.s_u - b.s_v_direct), b.eps_term);
        EXPECT_LE(std::abs(b.s_u), b.bound + 1e-12);
        EXPECT_LE(b.bound, b.bound_cs + 1e-12);
        EXPECT_LE(b.cs_lhs, b.cs_rhs + 1e-12);
        EXPECT_NEAR(b.pythagoras_lhs, b.pythagoras_rhs, 1e-12);
    }
}

TEST(FiniteVn, UnquantizedUnitaryHasNoEpsilonGap) {
    const auto m = static_cast<double>(static_cast<std::uint64_t>(std::ceil(2 * std::numbers::pi * 500 / 0.1)));
    const auto w = haar_unitary(3, 5);
    const CMatrix d = UnitaryMatrix::diagonal({5 / m, 900 / m, 7000 / m}).matrix();
    const UnitaryMatrix u(w.matrix() * d * w.matrix().adjoint());
    const auto q = quantize_unitary(u, 0.1, 500);
    const auto b = finite_vn_average_bound(u, q, 0.1, random_contraction(3, 1), random_contraction(3, 2), table(), 500);
    EXPECT_NEAR(std::abs(b.s_u - b.s_v_expanded), 0.0, 1e-9);
}
