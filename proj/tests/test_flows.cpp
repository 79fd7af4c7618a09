#include <gtest/gtest.h>

#include "ncflow/flows.hpp"
#include "ncflow/matrix_dynamics.hpp"

using namespace ncflow;

namespace {

const MoebiusTable& table() {
    static const MoebiusTable t = build_table(300'000);
    return t;
}

}  // namespace

TEST(Checkpoints, GeometricDefaults) {
    const std::vector<std::uint64_t> want = {1000, 3162, 10000, 31623, 100000, 316228, 1000000};
    EXPECT_EQ(geometric_checkpoints(), want);
    EXPECT_EQ(geometric_checkpoints(1, 2, 1), (std::vector<std::uint64_t>{10, 100}));
}

TEST(AverageSeries, ZeroRotationIsMertens) {
    const std::vector<std::uint64_t> cps = {10, 100, 1000, 10000};
    const auto s = average_series(rotation_flow(0.0), table(), cps);
    for (std::size_t i = 0; i < cps.size(); ++i) {
        EXPECT_EQ(s.values[i].real(), static_cast<double>(mertens(table(), cps[i])) / static_cast<double>(cps[i]));
        EXPECT_EQ(s.running_bound[i], squarefree_density(table(), cps[i]));
    }
}

TEST(AverageSeries, RotationAgreesWithExpSumBitForBit) {
    const double theta = 0.7548776662466927;
    const std::vector<std::uint64_t> cps = {777, 50'000, 123'457};
    const auto s = average_series(rotation_flow(theta), table(), cps);
    for (std::size_t i = 0; i < cps.size(); ++i)
        EXPECT_EQ(s.values[i], exp_sum(table(), PolynomialPhase::linear(theta), cps[i]));
}

TEST(AverageSeries, WorkersDoNotChangeBits) {
    const auto f = ad_flow(haar_unitary(4, 5), random_contraction(4, 6), random_density(4, 7));
    const std::vector<std::uint64_t> cps = {1000, 25'001, 100'000};
    const auto serial = average_series(f, table(), cps, 1);
    for (unsigned w : {2u, 3u, 4u}) {
        const auto par = average_series(f, table(), cps, w);
        for (std::size_t i = 0; i < cps.size(); ++i) EXPECT_EQ(par.values[i], serial.values[i]) << w;
    }
}

TEST(AverageSeries, Linearity) {
    const Flow a = rotation_flow(0.31), b = rotation_flow(0.123);
    const complex wa(0.4, 0.2), wb(-0.25, 0.0);
    const std::vector<std::uint64_t> cps = {5000, 60'000};
    const auto sa = average_series(a, table(), cps), sb = average_series(b, table(), cps);
    const auto sc = average_series(combine({{wa, a}, {wb, b}}), table(), cps);
    for (std::size_t i = 0; i < cps.size(); ++i)
        EXPECT_NEAR(std::abs(sc.values[i] - (wa * sa.values[i] + wb * sb.values[i])), 0.0, 1e-12);
}

TEST(AverageSeries, RejectsBadCheckpoints) {
    const auto f = rotation_flow(0.1);
    const std::vector<std::uint64_t> none, zero = {0, 5}, down = {10, 5}, dup = {5, 5}, big = {1'000'000};
    EXPECT_THROW(average_series(f, table(), none), std::invalid_argument);
    EXPECT_THROW(average_series(f, table(), zero), std::invalid_argument);
    EXPECT_THROW(average_series(f, table(), down), std::invalid_argument);
    EXPECT_THROW(average_series(f, table(), dup), std::invalid_argument);
    EXPECT_THROW(average_series(f, table(), big), std::out_of_range);
}

TEST(AverageSeries, DeclaredBoundIsEnforced) {
    Flow liar{[](std::uint64_t n) { return complex(n == 4321 ? 1.5 : 0.5); }, 1.0, "liar", {}};
    const std::vector<std::uint64_t> cps = {10'000};
    try {
        average_series(liar, table(), cps, 2);
        FAIL() << "expected a bound violation";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("n=4321"), std::string::npos);
    }
    Flow nan{[](std::uint64_t n) { return complex(n == 17 ? std::nan("") : 0.0); }, 1.0, "nan", {}};
    EXPECT_THROW(average_series(nan, table(), cps), std::runtime_error);
}

TEST(AverageSeries, EvaluatorExceptionsKeepTheirType) {
    Flow f{[](std::uint64_t n) -> complex {
               if (n > 500) throw std::out_of_range("window");
               return 0.0;
           },
           1.0, "windowed", {}};
    const std::vector<std::uint64_t> cps = {1000};
    EXPECT_THROW(average_series(f, table(), cps, 1), std::out_of_range);
    EXPECT_THROW(average_series(f, table(), cps, 3), std::out_of_range);
}

TEST(DecayFit, RecoversSyntheticPowerOfLog) {
    AverageSeries s;
    for (std::uint64_t N : geometric_checkpoints()) {
        s.checkpoints.push_back(N);
        s.values.push_back(complex(0.0, 2.5 * std::pow(std::log(static_cast<double>(N)), -1.7)));
        s.running_bound.push_back(1.0);
    }
    const auto fit = decay_fit(s);
    EXPECT_NEAR(fit.C, 2.5, 1e-10);
    EXPECT_NEAR(fit.h, 1.7, 1e-12);
    EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
    EXPECT_EQ(fit.points_used, s.checkpoints.size());
}

TEST(DecayFit, ZerosAndDegenerateInput) {
    AverageSeries zero{{10, 100, 1000}, {0.0, 0.0, 0.0}, {1, 1, 1}};
    const auto f = decay_fit(zero);
    EXPECT_TRUE(f.exact_zero_series);
    EXPECT_TRUE(std::isinf(f.h));
    EXPECT_EQ(f.zeros_dropped, 3u);

    AverageSeries partial{{10, 100, 1000, 10000}, {0.5, 0.0, 0.25, 0.2}, {1, 1, 1, 1}};
    EXPECT_EQ(decay_fit(partial).zeros_dropped, 1u);
    AverageSeries few{{10, 100, 1000}, {0.5, 0.0, 0.25}, {1, 1, 1}};
    EXPECT_THROW(decay_fit(few), std::invalid_argument);
    AverageSeries small{{2, 100, 1000}, {0.5, 0.3, 0.25}, {1, 1, 1}};
    EXPECT_THROW(decay_fit(small), std::invalid_argument);
}

TEST(Bsz, GoldenRotationPassesConstantFails) {
    const auto t = build_table(2'000'000);
    const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
    const auto r = bsz_check(rotation_flow(golden), t, 0.25, 10'000, 100'000);
    EXPECT_TRUE(r.hypothesis_holds);
    EXPECT_TRUE(r.bound_respected);
    EXPECT_EQ(r.prime_cap, 54u);  // floor(e^4)
    EXPECT_FALSE(r.cap_truncated);
    EXPECT_EQ(r.prime_pairs_checked, 16u * 15u / 2u);
    EXPECT_NEAR(r.paper_bound, 2.0 * std::sqrt(0.25 * std::log(4.0)) * 1e5, 1e-6);

    const auto c = bsz_check(constant_flow(1.0), t, 0.25, 10'000, 100'000);
    EXPECT_FALSE(c.hypothesis_holds);
    EXPECT_NEAR(c.max_correlation_ratio, 1.0, 1e-12);
    EXPECT_NEAR(c.mobius_sum_abs, 48.0, 1e-9);
}

TEST(Bsz, CapIsTruncatedBySieveHorizon) {
    const auto r = bsz_check(rotation_flow(0.3), table(), 0.1, 10'000, 1000);
    EXPECT_EQ(r.prime_cap, 30u);
    EXPECT_TRUE(r.cap_truncated);
    EXPECT_THROW(bsz_check(rotation_flow(0.3), table(), 1.5, 10, 10), std::invalid_argument);
    EXPECT_THROW(bsz_check(constant_flow(2.0), table(), 0.5, 10, 10), std::invalid_argument);
}

TEST(Periodic, TabulatedValuesMatchDirectEvaluation) {
    const auto w = haar_unitary(3, 2);
    const CMatrix d = UnitaryMatrix::diagonal({0.0, 1.0 / 6, 2.0 / 3}).matrix();
    const UnitaryMatrix u(w.matrix() * d * w.matrix().adjoint());
    EXPECT_EQ(find_period(u), 6u);
    const auto rho = random_density(3, 4);
    const CMatrix a = random_contraction(3, 5);
    const auto f = periodic_flow(u, rho, a);
    for (std::uint64_t n = 0; n < 20; ++n) {
        const CMatrix p = u.power(static_cast<std::int64_t>(n));
        EXPECT_NEAR(std::abs(f(n) - rho.expect(p.adjoint() * a * p)), 0.0, 1e-12);
    }
    EXPECT_THROW(periodic_flow(haar_unitary(3, 1), rho, a, 50), std::invalid_argument);
}
