#include <gtest/gtest.h>

#include <random>

#include "ncflow/free_words.hpp"

using namespace ncflow;

namespace {

ReducedWord random_word(std::mt19937_64& rng, int len, int gens) {
    std::vector<std::pair<std::int64_t, int>> letters;
    for (int i = 0; i < len; ++i)
        letters.emplace_back(static_cast<std::int64_t>(rng() % gens) - gens / 2, (rng() & 1u) ? 1 : -1);
    return ReducedWord::from_letters(letters);
}

GroupElementSum<Rational> random_sum(std::mt19937_64& rng, int terms) {
    GroupElementSum<Rational> s;
    for (int i = 0; i < terms; ++i)
        s.add(random_word(rng, 1 + static_cast<int>(rng() % 3), 3), Rational(static_cast<int>(rng() % 7) - 3, 2));
    return s;
}

/// All set partitions of {1..n} as restricted growth strings.
void all_partitions(int n, std::vector<std::uint8_t>& cur, int blocks, std::vector<std::vector<std::uint8_t>>& out) {
    if (static_cast<int>(cur.size()) == n) {
        out.push_back(cur);
        return;
    }
    for (int b = 0; b <= blocks; ++b) {
        cur.push_back(static_cast<std::uint8_t>(b));
        all_partitions(n, cur, std::max(blocks, b + 1), out);
        cur.pop_back();
    }
}

bool crosses(const std::vector<std::uint8_t>& p) {
    const int n = static_cast<int>(p.size());
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            for (int c = b + 1; c < n; ++c)
                for (int d = c + 1; d < n; ++d)
                    if (p[a] == p[c] && p[b] == p[d] && p[a] != p[b]) return true;
    return false;
}

}  // namespace

TEST(Words, Reduction) {
    const auto g0 = ReducedWord::generator(0), g1 = ReducedWord::generator(1);
    EXPECT_TRUE((g0 * g0.inverse()).is_identity());
    const auto w = ReducedWord::from_letters({{0, 1}, {1, 1}, {1, -1}, {0, 1}, {2, -1}});
    EXPECT_EQ(w, ReducedWord::generator(0, 2) * ReducedWord::generator(2, -1));
    EXPECT_EQ(w.length(), 3u);
    EXPECT_EQ(w.syllables().size(), 2u);
    EXPECT_EQ(w.to_string(), "g0^2 g2^-1");
    EXPECT_EQ(ReducedWord{}.to_string(), "e");
    EXPECT_NE(g0 * g1, g1 * g0);
    EXPECT_THROW(ReducedWord::from_letters({{0, 2}}), std::invalid_argument);
}

TEST(Words, GroupAxiomsOnRandomWords) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 300; ++t) {
        const auto a = random_word(rng, 6, 3), b = random_word(rng, 6, 3), c = random_word(rng, 6, 3);
        ASSERT_EQ((a * b) * c, a * (b * c));
        ASSERT_TRUE((a * a.inverse()).is_identity());
        ASSERT_EQ((a * b).inverse(), b.inverse() * a.inverse());
        ASSERT_EQ(ReducedWord::from_letters(a.letters()), a);
        ASSERT_EQ((a * b).shifted(4), a.shifted(4) * b.shifted(4));
    }
}

TEST(GroupSums, TraceIdentities) {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; ++t) {
        const auto x = random_sum(rng, 4), y = random_sum(rng, 4);
        ASSERT_EQ(trace(x * y), trace(y * x));
        Rational sq = 0;
        for (const auto& [w, c] : x.terms()) sq += c * c;
        ASSERT_EQ(trace(x.adjoint() * x), sq);
        ASSERT_EQ(trace(shift(x, 3)), trace(x));
        ASSERT_EQ((x + y).adjoint(), x.adjoint() + y.adjoint());
    }
}

TEST(GroupSums, FourthMomentOfSignedGenerators) {
    for (int r = 1; r <= 4; ++r) {
        GroupElementSum<Rational> b;
        for (int j = 0; j < r; ++j) b.add(ReducedWord::generator(j), Rational(j % 2 ? -1 : 1));
        const auto bb = b.adjoint() * b;
        EXPECT_EQ(trace(bb), Rational(r));
        EXPECT_EQ(trace(bb * bb), Rational(2 * r * r - r)) << r;
    }
}

TEST(GroupSums, ComplexCoefficients) {
    auto x = GroupElementSum<complex>::single(ReducedWord::generator(1), complex(0, 1));
    x.add(ReducedWord{}, 2.0);
    EXPECT_EQ(trace(x.adjoint() * x), complex(5.0));
    EXPECT_EQ(x.adjoint().terms().at(ReducedWord::generator(1, -1)), complex(0, -1));
}

TEST(FreeShift, AveragesVanish) {
    const auto table = build_table(20'000);
    const std::vector<std::uint64_t> cps = {10, 1000, 20'000};
    for (const auto& w : {ReducedWord::generator(0), ReducedWord::product_of({0, 1, -2}),
                          ReducedWord::generator(4) * ReducedWord::generator(1, -1)}) {
        const auto s = average_series(free_shift_flow(w, ReducedWord::generator(3)), table, cps);
        for (const auto& v : s.values) EXPECT_EQ(v, complex{});
    }
    const auto id = average_series(free_shift_flow(ReducedWord{}, ReducedWord::generator(3)), table, cps);
    EXPECT_EQ(id.values[1], complex(0.002));
}

TEST(NonCrossing, CountsAreCatalan) {
    for (int n = 1; n <= 10; ++n) {
        const auto ps = nc_partitions(n);
        EXPECT_EQ(BigInt(ps.size()), catalan(n)) << n;
    }
    EXPECT_EQ(catalan(10), BigInt(16796));
}

TEST(NonCrossing, AgreesWithBruteForce) {
    for (int n = 1; n <= 7; ++n) {
        std::vector<std::vector<std::uint8_t>> all;
        std::vector<std::uint8_t> cur;
        all_partitions(n, cur, 0, all);
        std::set<std::vector<std::uint8_t>> want;
        for (const auto& p : all)
            if (!crosses(p)) want.insert(p);
        std::set<std::vector<std::uint8_t>> got;
        for (const auto& p : nc_partitions(n)) {
            EXPECT_TRUE(is_noncrossing(p.block_of));
            got.insert(p.block_of);
        }
        EXPECT_EQ(got, want) << n;
    }
    EXPECT_FALSE(is_noncrossing({0, 1, 0, 1}));
    EXPECT_THROW(nc_partitions(kMaxNcOrder + 1), std::invalid_argument);
}

TEST(Cumulants, MomentsAreSumsOverNcPartitions) {
    const std::vector<Rational> kappa = {Rational(1, 3), Rational(2), Rational(-1, 5), Rational(3, 7), Rational(1),
                                         Rational(-2, 9), Rational(5)};
    const auto m = cumulants_to_moments(kappa).moments;
    for (int n = 1; n <= 7; ++n) {
        Rational sum = 0;
        for (const auto& p : nc_partitions(n)) {
            Rational prod = 1;
            for (const auto& block : p.blocks()) prod *= kappa[block.size() - 1];
            sum += prod;
        }
        EXPECT_EQ(m[n - 1], sum) << n;
    }
}

TEST(Cumulants, KnownDistributions) {
    const auto semi = moments_to_cumulants(semicircle_moments(10, Rational(3, 4)));
    for (int n = 1; n <= 10; ++n) EXPECT_EQ(semi.kappa[n - 1], n == 2 ? Rational(3, 4) : Rational(0));
    const auto arc = moments_to_cumulants(arcsine_moments(8));
    EXPECT_EQ(arc.kappa[1], Rational(1, 2));
    EXPECT_EQ(arc.kappa[3], Rational(-1, 8));
    EXPECT_EQ(arc.kappa[0], Rational(0));
}

TEST(Cumulants, DoubleRoundTrip) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> m(10);
    for (auto& x : m) x = u(rng);
    const auto k = moments_to_cumulants(m);
    const auto back = cumulants_to_moments(k.kappa);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(back.moments[i], m[i], 1e-12);
}

TEST(FreeClt, FourthMomentFormula) {
    for (int q : {1, 2, 10, 100}) {
        const auto m = free_clt_moments(q, 4);
        EXPECT_EQ(m[3], Rational(1, 2) - Rational(1, 8 * q)) << q;
        EXPECT_EQ(m[1], Rational(1, 2));
        EXPECT_EQ(m[0], Rational(0));
    }
}

TEST(FreeClt, WordExpansionOracle) {
    for (int q : {1, 2, 3}) EXPECT_EQ(free_clt_moments(q, 8), free_clt_word_moments(q, 8)) << q;
}

TEST(FreeClt, ApproachesSemicircle) {
    const auto semi = semicircle_moments(8, Rational(1, 2));
    Rational prev_gap = 1;
    for (int q : {1, 4, 16, 64}) {
        const auto m = free_clt_moments(q, 8);
        const Rational gap = semi[7] - m[7];
        EXPECT_GT(gap, 0);
        EXPECT_LT(gap, prev_gap);
        prev_gap = gap;
    }
    EXPECT_THROW(free_clt_moments(2, kMaxCltOrder + 1), std::invalid_argument);
}

TEST(Bkn, ElementAndMomentNorm) {
    const auto table = build_table(1000);
    const auto b = bkn_element(table, 1, {0, 1}, 1, 6);
    // coefficients mu(1), mu(4), mu(7), mu(10), mu(13), mu(16)
    EXPECT_EQ(b.size(), 4u);
    const auto n2 = moment_norm(b, 6, 2);
    EXPECT_EQ(n2.trace_moment, Rational(4, 36));
    const auto n4 = bkn_moment_norm(table, 1, {0, 1}, 1, 6, 4);
    EXPECT_GE(n4.estimate, n2.estimate - 1e-15);
    EXPECT_THROW(bkn_element(table, 0, {1}, 1, 3), std::invalid_argument);
    EXPECT_THROW(bkn_element(table, 1, {0}, 4, 3), std::invalid_argument);
    EXPECT_THROW(moment_norm(b, 6, 3), std::invalid_argument);
    EXPECT_THROW(moment_norm(b, 6, 8, 10.0), std::invalid_argument);
}
