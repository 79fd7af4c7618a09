#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>

namespace ncflow {

using complex = std::complex<double>;

/// Pairwise (cascade) summation with a fixed tree shape.
///
/// The tree depends only on the length of the input, so any two callers that
/// hand in the same terms get bit-identical results regardless of how the
/// terms were produced.
template <typename T>
T pairwise_sum(std::span<const T> terms) {
    constexpr std::size_t kLeaf = 16;
    if (terms.size() <= kLeaf) {
        T acc{};
        for (const auto& t : terms) acc += t;
        return acc;
    }
    const std::size_t half = terms.size() / 2;
    return pairwise_sum(terms.first(half)) + pairwise_sum(terms.subspan(half));
}

namespace detail {

inline void two_sum(double a, double b, double& s, double& err) {
    s = a + b;
    const double bb = s - a;
    err = (a - (s - bb)) + (b - bb);
}

inline void fast_two_sum(double a, double b, double& s, double& err) {
    s = a + b;
    err = b - (s - a);
}

}  // namespace detail

/// Fractional part of a_d n^d + ... + a_0, in [0, 1).
///
/// Horner evaluation in double-double with a reduction mod 1 after every
/// step, so the integer part never grows and the fractional digits survive
/// for n up to ~2^40 and any degree.
inline double reduce_phase(std::span<const double> coeffs, std::uint64_t n) {
    if (coeffs.empty()) return 0.0;
    const double x = static_cast<double>(n);
    double hi = coeffs.back() - std::floor(coeffs.back());
    double lo = 0.0;
    for (std::size_t j = coeffs.size() - 1; j-- > 0;) {
        const double p = hi * x;
        const double ep = std::fma(hi, x, -p);
        const double q = lo * x;
        const double a = coeffs[j] - std::floor(coeffs[j]);
        double s, es;
        detail::two_sum(p, a, s, es);
        s -= std::floor(s);
        double tail = ep + es + q;
        const double k = std::floor(s + tail);
        s -= k;
        detail::fast_two_sum(s, tail, hi, lo);
        // keep hi in [0,1) after the renormalisation above
        const double k2 = std::floor(hi);
        hi -= k2;
    }
    double r = hi + lo;
    r -= std::floor(r);
    if (r >= 1.0) r = 0.0;
    return r;
}

/// e(x) = exp(2 pi i x) for x given in turns.
inline complex e_turns(double turns) {
    const double r = turns - std::floor(turns);
    const double ang = 2.0 * std::numbers::pi * r;
    return {std::cos(ang), std::sin(ang)};
}

}  // namespace ncflow
