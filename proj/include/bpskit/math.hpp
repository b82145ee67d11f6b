#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include "bpskit/common.hpp"

namespace bpskit::math {

// 16-point Gauss-Legendre rule on [-1,1]; exact for polynomials up to degree 31.
inline constexpr std::array<double, 8> kGl16Nodes = {
    0.0950125098376374401853193, 0.2816035507792589132304605,
    0.4580167776572273863424194, 0.6178762444026437484466718,
    0.7554044083550030338951012, 0.8656312023878317438804679,
    0.9445750230732325760779884, 0.9894009349916499325961542};
inline constexpr std::array<double, 8> kGl16Weights = {
    0.1894506104550684962853967, 0.1826034150449235888667637,
    0.1691565193950025381893121, 0.1495959888165767320815017,
    0.1246289712555338720524763, 0.0951585116824927848099251,
    0.0622535239386478928628438, 0.0271524594117540948517806};

template <typename F>
double gauss_legendre_16(const F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    double sum = 0.0;
    for (std::size_t i = 0; i < kGl16Nodes.size(); ++i) {
        const double dx = h * kGl16Nodes[i];
        sum += kGl16Weights[i] * (f(c - dx) + f(c + dx));
    }
    return h * sum;
}

namespace detail {
template <typename F>
double adaptive_gl_rec(const F& f, double a, double b, double tol, double whole, int depth) {
    const double m = 0.5 * (a + b);
    const double left = gauss_legendre_16(f, a, m);
    const double right = gauss_legendre_16(f, m, b);
    const double refined = left + right;
    if (depth <= 0 || std::abs(refined - whole) <= tol * (1.0 + std::abs(refined))) {
        return refined;
    }
    return adaptive_gl_rec(f, a, m, 0.5 * tol, left, depth - 1) +
           adaptive_gl_rec(f, m, b, 0.5 * tol, right, depth - 1);
}
}  // namespace detail

// Adaptive Gauss-Legendre by interval bisection; nodes are interior, so
// integrable endpoint behaviour (after substitution) is never evaluated at the endpoint.
template <typename F>
double adaptive_gauss_legendre(const F& f, double a, double b, double tol = 1e-12) {
    if (!(b > a)) return 0.0;
    return detail::adaptive_gl_rec(f, a, b, tol, gauss_legendre_16(f, a, b), 48);
}

// Monotone scalar root finding: bisection to geometry, then Newton polish.
// Assumes f is continuous and f(lo), f(hi) bracket zero.
template <typename F, typename DF>
double bisect_newton(const F& f, const DF& df, double lo, double hi,
                     int bisect_steps = 60, int newton_steps = 3) {
    double flo = f(lo);
    if (flo == 0.0) return lo;
    for (int i = 0; i < bisect_steps; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < newton_steps; ++i) {
        const double d = df(x);
        if (d == 0.0) break;
        const double step = f(x) / d;
        const double next = x - step;
        if (next < lo || next > hi) break;  // keep the bracket
        x = next;
    }
    return x;
}

// Plain bisection for a decreasing function; returns the endpoint of the final
// bracket on which f <= target (one-sided rounding).
template <typename F>
double bisect_decreasing_to(const F& f, double target, double lo, double hi, double xtol) {
    // requires f(lo) >= target >= f(hi)
    while (hi - lo > xtol) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) > target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return hi;
}

inline double sq(double x) { return x * x; }

// Asymptotic two-sample Kolmogorov-Smirnov p-value (Kolmogorov distribution tail).
inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::size_t n = a.size(), m = b.size();
    if (n == 0 || m == 0) throw NumericalError("ks_two_sample_pvalue: empty sample");
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < n && j < m) {
        const double x = std::min(a[i], b[j]);
        while (i < n && a[i] <= x) ++i;
        while (j < m && b[j] <= x) ++j;
        d = std::max(d, std::abs(double(i) / double(n) - double(j) / double(m)));
    }
    const double ne = double(n) * double(m) / double(n + m);
    const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * sq(double(k) * lambda));
        p += term;
        if (std::abs(term) < 1e-16) break;
    }
    return std::clamp(p, 0.0, 1.0);
}

// Least-squares slope of log(y) against log(x); used for tail growth exponents.
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw NumericalError("log_log_slope: need >= 2 points");
    const std::size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(std::max(y[i], std::numeric_limits<double>::min()));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (double(n) * sxy - sx * sy) / (double(n) * sxx - sx * sx);
}

}  // namespace bpskit::math
