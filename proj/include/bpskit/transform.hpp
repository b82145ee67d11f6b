#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bpskit/common.hpp"
#include "bpskit/math.hpp"
#include "bpskit/target.hpp"

namespace bpskit {

// Isotropic change of variables h(y) = f(|y|) y / |y| built from a strictly
// increasing radial map f with f(0) = 0. Two families:
//   Exponential{b}:  f(r) = e^{br} - e/3        for r > 1/b,
//                    f(r) = r^3 b^3 e/6 + r be/2 for r <= 1/b   (C^3 join)
//   Polynomial{R,p}: f(r) = r                   for r <= R,
//                    f(r) = r + (r-R)^p         for r > R       (C^2 join, integer p >= 3)
struct IsotropicTransform {
    enum class Kind { Exponential, Polynomial };

    Kind kind = Kind::Exponential;
    double b = 1.0;
    double R = 1.0;
    int p = 3;

    bool operator==(const IsotropicTransform&) const = default;

    static IsotropicTransform exponential(double b) {
        if (!(b > 0.0)) throw ConfigError("transform: b must be > 0");
        IsotropicTransform t;
        t.kind = Kind::Exponential;
        t.b = b;
        return t;
    }

    static IsotropicTransform polynomial(double R, int p) {
        if (!(R > 0.0)) throw ConfigError("transform: R must be > 0");
        if (p < 3) throw ConfigError("transform: p must be an integer >= 3");
        IsotropicTransform t;
        t.kind = Kind::Polynomial;
        t.R = R;
        t.p = p;
        return t;
    }

    // Polynomial order enforcing beta*p > 2 with the C^2 minimum p = 3.
    static int polynomial_order_for(double beta) {
        return std::max(3, int(std::ceil(2.0 / beta)) + 1);
    }

    double branch_radius() const { return kind == Kind::Exponential ? 1.0 / b : R; }

    struct Radial {
        double f;
        double df;
        double ddf;
        // Branch-stable ratios: finite even where f itself overflows, so that
        // transformed gradients can be composed far into the tails.
        double f_over_df;
        double ddf_over_df;
    };

    Radial radial(double r) const {
        constexpr double e = std::numbers::e;
        if (kind == Kind::Exponential) {
            if (r > 1.0 / b) {
                const double ebr = std::exp(b * r);  // may overflow; ratios below do not
                const double w = std::exp(-b * r);
                return {ebr - e / 3.0, b * ebr, b * b * ebr, (1.0 - (e / 3.0) * w) / b, b};
            }
            const double c3 = b * b * b * e / 6.0;
            const double c1 = b * e / 2.0;
            const double f = c3 * r * r * r + c1 * r;
            const double df = 3.0 * c3 * r * r + c1;
            const double ddf = 6.0 * c3 * r;
            return {f, df, ddf, f / df, ddf / df};
        }
        if (r <= R) return {r, 1.0, 0.0, r, 0.0};
        const double u = r - R;
        const double f = r + std::pow(u, p);
        const double df = 1.0 + p * std::pow(u, p - 1);
        const double ddf = double(p) * (p - 1) * std::pow(u, p - 2);
        return {f, df, ddf, f / df, ddf / df};
    }

    // f^{-1}(s): closed form on the identity/log branches, monotone
    // bisection (60 steps) + Newton polish (3 steps) elsewhere.
    double radial_inverse(double s) const {
        if (s <= 0.0) return 0.0;
        constexpr double e = std::numbers::e;
        if (kind == Kind::Polynomial) {
            if (s <= R) return s;
            const double excess = s - R;
            const double hi = R + std::max(excess, std::pow(excess, 1.0 / p)) + 1.0;
            return math::bisect_newton([&](double r) { return radial(r).f - s; },
                                       [&](double r) { return radial(r).df; }, R, hi);
        }
        const double f_join = 2.0 * e / 3.0;  // f(1/b) from either branch
        if (s >= f_join) return std::log(s + e / 3.0) / b;
        return math::bisect_newton([&](double r) { return radial(r).f - s; },
                                   [&](double r) { return radial(r).df; }, 0.0, 1.0 / b);
    }

    // h(y); direction preserving, h(0) = 0.
    VectorXd apply(const VectorXd& y) const {
        const double r = y.norm();
        if (r == 0.0) return VectorXd::Zero(y.size());
        return (radial(r).f / r) * y;
    }

    // h^{-1}(x); apply(invert(x)) = x within 1e-10 (1 + |x|).
    VectorXd invert(const VectorXd& x) const {
        const double s = x.norm();
        if (s == 0.0) return VectorXd::Zero(x.size());
        return (radial_inverse(s) / s) * x;
    }

    // Jacobian grad h(y) = (f/|y|) I + (f' - f/|y|) y y^T / |y|^2; f'(0) I at 0.
    MatrixXd jacobian(const VectorXd& y) const {
        const int d = int(y.size());
        const double r = y.norm();
        if (r == 0.0) return radial(0.0).df * MatrixXd::Identity(d, d);
        const Radial v = radial(r);
        MatrixXd j = (v.f / r) * MatrixXd::Identity(d, d);
        j += (v.df - v.f / r) / (r * r) * (y * y.transpose());
        return j;
    }

    struct LogDet {
        double value;
        VectorXd gradient;
    };

    // log det grad h(y) = log f'(r) + (d-1) log(f(r)/r), with gradient
    // [f''/f' + (d-1)(f'/f - 1/r)] y/|y|; values d log f'(0) and 0 at y = 0.
    LogDet log_det_jacobian(const VectorXd& y) const {
        const int d = int(y.size());
        const double r = y.norm();
        if (r == 0.0) return {double(d) * std::log(radial(0.0).df), VectorXd::Zero(d)};
        const Radial v = radial(r);
        const double value = std::log(v.df) + (d - 1) * std::log(v.f / r);
        return {value, (log_det_radial_slope(v, r, d) / r) * y};
    }

    // d/dr log det grad h = f''/f' + (d-1)(f'/f - 1/r), via the stable ratios.
    double log_det_radial_slope(const Radial& v, double r, int d) const {
        return v.ddf_over_df + (d - 1) * (1.0 / v.f_over_df - 1.0 / r);
    }
};

// Pull-back of a base target through h: U_h(y) = U(h(y)) - log det grad h(y),
// grad U_h(y) = grad h(y) grad U(h(y)) - grad log det grad h(y).
// Unlike the base families, U_h is defined only up to the additive constant
// absorbed by the normaliser, so it may take negative values.
class TransformedTarget final : public Target {
  public:
    TransformedTarget(TargetPtr base, IsotropicTransform transform)
        : Target(base->dimension(), /*hessian=*/false, /*convex=*/false, /*affine=*/false,
                 {transform.branch_radius()}),
          base_(std::move(base)),
          h_(transform) {}

    const Target& base() const { return *base_; }
    const IsotropicTransform& transform() const { return h_; }

    double potential(const VectorXd& y) const override {
        check_dim(y);
        return base_->potential(h_.apply(y)) - h_.log_det_jacobian(y).value;
    }

    VectorXd grad(const VectorXd& y, bool* degenerate = nullptr) const override {
        check_dim(y);
        const double r = y.norm();
        if (base_->isotropic() && r > 0.0) {
            // grad U_h(y) = [f'(r) u'(f(r)) - d/dr log det grad h] y/|y|, with
            // f' u'(f) = (f u'(f)) / (f/f'): both factors are branch-stable,
            // so this holds far beyond the overflow range of f itself.
            if (degenerate) *degenerate = false;
            const auto v = h_.radial(r);
            const double pulled_slope = base_->scaled_radial_slope(v.f) / v.f_over_df;
            const double slope =
                pulled_slope - h_.log_det_radial_slope(v, r, dimension());
            return (slope / r) * y;
        }
        const VectorXd x = h_.apply(y);
        const VectorXd gx = base_->grad(x, degenerate);
        return h_.jacobian(y) * gx - h_.log_det_jacobian(y).gradient;
    }

  private:
    TargetPtr base_;
    IsotropicTransform h_;
};

// Evaluates the y-trajectory at the given times (linear interpolation on its
// segment) and maps through h. The mapped path is not piecewise linear.
// TrajectoryT needs an `events` range of {t, x} records covering the times.
template <typename TrajectoryT>
std::vector<std::pair<double, VectorXd>> map_trajectory(const IsotropicTransform& h,
                                                        const TrajectoryT& traj,
                                                        const std::vector<double>& sample_times) {
    const auto& ev = traj.events;
    if (ev.size() < 2) throw NumericalError("map_trajectory: trajectory has no segments");
    std::vector<std::pair<double, VectorXd>> out;
    out.reserve(sample_times.size());
    for (const double t : sample_times) {
        if (t < ev.front().t || t > ev.back().t)
            throw NumericalError("map_trajectory: sample time outside trajectory");
        auto it = std::upper_bound(ev.begin(), ev.end(), t,
                                   [](double lhs, const auto& e) { return lhs < e.t; });
        if (it == ev.begin()) ++it;
        if (it == ev.end()) --it;
        const auto& next = *it;
        const auto& prev = *std::prev(it);
        const double span = next.t - prev.t;
        const double w = span > 0.0 ? (t - prev.t) / span : 0.0;
        const VectorXd y = prev.x + w * (next.x - prev.x);
        out.emplace_back(t, h.apply(y));
    }
    return out;
}

}  // namespace bpskit
