#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bpskit/bps.hpp"
#include "bpskit/common.hpp"
#include "bpskit/math.hpp"
#include "bpskit/target.hpp"
#include "bpskit/transform.hpp"

namespace bpskit {

// Normalising constant of the angle density p(theta) = kappa_d sin^{d-2}(theta)
// on [0, pi]: kappa_d = Gamma(d/2) / (sqrt(pi) Gamma((d-1)/2)).
inline double angle_norm(int d) {
    if (d < 2) throw ConfigError("angle_norm: d >= 2 required");
    return std::exp(std::lgamma(0.5 * d) - std::lgamma(0.5 * (d - 1))) / std::sqrt(std::numbers::pi);
}

// F(u,d) = kappa_d int_0^{pi/2} sin^{d-2}(theta) (1 + u cos theta)^{-1/2} dtheta.
// Decreasing in u with F(0,d) = 1/2 and F(u,d) -> 0 as u -> infinity.
inline double angular_refresh_integral(double u, int d) {
    if (u < 0.0) throw NumericalError("F(u,d): u >= 0 required");
    const double kappa = angle_norm(d);
    return math::adaptive_gauss_legendre(
        [&](double theta) {
            return kappa * std::pow(std::sin(theta), d - 2) / std::sqrt(1.0 + u * std::cos(theta));
        },
        0.0, 0.5 * std::numbers::pi, 1e-12);
}

// The threshold c_d solving F(c_d, d) = 1/4, rounded so F(c_d, d) <= 1/4.
inline double refresh_threshold(int d) {
    return math::bisect_decreasing_to([&](double u) { return angular_refresh_integral(u, d); },
                                      0.25, 0.0, 1e6, 1e-10);
}

// gamma_d = kappa_d int_0^{pi/2} sin^{d-2}(theta) cos^{-1/2}(theta) dtheta,
// in closed form Gamma(1/4) Gamma(d/2) / (2 sqrt(pi) Gamma(d/2 - 1/4)).
inline double gamma_d(int d) {
    if (d < 2) throw ConfigError("gamma_d: d >= 2 required");
    return std::exp(std::lgamma(0.25) + std::lgamma(0.5 * d) - std::lgamma(0.5 * d - 0.25)) /
           (2.0 * std::sqrt(std::numbers::pi));
}

// Quadrature route for gamma_d. The cos^{-1/2} endpoint singularity is removed
// by theta = pi/2 - phi^2, leaving a bounded integrand.
inline double gamma_d_quadrature(int d) {
    const double kappa = angle_norm(d);
    return math::adaptive_gauss_legendre(
        [&](double phi) {
            // sin(theta) = cos(phi^2), cos(theta) = sin(phi^2), dtheta = 2 phi dphi
            return 2.0 * phi * kappa * std::pow(std::cos(phi * phi), d - 2) /
                   std::sqrt(std::sin(phi * phi));
        },
        0.0, std::sqrt(0.5 * std::numbers::pi), 1e-12);
}

// Lyapunov function V(x,v) = e^{U(x)/2} / lambda_bar(x,-v)^{1/2}; the
// denominator is bounded below by lambda_ref > 0.
inline double lyapunov(const Target& target, const RefreshPolicy& policy, const VectorXd& x,
                       const VectorXd& v) {
    const double denom = refresh_rate(policy, target, x) + std::max(0.0, target.grad(x).dot(-v));
    return std::exp(0.5 * target.potential(x)) / std::sqrt(denom);
}

namespace detail {

inline bool is_zero_rate(double a, double grad_norm) {
    return std::abs(a) <= 1e-12 * std::max(1.0, grad_norm);
}

// Gradient of the position-dependent refreshment rate via the chain rule:
// grad lambda_ref(x) = |x|^{-eps} grad|grad U| + |grad U| grad(|x|^{-eps}),
// with grad|grad U| = H g / |g| (so |grad|grad U|| <= ||H||).
inline VectorXd refresh_rate_gradient(const RefreshPolicy& policy, const VectorXd& x,
                                      const VectorXd& g, const MatrixXd& hess) {
    if (policy.kind == RefreshPolicy::Kind::Constant) return VectorXd::Zero(x.size());
    const double gnorm = g.norm();
    if (gnorm == 0.0) return VectorXd::Zero(x.size());
    const VectorXd grad_gnorm = hess * g / gnorm;
    const double r = x.norm();
    if (r <= 1.0) return grad_gnorm;  // max{1,|x|^eps} = 1 branch
    const double reps = std::pow(r, -policy.epsilon);
    return reps * grad_gnorm - policy.epsilon * gnorm * reps / (r * r) * x;
}

}  // namespace detail

// Exact drift-ratio case expression 2 L~V(x,v) / V(x,v) for a constant
// refreshment rate, split on the sign of <grad U(x), v>. The sphere integral
// over {<grad U, w> >= 0} reduces to the 1-D angle integral F(|g|/lambda, d).
inline double drift_ratio_constant(const Target& target, double lambda_ref, const VectorXd& x,
                                   const VectorXd& v) {
    const VectorXd g = target.grad(x);
    const MatrixXd hess = hessian_or_fd(target, x);
    const double lam = lambda_ref;
    const double a = g.dot(v);
    const double q = v.dot(hess * v);  // <v, Delta U(x) v>
    const double fu = angular_refresh_integral(g.norm() / lam, int(x.size()));

    if (detail::is_zero_rate(a, g.norm())) {
        return -(std::max(0.0, -q) / lam + lam - 2.0 * lam * fu);
    }
    if (a > 0.0) {
        return -(a - 2.0 * a * std::sqrt(lam) / std::sqrt(lam + a) + lam - 2.0 * lam * fu);
    }
    const double w = -a;
    const double root = std::sqrt(lam) * std::sqrt(lam + w);
    return -(w + 2.0 * lam - q / (lam + w) - root - 2.0 * root * fu);
}

// Same ratio for the position-dependent policy, from the exact pre-asymptotic
// case displays (the grad lambda_ref term enters through the chain rule).
inline double drift_ratio_varying(const Target& target, const RefreshPolicy& policy,
                                  const VectorXd& x, const VectorXd& v) {
    if (policy.kind != RefreshPolicy::Kind::PositionDependent)
        throw ConfigError("drift_ratio_varying: needs a PositionDependent policy");
    const VectorXd g = target.grad(x);
    const MatrixXd hess = hessian_or_fd(target, x);
    const double lam = refresh_rate(policy, target, x);
    const VectorXd grad_lam = detail::refresh_rate_gradient(policy, x, g, hess);
    const double a = g.dot(v);
    const double q = v.dot(hess * v);
    const double gl = grad_lam.dot(v);
    const double fu = angular_refresh_integral(g.norm() / lam, int(x.size()));

    if (detail::is_zero_rate(a, g.norm())) {
        return 2.0 * (-0.5 * (gl + std::max(0.0, -q)) / lam + lam * (fu - 0.5));
    }
    if (a > 0.0) {
        return 2.0 * (0.5 * a - 0.5 * gl / lam + a * (std::sqrt(lam / (lam + a)) - 1.0) +
                      lam * (fu - 0.5));
    }
    const double w = -a;
    const double refresh_integral = std::sqrt(lam + w) * (0.5 + fu) / std::sqrt(lam) - 1.0;
    return 2.0 * (0.5 * (a - (gl - q) / (lam + w)) + lam * refresh_integral);
}

inline double drift_ratio(const Target& target, const RefreshPolicy& policy, const VectorXd& x,
                          const VectorXd& v) {
    if (policy.kind == RefreshPolicy::Kind::Constant)
        return drift_ratio_constant(target, policy.lambda_ref, x, v);
    return drift_ratio_varying(target, policy, x, v);
}

// Deterministic quasi-uniform points on S^{d-1}: equal angles for d = 2, a
// Weyl sequence pushed through Box-Muller and normalised for d >= 3. No RNG,
// so reports built on these grids are bit-reproducible.
inline std::vector<VectorXd> sphere_grid(int d, int n) {
    if (d < 2 || n < 1) throw ConfigError("sphere_grid: d >= 2, n >= 1 required");
    std::vector<VectorXd> pts;
    pts.reserve(n);
    if (d == 2) {
        for (int k = 0; k < n; ++k) {
            const double phi = 2.0 * std::numbers::pi * k / n;
            pts.push_back(Eigen::Vector2d(std::cos(phi), std::sin(phi)));
        }
        return pts;
    }
    std::vector<double> irrationals;
    for (int cand = 2; int(irrationals.size()) < d + 1; ++cand) {
        bool prime = true;
        for (int q = 2; q * q <= cand; ++q) {
            if (cand % q == 0) {
                prime = false;
                break;
            }
        }
        if (prime) irrationals.push_back(std::sqrt(double(cand)));
    }
    for (int k = 1; k <= n; ++k) {
        VectorXd z(d);
        for (int i = 0; i < d; i += 2) {
            double u1 = std::fmod(k * irrationals[i], 1.0);
            double u2 = std::fmod(k * irrationals[i + 1], 1.0);
            u1 = std::clamp(u1, 1e-12, 1.0 - 1e-12);
            const double rad = std::sqrt(-2.0 * std::log(u1));
            z[i] = rad * std::cos(2.0 * std::numbers::pi * u2);
            if (i + 1 < d) z[i + 1] = rad * std::sin(2.0 * std::numbers::pi * u2);
        }
        pts.push_back(z / z.norm());
    }
    return pts;
}

struct ShellResult {
    double radius = 0.0;
    double sup_ratio = 0.0;
    VectorXd worst_x;
    VectorXd worst_v;
};

// Grid evidence for the drift condition L~V <= -cV + b 1_C: verdict
// "confirmed" iff some grid radius K has strictly negative ratios on every
// shell at radius >= K. No claim is made beyond the largest grid radius.
struct DriftReport {
    RefreshPolicy policy;
    std::vector<double> radii;
    int directions = 0;
    int velocity_angles = 0;
    std::vector<ShellResult> shells;
    std::optional<double> threshold_radius;  // smallest all-negative K
    std::optional<double> sup_outside;       // sup of the ratio over shells >= K
    bool confirmed = false;
};

namespace detail {

// Root of (1+s)^3 = (2+s)^2: the minimiser a = s* lambda of the positive-rate
// case bracket, added to the velocity grid so shell verdicts do not depend on
// the uniform angle resolution.
inline double positive_case_minimizer() {
    static const double s = math::bisect_newton(
        [](double t) { return (1.0 + t) * (1.0 + t) * (1.0 + t) - (2.0 + t) * (2.0 + t); },
        [](double t) { return 3.0 * (1.0 + t) * (1.0 + t) - 2.0 * (2.0 + t); }, 1.0, 1.3);
    return s;
}

// Velocity angles against the gradient direction: a uniform sweep of [0, pi]
// plus targeted points (near-tangent slivers and rate values of order
// lambda_ref) where the case expressions change character.
inline std::vector<double> velocity_cosines(int uniform_angles, double grad_norm,
                                            double lambda_ref_at_x) {
    std::vector<double> cosines;
    for (int j = 0; j < uniform_angles; ++j) {
        cosines.push_back(std::cos(std::numbers::pi * double(j) / double(uniform_angles - 1)));
    }
    if (grad_norm > 0.0) {
        for (double delta : {1e-3, 1e-5}) {
            cosines.push_back(-delta);
            cosines.push_back(delta);
        }
        for (double c : {0.5, 2.0, 8.0}) {
            cosines.push_back(std::max(-1.0, -c * lambda_ref_at_x / grad_norm));
        }
        cosines.push_back(std::min(1.0, positive_case_minimizer() * lambda_ref_at_x / grad_norm));
    }
    return cosines;
}

}  // namespace detail

inline DriftReport verify_drift(const Target& target, const RefreshPolicy& policy,
                                const std::vector<double>& radii, int directions_per_shell,
                                int velocity_angles = 33) {
    if (radii.empty() || directions_per_shell < 1 || velocity_angles < 3)
        throw ConfigError("verify_drift: nonempty grids required");
    const int d = target.dimension();

    DriftReport report;
    report.policy = policy;
    report.radii = radii;
    std::sort(report.radii.begin(), report.radii.end());
    report.directions = directions_per_shell;
    report.velocity_angles = velocity_angles;

    const auto directions = sphere_grid(d, directions_per_shell);
    for (const double r : report.radii) {
        ShellResult shell;
        shell.radius = r;
        bool first = true;
        for (const auto& u : directions) {
            const VectorXd x = r * u;
            const VectorXd g = target.grad(x);
            const double gnorm = g.norm();
            VectorXd ghat = gnorm > 0.0 ? VectorXd(g / gnorm) : VectorXd(VectorXd::Unit(d, 0));
            // deterministic tangent: the basis vector least aligned with ghat
            int least = 0;
            for (int i = 1; i < d; ++i) {
                if (std::abs(ghat[i]) < std::abs(ghat[least])) least = i;
            }
            VectorXd tangent = VectorXd::Unit(d, least) - ghat[least] * ghat;
            tangent /= tangent.norm();

            const double lam_x = refresh_rate(policy, target, x);
            for (const double c : detail::velocity_cosines(velocity_angles, gnorm, lam_x)) {
                const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
                const VectorXd v = c * ghat + s * tangent;
                const double ratio = drift_ratio(target, policy, x, v);
                if (first || ratio > shell.sup_ratio) {
                    shell.sup_ratio = ratio;
                    shell.worst_x = x;
                    shell.worst_v = v;
                    first = false;
                }
            }
        }
        report.shells.push_back(std::move(shell));
    }

    // smallest grid K with all-negative ratios from K outward
    for (std::size_t i = 0; i < report.shells.size(); ++i) {
        double sup = report.shells[i].sup_ratio;
        bool all_neg = sup < 0.0;
        for (std::size_t j = i + 1; j < report.shells.size() && all_neg; ++j) {
            sup = std::max(sup, report.shells[j].sup_ratio);
            all_neg = report.shells[j].sup_ratio < 0.0;
        }
        if (all_neg) {
            report.confirmed = true;
            report.threshold_radius = report.shells[i].radius;
            report.sup_outside = sup;
            break;
        }
    }
    return report;
}

// Tail-regime classification by probing gradient/Hessian growth on shells and
// matching the sufficient conditions for geometric ergodicity. Reports are
// numerical evidence, not proof.
struct RegimeAdvice {
    std::string regime;  // regular-a | regular-b | thin | thick-i | thick-ii | unclassified
    std::optional<RefreshPolicy> policy;
    std::optional<IsotropicTransform> transform;

    std::vector<double> probe_radii;
    std::vector<double> grad_norm;   // max over probed directions
    std::vector<double> hess_norm;   // max operator norm
    std::vector<double> radial_dot;  // min <x, grad U(x)>
    double grad_exponent = 0.0;
    double hess_exponent = 0.0;
    double alpha1 = 0.0;       // Hessian bound (regular-a)
    double alpha2 = 0.0;       // half the gradient limit (regular-b)
    double beta_hat = 0.0;     // fitted tail power (thick-ii)
    double lambda_bound = 0.0; // admissible lambda_ref bound for the matched regime
};

namespace detail {

inline double operator_norm(const MatrixXd& sym) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace detail

inline RegimeAdvice classify_regime(const TargetPtr& target_ptr) {
    const Target& target = *target_ptr;
    const int d = target.dimension();
    RegimeAdvice advice;
    advice.probe_radii = {1e1, 1e2, 1e3, 1e4};
    const auto dirs = sphere_grid(d, 8);

    for (const double r : advice.probe_radii) {
        double gmax = 0.0, hmax = 0.0, rdot = std::numeric_limits<double>::infinity();
        for (const auto& u : dirs) {
            const VectorXd x = r * u;
            const VectorXd g = target.grad(x);
            gmax = std::max(gmax, g.norm());
            hmax = std::max(hmax, detail::operator_norm(hessian_or_fd(target, x)));
            rdot = std::min(rdot, x.dot(g));
        }
        advice.grad_norm.push_back(gmax);
        advice.hess_norm.push_back(hmax);
        advice.radial_dot.push_back(rdot);
    }
    advice.grad_exponent = math::log_log_slope(advice.probe_radii, advice.grad_norm);
    advice.hess_exponent = math::log_log_slope(advice.probe_radii, advice.hess_norm);

    const double slope = advice.grad_exponent;
    const std::size_t last = advice.probe_radii.size() - 1;

    if (slope > 1.1) {
        // gradient grows super-linearly: thin tails, scale the refreshment
        advice.regime = "thin";
        advice.policy = RefreshPolicy::position_dependent(1.0, 0.5);
        return advice;
    }
    if (slope < -0.9) {
        // |grad| ~ 1/|x|: t-like tails; need <x, grad U> > d for the exponential map
        if (std::min(advice.radial_dot[last], advice.radial_dot[last - 1]) > double(d)) {
            advice.regime = "thick-i";
            advice.transform = IsotropicTransform::exponential(1.0);
            TransformedTarget pulled(target_ptr, *advice.transform);
            // the transformed potential has exponential tails; bound lambda_ref by alpha2/c_d
            double gmin = std::numeric_limits<double>::infinity();
            for (const double r : {5.0, 10.0, 20.0}) {
                for (const auto& u : dirs) gmin = std::min(gmin, pulled.grad(r * u).norm());
            }
            advice.alpha2 = 0.5 * gmin;
            advice.lambda_bound = advice.alpha2 / refresh_threshold(d);
            advice.policy = RefreshPolicy::constant(0.9 * advice.lambda_bound);
            return advice;
        }
        advice.regime = "unclassified";
        return advice;
    }
    if (slope < -0.1) {
        // |grad| ~ |x|^{beta-1} with beta in (0,1): polynomial map with beta p > 2
        advice.regime = "thick-ii";
        advice.beta_hat = 1.0 + slope;
        advice.transform =
            IsotropicTransform::polynomial(1.0, IsotropicTransform::polynomial_order_for(advice.beta_hat));
        advice.policy = RefreshPolicy::position_dependent(1.0, 0.5);
        return advice;
    }
    if (std::abs(slope) <= 0.1) {
        if (advice.grad_norm[last] > 1e-8) {
            advice.regime = "regular-b";
            advice.alpha2 = 0.5 * std::min(advice.grad_norm[last], advice.grad_norm[last - 1]);
            advice.lambda_bound = advice.alpha2 / refresh_threshold(d);
            advice.policy = RefreshPolicy::constant(0.9 * advice.lambda_bound);
            return advice;
        }
        advice.regime = "unclassified";
        return advice;
    }
    if (advice.hess_exponent <= 0.1) {
        advice.regime = "regular-a";
        advice.alpha1 = std::max(advice.hess_norm[last], advice.hess_norm[last - 1]);
        advice.lambda_bound = math::sq(2.0 * advice.alpha1 + 1.0);
        advice.policy = RefreshPolicy::constant(1.1 * advice.lambda_bound);
        return advice;
    }
    advice.regime = "unclassified";
    return advice;
}

}  // namespace bpskit
