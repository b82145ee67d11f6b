#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bpskit/bps.hpp"
#include "bpskit/common.hpp"
#include "bpskit/math.hpp"
#include "bpskit/transform.hpp"

namespace bpskit {

// Monomials of total degree <= 2 over position coordinates get exact segment
// integration; anything else goes through per-segment Gauss-Legendre.
class TestFunction {
  public:
    using Fn = std::function<double(const VectorXd& x, const VectorXd& v)>;

    static TestFunction monomial(std::vector<int> alpha) {
        TestFunction g;
        g.alpha_ = std::move(alpha);
        g.degree_ = std::accumulate(g.alpha_.begin(), g.alpha_.end(), 0);
        for (int a : g.alpha_) {
            if (a < 0) throw ConfigError("test function: negative exponent");
        }
        return g;
    }

    static TestFunction generic(Fn fn) {
        TestFunction g;
        g.fn_ = std::move(fn);
        return g;
    }

    bool is_monomial() const { return !fn_; }
    int degree() const { return degree_; }
    const std::vector<int>& alpha() const { return alpha_; }

    double operator()(const VectorXd& x, const VectorXd& v) const {
        if (fn_) return fn_(x, v);
        double prod = 1.0;
        for (std::size_t i = 0; i < alpha_.size(); ++i) {
            for (int a = 0; a < alpha_[i]; ++a) prod *= x[int(i)];
        }
        return prod;
    }

  private:
    std::vector<int> alpha_;
    int degree_ = 0;
    Fn fn_;
};

struct EstimateReport {
    double estimate = 0.0;
    double sigma2 = 0.0;  // asymptotic variance estimate; sqrt(sigma2/T) is the standard error
    int batches = 0;
    double batch_len = 0.0;
    double ess = 0.0;
};

// Closed form for int_0^tau g(x + s v) ds with g a monomial of degree <= 2.
inline double segment_integral(const VectorXd& x, const VectorXd& v, double tau,
                               const TestFunction& g) {
    if (!g.is_monomial() || g.degree() > 2)
        throw UnsupportedError("segment_integral: needs a monomial of degree <= 2");
    if (tau < 0.0) throw NumericalError("segment_integral: negative duration");
    const auto& alpha = g.alpha();
    if (g.degree() == 0) return tau;
    int i = -1, j = -1;
    for (std::size_t c = 0; c < alpha.size(); ++c) {
        if (alpha[c] == 1) (i < 0 ? i : j) = int(c);
        if (alpha[c] == 2) i = j = int(c);
    }
    const double t2 = tau * tau;
    if (g.degree() == 1) return x[i] * tau + v[i] * t2 / 2.0;
    const double t3 = t2 * tau;
    return x[i] * x[j] * tau + (x[i] * v[j] + x[j] * v[i]) * t2 / 2.0 + v[i] * v[j] * t3 / 3.0;
}

// sigma2_hat = B * sample variance of the batch means (n-1 denominator).
inline double batch_means_variance(const std::vector<double>& batch_means, double batch_len) {
    const std::size_t n = batch_means.size();
    if (n < 2) throw NumericalError("batch_means_variance: need >= 2 batches");
    const double mean = std::accumulate(batch_means.begin(), batch_means.end(), 0.0) / double(n);
    double ss = 0.0;
    for (double m : batch_means) ss += math::sq(m - mean);
    return batch_len * ss / double(n - 1);
}

namespace detail {

// Square-root batching: floor(sqrt(T)) equal-duration batches (at least 2).
inline int batch_count(double duration) {
    return std::max(2, int(std::floor(std::sqrt(duration))));
}

// Accumulates int g over the path and over the floor(sqrt(T)) equal batches.
// `piece` integrates one sub-segment: (x, v, s0, s1) -> int_{s0}^{s1} f(x+sv, v) ds.
template <typename PieceFn>
EstimateReport integrate_path(const Trajectory& traj, const PieceFn& piece,
                              const std::function<double(const VectorXd&, const VectorXd&)>& eval) {
    if (traj.events.size() < 2 || !(traj.duration > 0.0))
        throw NumericalError("path_average: empty trajectory");
    const double t_begin = traj.events.front().t;
    const double duration = traj.events.back().t - t_begin;
    const int n_batches = batch_count(duration);
    const double batch_len = duration / n_batches;

    std::vector<double> batch_integrals(n_batches, 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < traj.events.size(); ++k) {
        const Event& a = traj.events[k];
        const Event& b = traj.events[k + 1];
        const double seg_len = b.t - a.t;
        if (seg_len <= 0.0) continue;
        double s0 = 0.0;
        while (s0 < seg_len) {
            const double abs_t = a.t - t_begin + s0;
            int batch = std::min(n_batches - 1, int(abs_t / batch_len));
            auto rel_end = [&](int idx) {
                return ((idx + 1 < n_batches) ? (idx + 1) * batch_len : duration) -
                       (a.t - t_begin);
            };
            // s0 can land exactly on a boundary that int() assigns to the
            // previous batch; step forward instead of emitting an empty piece
            while (rel_end(batch) <= s0 && batch + 1 < n_batches) ++batch;
            const double s1 = std::min(seg_len, rel_end(batch));
            if (s1 <= s0) break;  // past the trajectory end by rounding only
            const double part = piece(a.x, a.v, s0, s1);
            batch_integrals[batch] += part;
            total += part;
            s0 = s1;
        }
    }

    std::vector<double> means(n_batches);
    for (int i = 0; i < n_batches; ++i) means[i] = batch_integrals[i] / batch_len;

    EstimateReport rep;
    rep.estimate = total / duration;
    rep.sigma2 = batch_means_variance(means, batch_len);
    rep.batches = n_batches;
    rep.batch_len = batch_len;

    // ESS = T * stationary variance / sigma2, with the second moment from
    // per-segment quadrature (exact for the polynomial test functions).
    double second = 0.0;
    for (std::size_t k = 0; k + 1 < traj.events.size(); ++k) {
        const Event& a = traj.events[k];
        const double seg_len = traj.events[k + 1].t - a.t;
        if (seg_len <= 0.0) continue;
        second += math::gauss_legendre_16(
            [&](double s) { return math::sq(eval(a.x + s * a.v, a.v)); }, 0.0, seg_len);
    }
    const double var = second / duration - math::sq(rep.estimate);
    rep.ess = (rep.sigma2 > 1e-300 && var > 0.0) ? duration * var / rep.sigma2 : duration;
    return rep;
}

}  // namespace detail

// S_T[g]/T with batch-means error bars: exact segment integrals for monomials
// of degree <= 2, 16-point Gauss-Legendre per segment otherwise.
inline EstimateReport path_average(const Trajectory& traj, const TestFunction& g) {
    auto eval = [&g](const VectorXd& x, const VectorXd& v) { return g(x, v); };
    if (g.is_monomial() && g.degree() <= 2) {
        return detail::integrate_path(
            traj,
            [&](const VectorXd& x, const VectorXd& v, double s0, double s1) {
                const VectorXd x0 = x + s0 * v;
                return segment_integral(x0, v, s1 - s0, g);
            },
            eval);
    }
    return detail::integrate_path(
        traj,
        [&](const VectorXd& x, const VectorXd& v, double s0, double s1) {
            return math::gauss_legendre_16([&](double s) { return g(x + s * v, v); }, s0, s1);
        },
        eval);
}

// Weighted jump-chain estimator over the embedded chain of event-time states:
//   sum_k g(Theta_k) / lambda_bar(X_k, -V_k)  /  sum_k 1 / lambda_bar(X_k, -V_k).
// lambda_bar >= lambda_ref > 0 keeps every weight finite.
inline double jump_chain_estimate(const Trajectory& traj, const TestFunction& g,
                                  const Target& target, const RefreshPolicy& policy) {
    double num = 0.0, den = 0.0;
    for (const Event& e : traj.events) {
        if (e.kind != EventKind::Bounce && e.kind != EventKind::Refresh) continue;
        const double lam = refresh_rate(policy, target, e.x) +
                           std::max(0.0, target.grad(e.x).dot(-e.v));
        const double w = 1.0 / lam;
        num += w * g(e.x, e.v);
        den += w;
    }
    if (den == 0.0) throw NumericalError("jump_chain_estimate: no post-init events");
    return num / den;
}

// Same estimator with a batch-means error bar: per-batch ratio estimates over
// floor(sqrt(T)) time batches.
inline EstimateReport jump_chain_report(const Trajectory& traj, const TestFunction& g,
                                        const Target& target, const RefreshPolicy& policy) {
    if (traj.events.size() < 2 || !(traj.duration > 0.0))
        throw NumericalError("jump_chain_report: empty trajectory");
    const double t_begin = traj.events.front().t;
    const double duration = traj.events.back().t - t_begin;
    const int n_batches = detail::batch_count(duration);
    const double batch_len = duration / n_batches;

    std::vector<double> num(n_batches, 0.0), den(n_batches, 0.0);
    for (const Event& e : traj.events) {
        if (e.kind != EventKind::Bounce && e.kind != EventKind::Refresh) continue;
        const int batch = std::min(n_batches - 1, int((e.t - t_begin) / batch_len));
        const double lam = refresh_rate(policy, target, e.x) +
                           std::max(0.0, target.grad(e.x).dot(-e.v));
        num[batch] += g(e.x, e.v) / lam;
        den[batch] += 1.0 / lam;
    }
    std::vector<double> ratios;
    double num_all = 0.0, den_all = 0.0;
    for (int i = 0; i < n_batches; ++i) {
        num_all += num[i];
        den_all += den[i];
        if (den[i] > 0.0) ratios.push_back(num[i] / den[i]);
    }
    if (den_all == 0.0) throw NumericalError("jump_chain_report: no post-init events");

    EstimateReport rep;
    rep.estimate = num_all / den_all;
    rep.batches = int(ratios.size());
    rep.batch_len = batch_len;
    rep.sigma2 = batch_means_variance(ratios, batch_len);
    rep.ess = 0.0;
    return rep;
}

// Estimator in the original parameterization from a trajectory of the
// transformed target: path average of y -> g(h(y), v). g composed with h is
// not polynomial, so every segment goes through quadrature.
inline EstimateReport mapped_estimate(const IsotropicTransform& h, const Trajectory& traj_y,
                                      const TestFunction& g) {
    auto eval = [&](const VectorXd& y, const VectorXd& v) { return g(h.apply(y), v); };
    return detail::integrate_path(
        traj_y,
        [&](const VectorXd& y, const VectorXd& v, double s0, double s1) {
            return math::gauss_legendre_16([&](double s) { return eval(y + s * v, v); }, s0, s1);
        },
        eval);
}

}  // namespace bpskit
