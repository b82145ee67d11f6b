#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bpskit/common.hpp"
#include "bpskit/rng.hpp"
#include "bpskit/target.hpp"
#include "bpskit/transform.hpp"

namespace bpskit {

// Velocities live on S^{d-1}; |v| = 1 within 1e-12.
struct State {
    VectorXd x;
    VectorXd v;
};

enum class EventKind { Init, Bounce, Refresh, Final };

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::Init: return "init";
        case EventKind::Bounce: return "bounce";
        case EventKind::Refresh: return "refresh";
        case EventKind::Final: return "final";
    }
    return "?";
}

// State *after* the event at time t.
struct Event {
    double t = 0.0;
    EventKind kind = EventKind::Init;
    VectorXd x;
    VectorXd v;
};

// Constant rate, or the position-dependent rate of the thin-tail scheme:
// lambda_ref + |grad U(x)| / max{1, |x|^epsilon}.
struct RefreshPolicy {
    enum class Kind { Constant, PositionDependent };

    Kind kind = Kind::Constant;
    double lambda_ref = 1.0;
    double epsilon = 0.5;

    static RefreshPolicy constant(double lambda_ref) {
        if (!(lambda_ref > 0.0)) throw ConfigError("policy: lambda_ref must be > 0");
        return {Kind::Constant, lambda_ref, 0.5};
    }

    static RefreshPolicy position_dependent(double lambda_ref, double epsilon = 0.5) {
        if (!(lambda_ref > 0.0)) throw ConfigError("policy: lambda_ref must be > 0");
        if (!(epsilon > 0.0)) throw ConfigError("policy: epsilon must be > 0");
        return {Kind::PositionDependent, lambda_ref, epsilon};
    }

    bool operator==(const RefreshPolicy&) const = default;
};

struct Provenance {
    TargetConfig target;
    RefreshPolicy policy;
    std::optional<IsotropicTransform> transform;
    std::uint64_t seed = 0;
    std::uint64_t chain = 0;
};

// Piecewise-linear path: position advances at unit speed between events,
// velocity constant on each segment.
struct Trajectory {
    std::vector<Event> events;
    double duration = 0.0;
    Provenance meta;
};

struct Horizon {
    enum class Kind { Duration, Events };

    Kind kind = Kind::Duration;
    double duration = 0.0;
    std::int64_t events = 0;

    static Horizon for_duration(double t) {
        if (!(t > 0.0)) throw ConfigError("horizon: duration must be > 0");
        return {Kind::Duration, t, 0};
    }
    static Horizon for_events(std::int64_t n) {
        if (n < 1) throw ConfigError("horizon: event count must be >= 1");
        return {Kind::Events, 0.0, n};
    }
};

inline VectorXd sample_velocity(RngStream& rng, int d) { return rng.unit_sphere(d); }

// Newtonian collision on the hyperplane orthogonal to the gradient:
// R(x)v = v - 2 <g,v>/|g|^2 g. Renormalised to keep |v| = 1 over long runs.
inline VectorXd reflect(const VectorXd& gradient, const VectorXd& v) {
    const double g2 = gradient.squaredNorm();
    if (g2 == 0.0) throw NumericalError("reflect: zero gradient (caller must refresh instead)");
    VectorXd w = v - (2.0 * gradient.dot(v) / g2) * gradient;
    return w / w.norm();
}

// lambda(x,v) = <grad U(x), v>_+.
inline double bounce_rate(const Target& target, const VectorXd& x, const VectorXd& v) {
    return std::max(0.0, target.grad(x).dot(v));
}

inline double refresh_rate(const RefreshPolicy& policy, const Target& target, const VectorXd& x) {
    if (policy.kind == RefreshPolicy::Kind::Constant) return policy.lambda_ref;
    const double gnorm = target.grad(x).norm();
    return policy.lambda_ref + gnorm / std::max(1.0, std::pow(x.norm(), policy.epsilon));
}

// lambda_bar(x,v) = lambda_ref(x) + lambda(x,v).
inline double total_rate(const Target& target, const RefreshPolicy& policy, const VectorXd& x,
                         const VectorXd& v) {
    return refresh_rate(policy, target, x) + bounce_rate(target, x, v);
}

enum class EventTimeMethod { Auto, ExactInversion, MonotoneThinning, GridThinning };

struct EventTimeSample {
    double tau = 0.0;
    double total_rate = 0.0;   // lambda_bar at x + tau v
    double bounce_rate = 0.0;  // lambda at x + tau v
};

// Inverts Lambda(tau) = lambda_ref tau + int_0^tau (a + b s)_+ ds = exp_draw
// for an affine directional rate (b >= 0). Closed form; used by tier (i).
inline double invert_affine_event_time(double a, double b, double lambda_ref, double exp_draw) {
    if (b <= 0.0) {
        return exp_draw / (lambda_ref + std::max(0.0, a));
    }
    const double t_active = a < 0.0 ? -a / b : 0.0;  // bounce part inactive before this
    if (exp_draw <= lambda_ref * t_active) {
        return exp_draw / lambda_ref;
    }
    const double rest = exp_draw - lambda_ref * t_active;
    const double a0 = std::max(a, 0.0);  // rate at the activation point
    const double c = lambda_ref + a0;
    // (b/2) s^2 + c s = rest, stable positive root.
    const double s = 2.0 * rest / (c + std::sqrt(c * c + 2.0 * b * rest));
    return t_active + s;
}

namespace detail {

// One thinning window; returns the accepted sample or advances *t_offset.
// `bound` must dominate the true total rate on the window; a violated bound
// aborts rather than producing biased samples.
template <typename RateFn>
std::optional<EventTimeSample> thin_window(const RateFn& rate_at, double* t_offset, double width,
                                           double bound, RngStream& rng, double tolerance_factor) {
    double s = 0.0;
    for (;;) {
        s += rng.exponential() / bound;
        if (s > width) {
            *t_offset += width;
            return std::nullopt;
        }
        const auto [total, bounce] = rate_at(*t_offset + s);
        if (total > bound * tolerance_factor) {
            throw NumericalError("event-time thinning: intensity " + std::to_string(total) +
                                 " exceeds bound " + std::to_string(bound) + " on window [" +
                                 std::to_string(*t_offset) + ", " +
                                 std::to_string(*t_offset + width) + "]");
        }
        if (rng.uniform01() * bound < total) {
            return EventTimeSample{*t_offset + s, total, bounce};
        }
    }
}

}  // namespace detail

// Simulates the first arrival of the inhomogeneous Poisson process with
// intensity t -> lambda_bar(x + t v, v). Tier selection:
//   (i)  exact quadratic inversion: affine directional rate + constant refresh;
//   (ii) thinning with monotone right-endpoint window bounds: convex target +
//        constant refresh (the directional rate is nondecreasing along the ray);
//   (iii) grid-based local bounds with a 1.5 safety factor otherwise; an
//        observed intensity above the bound is a hard error.
inline EventTimeSample sample_event_time(const Target& target, const RefreshPolicy& policy,
                                         const VectorXd& x, const VectorXd& v, RngStream& rng,
                                         EventTimeMethod method = EventTimeMethod::Auto) {
    const bool constant = policy.kind == RefreshPolicy::Kind::Constant;
    if (method == EventTimeMethod::Auto) {
        if (target.affine_directional_rate() && constant) {
            method = EventTimeMethod::ExactInversion;
        } else if (target.convex() && constant) {
            method = EventTimeMethod::MonotoneThinning;
        } else {
            method = EventTimeMethod::GridThinning;
        }
    }

    if (method == EventTimeMethod::ExactInversion) {
        if (!constant) throw ConfigError("event time: exact inversion needs a constant refresh rate");
        const AffineRate r = target.affine_rate(x, v);
        const double tau = invert_affine_event_time(r.a, r.b, policy.lambda_ref, rng.exponential());
        const double bounce = std::max(0.0, r.a + r.b * tau);
        return {tau, policy.lambda_ref + bounce, bounce};
    }

    if (method == EventTimeMethod::MonotoneThinning) {
        if (!constant) throw ConfigError("event time: monotone thinning needs a constant refresh rate");
        const double lref = policy.lambda_ref;
        auto rate_at = [&](double t) {
            const double bounce = std::max(0.0, target.directional_rate(x, v, t));
            return std::pair<double, double>{lref + bounce, bounce};
        };
        double t0 = 0.0;
        for (;;) {
            const double width = std::max(0.1, 1.0 / rate_at(t0).first);
            // right endpoint dominates the window: directional rate is nondecreasing
            const double bound = rate_at(t0 + width).first;
            if (auto hit = detail::thin_window(rate_at, &t0, width, bound, rng, 1.0 + 1e-9)) {
                return *hit;
            }
        }
    }

    // Grid-based thinning for the general case.
    auto rate_at = [&](double t) {
        const VectorXd xt = x + t * v;
        const VectorXd g = target.grad(xt);
        double lref = policy.lambda_ref;
        if (policy.kind == RefreshPolicy::Kind::PositionDependent) {
            lref += g.norm() / std::max(1.0, std::pow(xt.norm(), policy.epsilon));
        }
        const double bounce = std::max(0.0, g.dot(v));
        return std::pair<double, double>{lref + bounce, bounce};
    };
    constexpr int kGridPoints = 32;
    constexpr double kSafety = 1.5;
    const double closest = -x.dot(v);  // offset of the ray's nearest point to the origin
    double t0 = 0.0;
    for (;;) {
        const double width = std::max(0.1, 1.0 / rate_at(t0).first);
        double peak = 0.0;
        auto probe = [&](double s) {
            if (s >= t0 && s <= t0 + width) peak = std::max(peak, rate_at(s).first);
        };
        for (int j = 0; j < kGridPoints; ++j) {
            probe(t0 + width * double(j) / double(kGridPoints - 1));
        }
        // Rates of potentials with a singular origin (|x|^beta, beta < 1) peak
        // in a boundary layer of width ~ the distance of closest approach; a
        // uniform grid cannot see that spike, so it is probed explicitly.
        if (closest > t0 && closest < t0 + width) {
            const double rho = std::max((x + closest * v).norm(), 1e-12 * width);
            probe(closest);
            for (double c : {0.25, 0.5, 0.85, 1.25, 2.0, 4.0, 16.0, 256.0, 4096.0}) {
                probe(closest - c * rho);
                probe(closest + c * rho);
            }
        }
        // spikes sitting exactly at the window start (e.g. a chain initialised
        // on the singular set) are resolved by decade probes
        for (double frac : {1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2}) {
            probe(t0 + frac * width);
        }
        const double bound = kSafety * peak;
        // a spiky envelope would waste bound*width proposals on one window;
        // shrink the window instead and let later windows rebuild local bounds
        const double effective_width = std::min(width, 2.0 * kGridPoints / bound);
        if (auto hit = detail::thin_window(rate_at, &t0, effective_width, bound, rng, 1.0)) {
            return *hit;
        }
    }
}

namespace detail {

inline void check_unit_velocity(const VectorXd& v) {
    if (std::abs(v.norm() - 1.0) > 1e-12) throw ConfigError("state: |v| must be 1 within 1e-12");
}

// Bounce-vs-refresh decision at the event position, shared by step() and simulate().
inline std::pair<EventKind, VectorXd> apply_jump(const Target& target, const VectorXd& x_new,
                                                 const VectorXd& v, const EventTimeSample& rates,
                                                 RngStream& rng) {
    if (rng.uniform01() * rates.total_rate < rates.bounce_rate) {
        return {EventKind::Bounce, reflect(target.grad(x_new), v)};
    }
    return {EventKind::Refresh, sample_velocity(rng, int(v.size()))};
}

}  // namespace detail

// One event: advance tau along v, then bounce with probability
// lambda/lambda_bar at the new position, else refresh. The returned event
// carries the inter-event time tau (simulate() accumulates absolute times).
inline std::pair<Event, State> step(const Target& target, const RefreshPolicy& policy,
                                    const State& state, RngStream& rng,
                                    EventTimeMethod method = EventTimeMethod::Auto) {
    target.check_dim(state.x);
    detail::check_unit_velocity(state.v);
    const EventTimeSample ets = sample_event_time(target, policy, state.x, state.v, rng, method);
    const VectorXd x_new = state.x + ets.tau * state.v;
    auto [kind, v_new] = detail::apply_jump(target, x_new, state.v, ets, rng);
    Event ev{ets.tau, kind, x_new, v_new};
    return {ev, State{x_new, v_new}};
}

// Full simulation loop. Duration horizons truncate the in-flight segment at
// exactly T with a Final event; event-count horizons stop after N jump events.
// Reproducible from (rng stream, config): all randomness flows through `rng`.
inline Trajectory simulate(const Target& target, const RefreshPolicy& policy, const State& init,
                           const Horizon& horizon, RngStream& rng,
                           EventTimeMethod method = EventTimeMethod::Auto) {
    target.check_dim(init.x);
    detail::check_unit_velocity(init.v);

    Trajectory traj;
    traj.events.push_back({0.0, EventKind::Init, init.x, init.v});

    double t = 0.0;
    VectorXd x = init.x;
    VectorXd v = init.v;
    std::int64_t jumps = 0;
    for (;;) {
        const EventTimeSample ets = sample_event_time(target, policy, x, v, rng, method);
        if (horizon.kind == Horizon::Kind::Duration && t + ets.tau >= horizon.duration) {
            const double remaining = horizon.duration - t;
            traj.events.push_back({horizon.duration, EventKind::Final, x + remaining * v, v});
            traj.duration = horizon.duration;
            break;
        }
        t += ets.tau;
        x += ets.tau * v;
        auto [kind, v_new] = detail::apply_jump(target, x, v, ets, rng);
        v = v_new;
        traj.events.push_back({t, kind, x, v});
        ++jumps;
        if (horizon.kind == Horizon::Kind::Events && jumps >= horizon.events) {
            traj.duration = t;
            break;
        }
    }
    return traj;
}

}  // namespace bpskit
