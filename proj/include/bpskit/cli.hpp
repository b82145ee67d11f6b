#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "bpskit/bps.hpp"
#include "bpskit/common.hpp"
#include "bpskit/diagnostics.hpp"
#include "bpskit/estimators.hpp"
#include "bpskit/serialize.hpp"
#include "bpskit/target.hpp"
#include "bpskit/transform.hpp"

namespace bpskit {

// --- logging, controlled by BPSKIT_LOG (debug|info|warn|error; default warn) ---

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

inline LogLevel log_threshold() {
    static const LogLevel level = [] {
        const char* env = std::getenv("BPSKIT_LOG");
        if (!env) return LogLevel::Warn;
        const std::string s(env);
        if (s == "debug") return LogLevel::Debug;
        if (s == "info") return LogLevel::Info;
        if (s == "error") return LogLevel::Error;
        return LogLevel::Warn;
    }();
    return level;
}

inline void log_msg(LogLevel level, const std::string& msg) {
    static const char* names[] = {"debug", "info", "warn", "error"};
    if (int(level) >= int(log_threshold())) {
        std::cerr << "[bpskit:" << names[int(level)] << "] " << msg << "\n";
    }
}

// --- run configuration ---

struct TestFunctionSpec {
    std::string kind;        // "monomial" | "radius_sq"
    std::vector<int> alpha;  // monomial exponents over position coordinates

    TestFunction build(int dimension) const {
        if (kind == "monomial") {
            if (int(alpha.size()) != dimension)
                throw ConfigError("estimator: monomial alpha size != dimension");
            return TestFunction::monomial(alpha);
        }
        if (kind == "radius_sq") {
            return TestFunction::generic(
                [](const VectorXd& x, const VectorXd&) { return x.squaredNorm(); });
        }
        throw ConfigError("estimator: unknown kind '" + kind + "'");
    }

    std::string label() const {
        if (kind == "radius_sq") return "|x|^2";
        std::string s = "x^(";
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(alpha[i]);
        }
        return s + ")";
    }
};

inline void to_json(json& j, const TestFunctionSpec& spec) {
    j = json{{"kind", spec.kind}};
    if (spec.kind == "monomial") j["alpha"] = spec.alpha;
}

inline void from_json(const json& j, TestFunctionSpec& spec) {
    spec.kind = j.at("kind").get<std::string>();
    if (spec.kind == "monomial") spec.alpha = j.at("alpha").get<std::vector<int>>();
}

struct RunConfig {
    TargetConfig target;
    RefreshPolicy policy;
    std::optional<IsotropicTransform> transform;
    Horizon horizon;
    std::uint64_t seed = 0;
    int chains = 1;
    std::vector<double> init_x;  // sampling-space init position; empty = origin
    std::vector<TestFunctionSpec> estimators;
    bool force_transform = false;
};

inline bool is_thick_tailed(const TargetConfig& cfg) {
    return cfg.family == "student_t" || (cfg.family == "gen_gaussian" && cfg.beta < 1.0);
}

inline void to_json(json& j, const RunConfig& cfg) {
    json horizon = cfg.horizon.kind == Horizon::Kind::Duration
                       ? json{{"duration", cfg.horizon.duration}}
                       : json{{"events", cfg.horizon.events}};
    j = json{{"target", cfg.target},
             {"policy", cfg.policy},
             {"transform", cfg.transform ? json(*cfg.transform) : json(nullptr)},
             {"horizon", horizon},
             {"seed", cfg.seed},
             {"chains", cfg.chains}};
    if (!cfg.init_x.empty()) j["init"] = json{{"x", cfg.init_x}};
    if (!cfg.estimators.empty()) j["estimators"] = cfg.estimators;
    if (cfg.force_transform) j["force"] = true;
}

inline void from_json(const json& j, RunConfig& cfg) {
    cfg.target = j.at("target").get<TargetConfig>();
    cfg.policy = j.at("policy").get<RefreshPolicy>();
    cfg.transform.reset();
    if (j.contains("transform") && !j.at("transform").is_null())
        cfg.transform = j.at("transform").get<IsotropicTransform>();
    const json& h = j.at("horizon");
    if (h.contains("duration")) {
        cfg.horizon = Horizon::for_duration(h.at("duration").get<double>());
    } else if (h.contains("events")) {
        cfg.horizon = Horizon::for_events(h.at("events").get<std::int64_t>());
    } else {
        throw ConfigError("horizon: need 'duration' or 'events'");
    }
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.chains = j.value("chains", 1);
    if (cfg.chains < 1) throw ConfigError("chains must be >= 1");
    cfg.init_x.clear();
    if (j.contains("init")) cfg.init_x = j.at("init").at("x").get<std::vector<double>>();
    cfg.estimators.clear();
    if (j.contains("estimators"))
        cfg.estimators = j.at("estimators").get<std::vector<TestFunctionSpec>>();
    cfg.force_transform = j.value("force", false);

    make_target(cfg.target);  // validates family and parameters early
    if (cfg.transform && !is_thick_tailed(cfg.target) && !cfg.force_transform)
        throw ConfigError(
            "transform configured for a target without thick tails; pass --force to override");
    if (!cfg.init_x.empty() && int(cfg.init_x.size()) != cfg.target.dimension)
        throw ConfigError("init.x dimension mismatch");
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::parse_error& err) {
        throw ConfigError("config parse error: " + std::string(err.what()));
    }
    try {
        return j.get<RunConfig>();
    } catch (const json::exception& err) {
        throw ConfigError("config schema error: " + std::string(err.what()));
    }
}

// Effective sampling target: the transformed potential when a change of
// variables is configured, the base target otherwise.
inline TargetPtr sampling_target(const RunConfig& cfg) {
    TargetPtr base = make_target(cfg.target);
    if (cfg.transform) return std::make_shared<TransformedTarget>(base, *cfg.transform);
    return base;
}

inline Trajectory simulate_chain(const RunConfig& cfg, const Target& target, std::uint64_t chain) {
    RngStream rng(cfg.seed, chain);
    const int d = cfg.target.dimension;
    State init;
    init.x = cfg.init_x.empty() ? VectorXd::Zero(d)
                                : VectorXd(Eigen::Map<const VectorXd>(cfg.init_x.data(), d));
    init.v = sample_velocity(rng, d);
    Trajectory traj = simulate(target, cfg.policy, init, cfg.horizon, rng);
    traj.meta.target = cfg.target;
    traj.meta.policy = cfg.policy;
    traj.meta.transform = cfg.transform;
    traj.meta.seed = cfg.seed;
    traj.meta.chain = chain;
    return traj;
}

// Runs fn(chain) for chains 0..n-1 on a small worker pool. Chain results are
// independent of the thread assignment; the first exception wins.
template <typename Fn>
void for_each_chain(int n_chains, int threads, const Fn& fn) {
    threads = std::max(1, std::min(threads, n_chains));
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            const int c = next.fetch_add(1);
            if (c >= n_chains) return;
            try {
                fn(c);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// `sample`: one JSONL trajectory per chain plus a manifest with the config
// hash and derived chain seeds.
inline std::vector<std::string> run_sample(const RunConfig& cfg, const std::string& out_dir,
                                           int threads) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir);

    TargetPtr target = sampling_target(cfg);
    std::vector<std::string> files(cfg.chains);
    for (int c = 0; c < cfg.chains; ++c) {
        char name[32];
        std::snprintf(name, sizeof(name), "chain_%03d.jsonl", c);
        files[c] = (fs::path(out_dir) / name).string();
    }
    for_each_chain(cfg.chains, threads, [&](int c) {
        const Trajectory traj = simulate_chain(cfg, *target, std::uint64_t(c));
        write_trajectory_file(files[c], traj);
        log_msg(LogLevel::Info, "chain " + std::to_string(c) + ": " +
                                    std::to_string(traj.events.size()) + " events -> " + files[c]);
    });

    json cfg_json = cfg;
    json manifest{{"schema", "bpskit/manifest-v1"},
                  {"config", cfg_json},
                  {"config_hash", config_hash(cfg_json)},
                  {"chains", cfg.chains},
                  {"files", files}};
    json seeds = json::array();
    for (int c = 0; c < cfg.chains; ++c)
        seeds.push_back(json{{"chain", c}, {"seed", cfg.seed}, {"stream", c}});
    manifest["streams"] = seeds;
    std::ofstream os(fs::path(out_dir) / "manifest.json", std::ios::binary);
    if (!os) throw IoError("cannot write manifest");
    os << manifest.dump(2) << '\n';
    return files;
}

// Chain-level pooling: the pooled point estimate is the duration-weighted mean
// and the error bar treats each chain as one batch of its own duration.
inline EstimateReport pool_reports(const std::vector<EstimateReport>& chain_reports,
                                   const std::vector<double>& durations) {
    if (chain_reports.size() == 1) return chain_reports.front();
    const std::size_t n = chain_reports.size();
    double total_t = 0.0, weighted = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total_t += durations[i];
        weighted += durations[i] * chain_reports[i].estimate;
    }
    const double mean = weighted / total_t;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        ss += durations[i] * math::sq(chain_reports[i].estimate - mean);
    EstimateReport pooled;
    pooled.estimate = mean;
    pooled.sigma2 = ss / double(n - 1);  // duration-scaled chain-level batch means
    pooled.batches = int(n);
    pooled.batch_len = total_t / double(n);
    double ess = 0.0;
    for (const auto& r : chain_reports) ess += r.ess;
    pooled.ess = ess;
    return pooled;
}

// `estimate`: per-function reports pooled across chains. Transformed runs use
// the mapped estimator g o H on the y-trajectory.
inline json run_estimate(const std::vector<std::string>& paths,
                         const std::vector<TestFunctionSpec>& specs) {
    if (paths.empty()) throw ConfigError("estimate: no trajectory files given");
    if (specs.empty()) throw ConfigError("estimate: no test functions configured");

    std::vector<Trajectory> trajs;
    trajs.reserve(paths.size());
    for (const auto& p : paths) trajs.push_back(read_trajectory_file(p));
    for (const auto& t : trajs) {
        if (t.meta.target != trajs.front().meta.target ||
            !(t.meta.policy == trajs.front().meta.policy) ||
            t.meta.transform != trajs.front().meta.transform)
            throw ConfigError("estimate: trajectories come from mixed configs");
    }
    const auto& meta = trajs.front().meta;
    const int d = meta.target.dimension;

    json out{{"schema", "bpskit/estimates-v1"}, {"functions", json::array()}};
    for (const auto& spec : specs) {
        const TestFunction g = spec.build(d);
        std::vector<EstimateReport> reports;
        std::vector<double> durations;
        for (const auto& traj : trajs) {
            reports.push_back(meta.transform ? mapped_estimate(*meta.transform, traj, g)
                                             : path_average(traj, g));
            durations.push_back(traj.duration);
        }
        json per_chain = json::array();
        for (const auto& r : reports) per_chain.push_back(r);
        out["functions"].push_back(json{{"spec", spec},
                                        {"label", spec.label()},
                                        {"pooled", pool_reports(reports, durations)},
                                        {"per_chain", per_chain}});
    }
    return out;
}

struct DiagnoseOptions {
    std::vector<double> radii = {20, 30, 40, 50, 60, 80, 100};
    int directions = 16;
    int velocity_angles = 33;
};

inline std::string drift_table(const DriftReport& rep) {
    std::string s = "radius      sup 2LV/V   verdict\n";
    char line[128];
    for (const auto& shell : rep.shells) {
        std::snprintf(line, sizeof(line), "%-10.4g  %-10.4g  %s\n", shell.radius, shell.sup_ratio,
                      shell.sup_ratio < 0 ? "negative" : "NON-NEGATIVE");
        s += line;
    }
    if (rep.confirmed) {
        std::snprintf(line, sizeof(line), "confirmed: negative drift outside K = %.4g (sup %.4g)\n",
                      *rep.threshold_radius, *rep.sup_outside);
    } else {
        std::snprintf(line, sizeof(line), "violated: no grid radius with all-negative tail\n");
    }
    return s + line;
}

inline json run_diagnose(const RunConfig& cfg, const DiagnoseOptions& opts) {
    TargetPtr target = sampling_target(cfg);
    const DriftReport drift =
        verify_drift(*target, cfg.policy, opts.radii, opts.directions, opts.velocity_angles);
    const RegimeAdvice advice = classify_regime(make_target(cfg.target));
    return json{{"schema", "bpskit/diagnose-v1"},
                {"drift_report", drift},
                {"regime_advice", advice},
                {"table", drift_table(drift)}};
}

// `transform-check`: finite-difference and round-trip suites for the
// configured transform against its base target.
inline json run_transform_check(const RunConfig& cfg) {
    if (!cfg.transform) throw ConfigError("transform-check: config has no transform");
    const IsotropicTransform& h = *cfg.transform;
    TargetPtr base = make_target(cfg.target);
    TransformedTarget pulled(base, h);
    const int d = cfg.target.dimension;

    RngStream rng(cfg.seed, 9001);
    const double branch = h.branch_radius();
    auto random_point = [&](double scale) {
        for (;;) {
            VectorXd y = scale * rng.uniform01() * rng.unit_sphere(d);
            const double r = y.norm();
            if (r > 1e-3 && std::abs(r - branch) > 1e-3) return y;
        }
    };

    double roundtrip_err = 0.0, grad_err = 0.0, logdet_grad_err = 0.0, det_err = 0.0;
    for (int i = 0; i < 100; ++i) {
        const VectorXd y = random_point(6.0);
        const VectorXd x = h.apply(y);
        roundtrip_err = std::max(roundtrip_err,
                                 (h.apply(h.invert(x)) - x).norm() / (1.0 + x.norm()));

        const double step = 1e-5 * (1.0 + y.norm());
        const VectorXd g = pulled.grad(y);
        const VectorXd g_fd = fd_gradient(pulled, y, step);
        grad_err = std::max(grad_err, (g - g_fd).norm() / std::max(1.0, g.norm()));

        const auto ld = h.log_det_jacobian(y);
        VectorXd ld_fd(d);
        VectorXd e = y;
        for (int c = 0; c < d; ++c) {
            e[c] = y[c] + step;
            const double up = h.log_det_jacobian(e).value;
            e[c] = y[c] - step;
            const double dn = h.log_det_jacobian(e).value;
            e[c] = y[c];
            ld_fd[c] = (up - dn) / (2.0 * step);
        }
        logdet_grad_err = std::max(logdet_grad_err,
                                   (ld.gradient - ld_fd).norm() / std::max(1.0, ld.gradient.norm()));

        const double det_direct = h.jacobian(y).determinant();
        const double det_formula = std::exp(ld.value);
        det_err = std::max(det_err, std::abs(det_direct - det_formula) / std::abs(det_formula));
    }

    // C2 joins of the radial map at the branch point
    const double eps = 1e-9;
    const auto lo = h.radial(branch - eps);
    const auto hi = h.radial(branch + eps);
    const double join_err = std::max({std::abs(lo.f - hi.f), std::abs(lo.df - hi.df),
                                      std::abs(lo.ddf - hi.ddf) / std::max(1.0, std::abs(hi.ddf))});

    const bool pass = roundtrip_err < 1e-10 && grad_err < 1e-5 && logdet_grad_err < 1e-5 &&
                      det_err < 1e-5 && join_err < 1e-6;
    return json{{"schema", "bpskit/transform-check-v1"},
                {"roundtrip_rel_err", roundtrip_err},
                {"grad_rel_err", grad_err},
                {"logdet_grad_rel_err", logdet_grad_err},
                {"det_rel_err", det_err},
                {"branch_join_err", join_err},
                {"pass", pass}};
}

}  // namespace bpskit
