#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "bpskit/bps.hpp"
#include "bpskit/common.hpp"
#include "bpskit/diagnostics.hpp"
#include "bpskit/estimators.hpp"
#include "bpskit/target.hpp"
#include "bpskit/transform.hpp"

namespace bpskit {

using nlohmann::json;

// Shortest decimal representation that parses back to the same bits.
inline std::string format_double(double value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    if (res.ec != std::errc()) throw NumericalError("format_double: to_chars failed");
    return std::string(buf, res.ptr);
}

inline void to_json(json& j, const TargetConfig& cfg) {
    json params = json::object();
    if (cfg.family == "gen_gaussian") params["beta"] = cfg.beta;
    if (cfg.family == "student_t") params["k"] = cfg.k;
    if (cfg.family == "gaussian" && !cfg.cov_diagonal.empty())
        params["covariance_diagonal"] = cfg.cov_diagonal;
    j = json{{"family", cfg.family}, {"dimension", cfg.dimension}, {"parameters", params}};
}

inline void from_json(const json& j, TargetConfig& cfg) {
    cfg.family = j.at("family").get<std::string>();
    cfg.dimension = j.at("dimension").get<int>();
    cfg.beta = 1.0;
    cfg.k = 1.0;
    cfg.cov_diagonal.clear();
    if (j.contains("parameters")) {
        const json& p = j.at("parameters");
        if (p.contains("beta")) cfg.beta = p.at("beta").get<double>();
        if (p.contains("k")) cfg.k = p.at("k").get<double>();
        if (p.contains("covariance_diagonal"))
            cfg.cov_diagonal = p.at("covariance_diagonal").get<std::vector<double>>();
    }
}

inline void to_json(json& j, const RefreshPolicy& policy) {
    if (policy.kind == RefreshPolicy::Kind::Constant) {
        j = json{{"kind", "constant"}, {"lambda_ref", policy.lambda_ref}};
    } else {
        j = json{{"kind", "position_dependent"},
                 {"lambda_ref", policy.lambda_ref},
                 {"epsilon", policy.epsilon}};
    }
}

inline void from_json(const json& j, RefreshPolicy& policy) {
    const std::string kind = j.at("kind").get<std::string>();
    const double lref = j.at("lambda_ref").get<double>();
    if (kind == "constant") {
        policy = RefreshPolicy::constant(lref);
    } else if (kind == "position_dependent") {
        policy = RefreshPolicy::position_dependent(lref, j.value("epsilon", 0.5));
    } else {
        throw ConfigError("unknown policy kind: '" + kind + "'");
    }
}

inline void to_json(json& j, const IsotropicTransform& t) {
    if (t.kind == IsotropicTransform::Kind::Exponential) {
        j = json{{"kind", "exp"}, {"b", t.b}};
    } else {
        j = json{{"kind", "poly"}, {"R", t.R}, {"p", t.p}};
    }
}

inline void from_json(const json& j, IsotropicTransform& t) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "exp") {
        t = IsotropicTransform::exponential(j.value("b", 1.0));
    } else if (kind == "poly") {
        if (j.contains("p") && !j.at("p").is_number_integer())
            throw ConfigError("transform: non-integer p is unsupported");
        t = IsotropicTransform::polynomial(j.value("R", 1.0), j.value("p", 3));
    } else {
        throw ConfigError("unknown transform kind: '" + kind + "'");
    }
}

inline void to_json(json& j, const EstimateReport& rep) {
    j = json{{"estimate", rep.estimate},
             {"sigma2", rep.sigma2},
             {"batches", rep.batches},
             {"batch_len", rep.batch_len},
             {"ess", rep.ess}};
}

inline void from_json(const json& j, EstimateReport& rep) {
    rep.estimate = j.at("estimate").get<double>();
    rep.sigma2 = j.at("sigma2").get<double>();
    rep.batches = j.at("batches").get<int>();
    rep.batch_len = j.at("batch_len").get<double>();
    rep.ess = j.at("ess").get<double>();
}

inline json vector_to_json(const VectorXd& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline void to_json(json& j, const DriftReport& rep) {
    json shells = json::array();
    for (const auto& s : rep.shells) {
        shells.push_back(json{{"radius", s.radius},
                              {"sup_ratio", s.sup_ratio},
                              {"witness_x", vector_to_json(s.worst_x)},
                              {"witness_v", vector_to_json(s.worst_v)}});
    }
    j = json{{"policy", rep.policy},
             {"grid", json{{"radii", rep.radii},
                           {"directions", rep.directions},
                           {"velocity_angles", rep.velocity_angles}}},
             {"shells", shells},
             {"K", rep.threshold_radius ? json(*rep.threshold_radius) : json(nullptr)},
             {"sup_outside", rep.sup_outside ? json(*rep.sup_outside) : json(nullptr)},
             {"verdict", rep.confirmed ? "confirmed" : "violated"}};
}

inline void to_json(json& j, const RegimeAdvice& advice) {
    j = json{{"regime", advice.regime},
             {"policy", advice.policy ? json(*advice.policy) : json(nullptr)},
             {"transform", advice.transform ? json(*advice.transform) : json(nullptr)},
             {"probes", json{{"radii", advice.probe_radii},
                             {"grad_norm", advice.grad_norm},
                             {"hess_norm", advice.hess_norm},
                             {"radial_dot", advice.radial_dot}}},
             {"grad_exponent", advice.grad_exponent},
             {"hess_exponent", advice.hess_exponent},
             {"alpha1", advice.alpha1},
             {"alpha2", advice.alpha2},
             {"beta_hat", advice.beta_hat},
             {"lambda_bound", advice.lambda_bound}};
}

// --- trajectory JSONL ---
// Header line carries the provenance; each further line is one event:
//   {"t":..., "kind":"init"|"bounce"|"refresh"|"final", "x":[...], "v":[...]}
// Floats use the shortest representation that round-trips bit-exactly.

inline void write_trajectory(std::ostream& os, const Trajectory& traj) {
    json header{{"schema", "bpskit/trajectory-v1"},
                {"d", traj.events.empty() ? 0 : int(traj.events.front().x.size())},
                {"seed", traj.meta.seed},
                {"chain", traj.meta.chain},
                {"duration", traj.duration},
                {"target", traj.meta.target},
                {"policy", traj.meta.policy},
                {"transform",
                 traj.meta.transform ? json(*traj.meta.transform) : json(nullptr)}};
    os << header.dump() << '\n';
    for (const Event& e : traj.events) {
        os << "{\"t\":" << format_double(e.t) << ",\"kind\":\"" << to_string(e.kind)
           << "\",\"x\":[";
        for (int i = 0; i < e.x.size(); ++i) {
            if (i) os << ',';
            os << format_double(e.x[i]);
        }
        os << "],\"v\":[";
        for (int i = 0; i < e.v.size(); ++i) {
            if (i) os << ',';
            os << format_double(e.v[i]);
        }
        os << "]}\n";
    }
}

inline EventKind event_kind_from_string(const std::string& s) {
    if (s == "init") return EventKind::Init;
    if (s == "bounce") return EventKind::Bounce;
    if (s == "refresh") return EventKind::Refresh;
    if (s == "final") return EventKind::Final;
    throw IoError("trajectory: unknown event kind '" + s + "'");
}

namespace detail {

inline json parse_record(const std::string& line, const char* what) {
    try {
        return json::parse(line);
    } catch (const json::exception& err) {
        throw IoError(std::string("trajectory: malformed ") + what + ": " + err.what());
    }
}

}  // namespace detail

inline Trajectory read_trajectory(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw IoError("trajectory: missing header line");
    json header = detail::parse_record(line, "header");
    if (header.value("schema", "") != "bpskit/trajectory-v1")
        throw IoError("trajectory: unexpected schema");

    Trajectory traj;
    int d = 0;
    try {
        traj.duration = header.at("duration").get<double>();
        traj.meta.seed = header.at("seed").get<std::uint64_t>();
        traj.meta.chain = header.at("chain").get<std::uint64_t>();
        traj.meta.target = header.at("target").get<TargetConfig>();
        traj.meta.policy = header.at("policy").get<RefreshPolicy>();
        if (!header.at("transform").is_null())
            traj.meta.transform = header.at("transform").get<IsotropicTransform>();
        d = header.at("d").get<int>();
    } catch (const json::exception& err) {
        throw IoError(std::string("trajectory: bad header: ") + err.what());
    }

    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json ev = detail::parse_record(line, "event");
        Event e;
        try {
            e.t = ev.at("t").get<double>();
            e.kind = event_kind_from_string(ev.at("kind").get<std::string>());
            const auto xs = ev.at("x").get<std::vector<double>>();
            const auto vs = ev.at("v").get<std::vector<double>>();
            if (int(xs.size()) != d || int(vs.size()) != d)
                throw IoError("trajectory: event dimension mismatch");
            e.x = Eigen::Map<const VectorXd>(xs.data(), d);
            e.v = Eigen::Map<const VectorXd>(vs.data(), d);
        } catch (const json::exception& err) {
            throw IoError(std::string("trajectory: bad event: ") + err.what());
        }
        traj.events.push_back(std::move(e));
    }
    if (traj.events.empty()) throw IoError("trajectory: no events");
    return traj;
}

inline void write_trajectory_file(const std::string& path, const Trajectory& traj) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_trajectory(os, traj);
    os.flush();
    if (!os) throw IoError("write failed: " + path);
}

inline Trajectory read_trajectory_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_trajectory(is);
}

// FNV-1a over a canonical dump; good enough to detect config mismatches.
inline std::string config_hash(const json& j) {
    const std::string dump = j.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace bpskit
