#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bpskit/cli.hpp"
#include "bpskit/serialize.hpp"

using namespace bpskit;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    const fs::path dir = fs::temp_directory_path() / "bpskit_tests";
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path write_config(const std::string& name, const json& j) {
    const fs::path p = test_dir() / name;
    std::ofstream os(p);
    os << j.dump(2);
    return p;
}

json base_config() {
    return json{{"target", {{"family", "gaussian"}, {"dimension", 2}, {"parameters", json::object()}}},
                {"policy", {{"kind", "constant"}, {"lambda_ref", 1.0}}},
                {"horizon", {{"duration", 10.0}}},
                {"seed", 42},
                {"chains", 4},
                {"estimators", json::array({{{"kind", "monomial"}, {"alpha", {0, 0}}},
                                            {{"kind", "monomial"}, {"alpha", {2, 0}}}})}};
}

}  // namespace

TEST_CASE("doubles serialise to the shortest round-trip form") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(-2.5e-7) == "-2.5e-07");
    RngStream rng(9);
    for (int i = 0; i < 2000; ++i) {
        const double x = (rng.uniform01() - 0.5) * std::pow(10.0, int(rng.uniform01() * 40) - 20);
        const double back = std::strtod(format_double(x).c_str(), nullptr);
        REQUIRE(back == x);
    }
}

TEST_CASE("trajectory files round-trip bit-exactly") {
    const auto target = make_target({"gaussian", 2, 1.0, 1.0, {}});
    RngStream rng(31, 5);
    Trajectory traj = simulate(*target, RefreshPolicy::constant(1.0),
                               State{Eigen::Vector2d(0.25, -1), Eigen::Vector2d(0, 1)},
                               Horizon::for_duration(25.0), rng);
    traj.meta.target = {"gaussian", 2, 1.0, 1.0, {}};
    traj.meta.policy = RefreshPolicy::constant(1.0);
    traj.meta.transform = IsotropicTransform::polynomial(1.0, 5);
    traj.meta.seed = 31;
    traj.meta.chain = 5;

    std::stringstream ss;
    write_trajectory(ss, traj);
    const std::string first_bytes = ss.str();

    std::stringstream parse_stream(first_bytes);
    const Trajectory back = read_trajectory(parse_stream);
    REQUIRE(back.events.size() == traj.events.size());
    REQUIRE(back.duration == traj.duration);
    REQUIRE(back.meta.seed == traj.meta.seed);
    REQUIRE(back.meta.chain == traj.meta.chain);
    REQUIRE(back.meta.target == traj.meta.target);
    REQUIRE(back.meta.policy == traj.meta.policy);
    REQUIRE(back.meta.transform.has_value());
    REQUIRE(back.meta.transform->p == 5);
    for (std::size_t k = 0; k < traj.events.size(); ++k) {
        REQUIRE(back.events[k].t == traj.events[k].t);
        REQUIRE(back.events[k].kind == traj.events[k].kind);
        REQUIRE((back.events[k].x - traj.events[k].x).norm() == 0.0);
        REQUIRE((back.events[k].v - traj.events[k].v).norm() == 0.0);
    }

    std::stringstream again;
    write_trajectory(again, back);
    REQUIRE(again.str() == first_bytes);

    // estimates recomputed from the file equal the in-process values exactly
    const auto g = TestFunction::monomial({2, 0});
    CHECK(path_average(back, g).estimate == path_average(traj, g).estimate);
}

TEST_CASE("sample command: reproducible files, one per chain") {
    const fs::path dir_a = test_dir() / "run_a";
    const fs::path dir_b = test_dir() / "run_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);

    RunConfig cfg = load_config(write_config("cfg.json", base_config()).string());
    const auto files_a = run_sample(cfg, dir_a.string(), 2);
    const auto files_b = run_sample(cfg, dir_b.string(), 1);
    REQUIRE(files_a.size() == 4);

    for (int c = 0; c < 4; ++c) {
        REQUIRE(fs::exists(files_a[c]));
        // same config + seed give byte-identical trajectories, regardless of threads
        REQUIRE(read_file(files_a[c]) == read_file(files_b[c]));
    }
    // distinct streams per chain
    CHECK(read_file(files_a[0]) != read_file(files_a[1]));

    // duration horizon truncates at exactly T = 10
    const Trajectory t0 = read_trajectory_file(files_a[0]);
    CHECK(t0.events.back().kind == EventKind::Final);
    CHECK(t0.events.back().t == 10.0);

    const json manifest = json::parse(read_file(dir_a / "manifest.json"));
    CHECK(manifest.at("chains") == 4);
    CHECK(manifest.at("files").size() == 4);
    CHECK(manifest.contains("config_hash"));
}

TEST_CASE("estimate command pools chains") {
    const fs::path dir = test_dir() / "run_est";
    fs::remove_all(dir);
    json cfg_json = base_config();
    cfg_json["horizon"] = {{"duration", 400.0}};
    RunConfig cfg = load_config(write_config("cfg_est.json", cfg_json).string());
    const auto files = run_sample(cfg, dir.string(), 2);

    const json out = run_estimate(files, cfg.estimators);
    REQUIRE(out.at("functions").size() == 2);
    const auto& ones = out.at("functions")[0].at("pooled");
    CHECK(ones.at("estimate").get<double>() == Catch::Approx(1.0).margin(1e-12));
    const auto& second = out.at("functions")[1].at("pooled");
    CHECK(second.at("estimate").get<double>() == Catch::Approx(1.0).margin(0.35));
    CHECK(second.at("batches").get<int>() == 4);

    // pooled sigma2 is of the order of the per-chain estimates
    double max_chain = 0.0;
    for (const auto& r : out.at("functions")[1].at("per_chain")) {
        max_chain = std::max(max_chain, r.at("sigma2").get<double>());
    }
    CHECK(second.at("sigma2").get<double>() <= 10.0 * max_chain);

    // mixed configs are rejected
    json other = cfg_json;
    other["policy"] = {{"kind", "constant"}, {"lambda_ref", 2.0}};
    RunConfig cfg2 = load_config(write_config("cfg_est2.json", other).string());
    const fs::path dir2 = test_dir() / "run_est2";
    fs::remove_all(dir2);
    const auto files2 = run_sample(cfg2, dir2.string(), 1);
    std::vector<std::string> mixed = {files[0], files2[0]};
    CHECK_THROWS_AS(run_estimate(mixed, cfg.estimators), ConfigError);
}

TEST_CASE("config validation errors") {
    json bad_family = base_config();
    bad_family["target"]["family"] = "cauchy";
    CHECK_THROWS_AS(load_config(write_config("bad1.json", bad_family).string()), ConfigError);

    json bad_transform = base_config();
    bad_transform["transform"] = {{"kind", "exp"}, {"b", 1.0}};
    CHECK_THROWS_AS(load_config(write_config("bad2.json", bad_transform).string()), ConfigError);
    bad_transform["force"] = true;
    CHECK_NOTHROW(load_config(write_config("bad2b.json", bad_transform).string()));

    json frac_p = base_config();
    frac_p["target"] = {{"family", "gen_gaussian"},
                        {"dimension", 2},
                        {"parameters", {{"beta", 0.5}}}};
    frac_p["transform"] = {{"kind", "poly"}, {"R", 1.0}, {"p", 3.5}};
    CHECK_THROWS_AS(load_config(write_config("bad3.json", frac_p).string()), ConfigError);

    CHECK_THROWS_AS(load_config("/nonexistent/path.json"), IoError);

    // corrupt trajectory files surface as I/O errors, not generic failures
    std::stringstream bad_header("{not json\n");
    CHECK_THROWS_AS(read_trajectory(bad_header), IoError);
    std::stringstream missing_fields("{\"schema\":\"bpskit/trajectory-v1\"}\n");
    CHECK_THROWS_AS(read_trajectory(missing_fields), IoError);
}

TEST_CASE("diagnose and transform-check commands") {
    RunConfig cfg = load_config(write_config("cfg_diag.json", base_config()).string());
    cfg.policy = RefreshPolicy::constant(10.0);
    DiagnoseOptions opts;
    opts.radii = {40, 60, 80};
    opts.directions = 4;
    opts.velocity_angles = 17;
    const json diag = run_diagnose(cfg, opts);
    CHECK(diag.at("drift_report").at("verdict") == "confirmed");
    CHECK(diag.at("regime_advice").at("regime") == "regular-a");
    CHECK(diag.contains("table"));

    json tcfg_json = base_config();
    tcfg_json["target"] = {{"family", "student_t"}, {"dimension", 2}, {"parameters", {{"k", 1.0}}}};
    tcfg_json["transform"] = {{"kind", "exp"}, {"b", 1.0}};
    RunConfig tcfg = load_config(write_config("cfg_tc.json", tcfg_json).string());
    const json tc = run_transform_check(tcfg);
    CHECK(tc.at("pass").get<bool>());
    CHECK(tc.at("grad_rel_err").get<double>() < 1e-5);
}
