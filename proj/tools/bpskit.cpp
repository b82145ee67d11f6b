// bpskit command line: simulate the bouncy particle sampler, compute
// trajectory estimates with CLT error bars, and run drift/regime diagnostics.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bpskit/cli.hpp"

namespace {

int dispatch(const std::function<int()>& body) {
    try {
        return body();
    } catch (const bpskit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const bpskit::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const bpskit::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bouncy particle sampler toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed_override = 0;
    bool has_seed_override = false;
    int threads = 1;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* opt = cmd->add_option("--config", config_path, "JSON run configuration");
        if (needs_config) opt->required();
        cmd->add_option("--seed", seed_override, "override the config seed")
            ->each([&](const std::string&) { has_seed_override = true; });
        cmd->add_option("--threads", threads, "worker threads for chain ensembles");
        cmd->add_option("--out", out_dir, "output directory");
    };

    auto* sample = app.add_subcommand("sample", "simulate trajectories");
    add_common(sample, true);

    auto* estimate = app.add_subcommand("estimate", "compute estimates from trajectory files");
    std::vector<std::string> traj_paths;
    estimate->add_option("paths", traj_paths, "trajectory JSONL files")->required();
    estimate->add_option("--config", config_path, "config providing the estimator list");

    auto* diagnose = app.add_subcommand("diagnose", "drift verification and regime advice");
    add_common(diagnose, true);
    std::vector<double> radii;
    int directions = 16;
    int velocity_angles = 33;
    diagnose->add_option("--radii", radii, "shell radii for the drift sweep");
    diagnose->add_option("--directions", directions, "sphere directions per shell");
    diagnose->add_option("--angles", velocity_angles, "uniform velocity angles per direction");

    auto* tcheck = app.add_subcommand("transform-check", "transform finite-difference suites");
    add_common(tcheck, true);

    CLI11_PARSE(app, argc, argv);

    return dispatch([&]() -> int {
        if (sample->parsed()) {
            bpskit::RunConfig cfg = bpskit::load_config(config_path);
            if (has_seed_override) cfg.seed = seed_override;
            const auto files = bpskit::run_sample(cfg, out_dir, threads);
            for (const auto& f : files) std::cout << f << "\n";
            return 0;
        }
        if (estimate->parsed()) {
            std::vector<bpskit::TestFunctionSpec> specs;
            if (!config_path.empty()) {
                specs = bpskit::load_config(config_path).estimators;
            }
            if (specs.empty())
                throw bpskit::ConfigError("estimate: provide --config with an 'estimators' list");
            std::cout << bpskit::run_estimate(traj_paths, specs).dump(2) << "\n";
            return 0;
        }
        if (diagnose->parsed()) {
            bpskit::RunConfig cfg = bpskit::load_config(config_path);
            bpskit::DiagnoseOptions opts;
            if (!radii.empty()) opts.radii = radii;
            opts.directions = directions;
            opts.velocity_angles = velocity_angles;
            const auto result = bpskit::run_diagnose(cfg, opts);
            std::cerr << result.at("table").get<std::string>();
            std::cout << result.dump(2) << "\n";
            return 0;
        }
        if (tcheck->parsed()) {
            bpskit::RunConfig cfg = bpskit::load_config(config_path);
            const auto result = bpskit::run_transform_check(cfg);
            std::cout << result.dump(2) << "\n";
            return result.at("pass").get<bool>() ? 0 : 3;
        }
        return 1;
    });
}
