// sgflow command line: run a configured simulation, run the self-checks,
// or render a seeds CSV.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "sgflow/io.hpp"
#include "sgflow/verify.hpp"

namespace {

int cmd_run(const std::string& path) {
    sgflow::RunConfig cfg;
    try {
        cfg = sgflow::load_config(path);
    } catch (const sgflow::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    try {
        return sgflow::run(cfg);
    } catch (const sgflow::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

int cmd_verify(const sgflow::verify::VerifyOptions& o) {
    const auto results = sgflow::verify::run_all(o);
    bool ok = true;
    for (const auto& r : results) {
        std::printf("%-4s %-22s measured=%-12.4e threshold=%-10.3e %7.2fs  %s\n", r.passed ? "PASS" : "FAIL",
                    r.name.c_str(), r.measured, r.threshold, r.seconds, r.detail.c_str());
        ok &= r.passed;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-geostrophic particle flow via semi-discrete optimal transport"};
    app.set_version_flag("--version", SGFLOW_VERSION);
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "Simulate from a JSON config and write artifacts");
    run->add_option("config", config_path, "Run configuration (or a run_manifest.json)")->required();

    sgflow::verify::VerifyOptions vo;
    auto* verify = app.add_subcommand("verify", "Run the oracle self-checks");
    verify->add_option("--single-mass-h", vo.single_mass_h, "Step for the single-mass trajectory check");
    verify->add_option("--order-h", vo.order_h, "Base step of the order study");
    verify->add_option("--fd-step", vo.fd_step, "Finite-difference step for the gradient check");
    verify->add_option("--seed", vo.rng_seed, "RNG seed for random instances");
    verify->add_flag("--all", vo.include_long, "Also run the conservation and refinement runs (minutes)");
    verify->add_flag("--full-scale", vo.include_full_scale, "Also run the N=2000 conservation run");

    std::string seeds_csv, out_svg, render_config;
    auto* render = app.add_subcommand("render", "Render a seeds CSV to SVG");
    render->add_option("seeds", seeds_csv, "seeds_####.csv")->required();
    render->add_option("out", out_svg, "Output SVG")->required();
    render->add_option("--config", render_config, "Config supplying the domain");

    CLI11_PARSE(app, argc, argv);

    if (*run) return cmd_run(config_path);
    if (*verify) return cmd_verify(vo);
    try {
        sgflow::render_file(seeds_csv, out_svg,
                            render_config.empty() ? std::nullopt : std::optional<std::string>(render_config));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
