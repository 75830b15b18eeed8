#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include "cqedfb/cli.hpp"
#include "cqedfb/config.hpp"

// Command-line front end.  Subcommands share the same config file; each reads
// only the sections it needs, and every run is deterministic for a given
// config and seed.
int main(int argc, char** argv) {
    CLI::App app{"cavity QED feedback toolbox"};
    app.require_subcommand(1);

    cqedfb::cli::Options opt;
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto add_common = [&](CLI::App* sub, bool with_seed) {
        sub->add_option("--config", opt.config_path, "configuration file")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out_dir, "output directory (created if missing)");
        sub->add_flag("--json", opt.json_out, "also write JSON reports");
        if (with_seed)
            sub->add_option("--seed", seed, "override the configured RNG seed")
                ->each([&seed_set](const std::string&) { seed_set = true; });
    };

    add_common(app.add_subcommand("steady", "weak-drive steady state and derived quantities"),
               false);
    add_common(app.add_subcommand("g2", "free-running conditional intensity correlation"), false);
    add_common(app.add_subcommand("capture", "feedback capture and release trace"), false);
    add_common(app.add_subcommand("sweep", "intensity-step response sweep"), false);
    add_common(app.add_subcommand("mc", "quantum-jump Monte Carlo photon records"), true);
    add_common(app.add_subcommand("oracle", "density-matrix cross-check of g2"), false);

    CLI11_PARSE(app, argc, argv);
    if (seed_set) opt.seed = seed;

    try {
        const cqedfb::RunConfig cfg = cqedfb::load_config(opt.config_path);
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "steady")
            cqedfb::cli::cmd_steady(cfg, opt);
        else if (cmd == "g2")
            cqedfb::cli::cmd_g2(cfg, opt);
        else if (cmd == "capture")
            cqedfb::cli::cmd_capture(cfg, opt);
        else if (cmd == "sweep")
            cqedfb::cli::cmd_sweep(cfg, opt);
        else if (cmd == "mc")
            cqedfb::cli::cmd_mc(cfg, opt);
        else
            cqedfb::cli::cmd_oracle(cfg, opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
