#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cqedfb/cli.hpp"
#include "cqedfb/config.hpp"
#include "cqedfb/errors.hpp"

using namespace cqedfb;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "test.cfg");
}

std::string parse_error(const std::string& text) {
    std::istringstream in(text);
    try {
        parse_config(in, "test.cfg");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

const std::string kMinimal =
    "g_mhz = 5.1\n"
    "kappa_mhz = 3.7\n"
    "gamma_mhz = 6.0\n"
    "gamma_prime_mhz = 9.1\n"
    "n_atoms = 2\n"
    "epsilon_mhz = 0.5\n";

fs::path fresh_dir(const std::string& tag) {
    static int counter = 0;
    const fs::path dir =
        fs::temp_directory_path() / ("cqedfb_cli_" + tag + "_" + std::to_string(counter++));
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Non-comment lines of a table file.
std::vector<std::string> data_lines(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') out.push_back(line);
    return out;
}

std::map<std::string, double> key_values(const fs::path& p) {
    std::map<std::string, double> out;
    for (const auto& line : data_lines(p)) {
        const auto eq = line.find('=');
        REQUIRE(eq != std::string::npos);
        std::string key = line.substr(0, eq);
        key.erase(key.find_last_not_of(' ') + 1);
        out[key] = std::stod(line.substr(eq + 1));
    }
    return out;
}

}  // namespace

TEST_CASE("minimal config parses with documented defaults") {
    const RunConfig cfg = parse(kMinimal);
    CHECK(cfg.params.g_mhz == 5.1);
    CHECK(cfg.params.kappa_mhz == 3.7);
    CHECK(cfg.params.gamma_mhz == 6.0);
    CHECK(cfg.params.gamma_prime_mhz == 9.1);
    CHECK(cfg.params.n_atoms == 2.0);
    CHECK(cfg.params.epsilon_mhz == 0.5);
    CHECK_FALSE(cfg.n_over_n0.has_value());

    CHECK(cfg.tau_max_ns == 300.0);
    CHECK(cfg.dt_ns == 0.1);
    CHECK(cfg.cutoff == 2);
    CHECK(cfg.oracle_cutoff == 4);

    CHECK(cfg.pulse.start_auto);
    CHECK(cfg.pulse.mode == CrossingMode::rising);
    CHECK(cfg.pulse.guard_ns == 45.0);
    CHECK(cfg.pulse.duration_ns == 120.0);
    CHECK(cfg.pulse.risetime_ns == 8.0);
    CHECK(cfg.pulse.step_auto);
    CHECK(cfg.pulse.shape_file.empty());
    CHECK(cfg.sweep_steps.empty());

    CHECK(cfg.mc.trajectories == 1000);
    CHECK(cfg.mc.duration_ns == 2000.0);
    CHECK(cfg.mc.seed == 1);
    CHECK(cfg.mc.splitter_ratio == 0.5);
    CHECK_FALSE(cfg.mc.feedback);
    CHECK(cfg.hist.bin_ns == 0.5);
    CHECK(cfg.hist.rebin == 1);
    CHECK(cfg.hist.multi_stop);
    CHECK(cfg.hist.normalize == NormalizeMode::tail_average);
}

TEST_CASE("gamma_prime falls back to gamma") {
    const RunConfig cfg = parse(
        "g_mhz = 1\nkappa_mhz = 2\ngamma_mhz = 6\nn_atoms = 1\nepsilon_mhz = 0.1\n");
    CHECK(cfg.params.gamma_prime_mhz == 6.0);
}

TEST_CASE("comments, blank lines and inline comments are tolerated") {
    const RunConfig cfg = parse(
        "# system\n"
        "\n"
        "g_mhz = 5.1   # coupling\n"
        "kappa_mhz = 3.7\n"
        "gamma_mhz = 6.0\n"
        "n_atoms = 2\n"
        "epsilon_mhz = 0.5\n");
    CHECK(cfg.params.g_mhz == 5.1);
}

TEST_CASE("drive specification is exactly one of two forms") {
    const std::string base =
        "g_mhz = 5.1\nkappa_mhz = 3.7\ngamma_mhz = 6.0\nn_atoms = 2\n";
    CHECK(parse_error(base).find("exactly one of") != std::string::npos);
    CHECK(parse_error(base + "epsilon_mhz = 0.5\nn_over_n0 = 0.07\n").find("exactly one of") !=
          std::string::npos);

    const RunConfig cfg = parse(base + "n_over_n0 = 0.07\n");
    REQUIRE(cfg.n_over_n0.has_value());
    CHECK(*cfg.n_over_n0 == 0.07);
    // The drive resolves so that the weak-drive photon number hits the target.
    const DerivedRates d = derived_rates(cfg.params);
    CHECK(d.lambda * d.lambda == Catch::Approx(0.07 * d.n0).epsilon(1e-12));
}

TEST_CASE("effective pair supersedes the atom count") {
    const RunConfig cfg = parse(
        "g_mhz = 5.1\nkappa_mhz = 3.7\ngamma_mhz = 6.0\ngamma_prime_mhz = 9.1\n"
        "n_atoms = 5\nepsilon_mhz = 0.5\n"
        "fit.vacuum_rabi_mhz = 37.0\nfit.g2_zero = 0.236192\n");
    CHECK(cfg.params.n_atoms != 5.0);
    CHECK(cfg.params.vacuum_rabi_mhz() == Catch::Approx(37.0).epsilon(1e-9));
    // check the fitted pair in the regime where the target is defined
    SystemParams weak = cfg.params;
    weak.epsilon_mhz = 1e-6 * weak.kappa_mhz * (1.0 + derived_rates(weak).c1 * weak.n_atoms);
    const auto sol = solve_amplitudes(weak);
    CHECK(sol.g2_zero == Catch::Approx(0.236192).epsilon(1e-6));

    SECTION("half a pair is an error") {
        CHECK(parse_error(kMinimal + "fit.vacuum_rabi_mhz = 37.0\n")
                  .find("fit.g2_zero") != std::string::npos);
    }
}

TEST_CASE("config error reporting") {
    SECTION("missing required key") {
        CHECK(parse_error("kappa_mhz = 1\ngamma_mhz = 1\nn_atoms = 1\nepsilon_mhz = 0.1\n")
                  .find("g_mhz") != std::string::npos);
    }
    SECTION("unknown keys are rejected with their line") {
        const std::string msg = parse_error(kMinimal + "banana = 7\n");
        CHECK(msg.find("unknown key 'banana'") != std::string::npos);
        CHECK(msg.find("test.cfg:7") != std::string::npos);
    }
    SECTION("duplicate keys are rejected") {
        CHECK(parse_error(kMinimal + "g_mhz = 2\n").find("duplicate key 'g_mhz'") !=
              std::string::npos);
    }
    SECTION("malformed lines carry the line number") {
        CHECK(parse_error("g_mhz\n").find("test.cfg:1") != std::string::npos);
    }
    SECTION("non-numeric values") {
        CHECK(parse_error(kMinimal + "grid.dt_ns = fast\n").find("not a number") !=
              std::string::npos);
    }
    SECTION("bad booleans") {
        CHECK(parse_error(kMinimal + "mc.feedback = yep\n").find("true/false") !=
              std::string::npos);
    }
    SECTION("bad enums") {
        CHECK(parse_error(kMinimal + "pulse.mode = sideways\n").find("rising or falling") !=
              std::string::npos);
        CHECK(parse_error(kMinimal + "mc.trigger = middle\n").find("start or stop") !=
              std::string::npos);
        CHECK(parse_error(kMinimal + "hist.normalize = none\n").find("tail or rate") !=
              std::string::npos);
    }
    SECTION("range checks") {
        CHECK(parse_error(kMinimal + "grid.dt_ns = 0\n").find("positive") != std::string::npos);
        CHECK(parse_error(kMinimal + "cutoff = 1\n").find(">= 2") != std::string::npos);
        CHECK(parse_error(kMinimal + "hist.rebin = 0\n").find(">= 1") != std::string::npos);
    }
    SECTION("non-integer integers") {
        CHECK(parse_error(kMinimal + "mc.trajectories = 2.5\n").find("nonnegative integer") !=
              std::string::npos);
        CHECK(parse_error(kMinimal + "cutoff = 2.7\n").find("integer") != std::string::npos);
    }
}

TEST_CASE("pulse and sweep fields parse") {
    const RunConfig cfg = parse(kMinimal +
                                "pulse.start_ns = 60.5\n"
                                "pulse.mode = falling\n"
                                "pulse.duration_ns = 80\n"
                                "pulse.risetime_ns = 4\n"
                                "pulse.intensity_step = -0.026\n"
                                "sweep.steps = -0.02, 0, 0.02\n");
    CHECK_FALSE(cfg.pulse.start_auto);
    CHECK(cfg.pulse.start_ns == 60.5);
    CHECK(cfg.pulse.mode == CrossingMode::falling);
    CHECK(cfg.pulse.duration_ns == 80.0);
    CHECK(cfg.pulse.risetime_ns == 4.0);
    CHECK_FALSE(cfg.pulse.step_auto);
    CHECK(cfg.pulse.intensity_step == -0.026);
    REQUIRE(cfg.sweep_steps.size() == 3);
    CHECK(cfg.sweep_steps[0] == -0.02);
    CHECK(cfg.sweep_steps[1] == 0.0);
    CHECK(cfg.sweep_steps[2] == 0.02);

    const RunConfig autos = parse(kMinimal +
                                  "pulse.start_ns = auto\npulse.intensity_step = auto\n");
    CHECK(autos.pulse.start_auto);
    CHECK(autos.pulse.step_auto);

    CHECK(parse_error(kMinimal + "pulse.start_ns = soon\n").find("number or 'auto'") !=
          std::string::npos);
}

TEST_CASE("echo lines reproduce the resolved configuration") {
    const RunConfig cfg = parse(kMinimal);
    const auto lines = cfg.echo_lines();
    auto find = [&](const std::string& prefix) {
        for (const auto& l : lines)
            if (l.rfind(prefix, 0) == 0) return l;
        return std::string();
    };
    CHECK(find("g_mhz = ") == "g_mhz = 5.1");
    CHECK(find("gamma_prime_mhz = ") == "gamma_prime_mhz = 9.1");
    CHECK(find("epsilon_mhz = ") == "epsilon_mhz = 0.5");
    CHECK_FALSE(find("mc.seed = ").empty());
}

TEST_CASE("steady command writes matching text and json reports") {
    // Nearly unmeasurable drive so the reported pair sits on the weak-drive
    // limit, where the frozen reference values below were derived.
    const RunConfig cfg = parse(
        "g_mhz = 5.1\nkappa_mhz = 3.7\ngamma_mhz = 6.0\ngamma_prime_mhz = 9.1\n"
        "n_atoms = 2\nepsilon_mhz = 5e-5\n");
    cli::Options opt;
    opt.out_dir = fresh_dir("steady").string();
    opt.json_out = true;
    cli::cmd_steady(cfg, opt);

    const fs::path dir(opt.out_dir);
    const auto kv = key_values(dir / "steady.txt");
    REQUIRE(kv.count("lambda") == 1);
    REQUIRE(kv.count("zeta0") == 1);
    REQUIRE(kv.count("theta0") == 1);
    REQUIRE(kv.count("g2_zero") == 1);
    REQUIRE(kv.count("cooperativity_single") == 1);
    REQUIRE(kv.count("saturation_photon_number") == 1);
    REQUIRE(kv.count("vacuum_rabi_mhz") == 1);
    REQUIRE(kv.count("mean_photon_number") == 1);

    const auto j = nlohmann::json::parse(slurp(dir / "steady.json"));
    for (const auto& [key, value] : kv)
        CHECK(j.at(key).get<double>() == Catch::Approx(value).epsilon(1e-9));

    // Spot physics: frozen pair for this parameter set.
    CHECK(kv.at("zeta0") == Catch::Approx(0.369730997199).epsilon(1e-9));
    CHECK(kv.at("theta0") == Catch::Approx(1.203971139219).epsilon(1e-9));
}

TEST_CASE("g2 command output is stable across reruns") {
    RunConfig cfg = parse(kMinimal);
    cfg.tau_max_ns = 50.0;
    cfg.dt_ns = 0.5;

    cli::Options a, b;
    a.out_dir = fresh_dir("g2a").string();
    b.out_dir = fresh_dir("g2b").string();
    cli::cmd_g2(cfg, a);
    cli::cmd_g2(cfg, b);

    const std::string fa = slurp(fs::path(a.out_dir) / "g2.csv");
    CHECK(fa == slurp(fs::path(b.out_dir) / "g2.csv"));

    const auto rows = data_lines(fs::path(a.out_dir) / "g2.csv");
    REQUIRE(rows.size() == 102);  // header + 101 samples
    CHECK(rows[0] == "tau_ns,g2");
}

TEST_CASE("capture command resolves the pulse automatically") {
    const RunConfig cfg = parse(
        "g_mhz = 4.405565351\n"
        "kappa_mhz = 3.7\n"
        "gamma_mhz = 6.0\n"
        "gamma_prime_mhz = 9.1\n"
        "n_atoms = 70.534266\n"
        "n_over_n0 = 1e-8\n"
        "grid.tau_max_ns = 250\n"
        "grid.dt_ns = 0.5\n"
        "pulse.risetime_ns = 0\n");
    cli::Options opt;
    opt.out_dir = fresh_dir("capture").string();
    cli::cmd_capture(cfg, opt);

    const fs::path dir(opt.out_dir);
    const auto rows = data_lines(dir / "capture.csv");
    REQUIRE(rows.size() == 502);
    CHECK(rows[0] == "tau_ns,g2_feedback,g2_free");

    const auto kv = key_values(dir / "capture.txt");
    CHECK(kv.at("pulse_start_ns") == Catch::Approx(60.7654).margin(0.01));
    CHECK(kv.at("intensity_step") == Catch::Approx(-0.026).margin(1e-4));
    CHECK(kv.at("zeta_at_capture") == Catch::Approx(0.986914).margin(1e-4));
    CHECK(kv.at("lambda_prime") > 0.0);
}

TEST_CASE("sweep command handles explicit, duplicate and empty step lists") {
    RunConfig cfg = parse(
        "g_mhz = 4.405565351\n"
        "kappa_mhz = 3.7\n"
        "gamma_mhz = 6.0\n"
        "gamma_prime_mhz = 9.1\n"
        "n_atoms = 70.534266\n"
        "n_over_n0 = 1e-8\n"
        "pulse.risetime_ns = 0\n"
        "sweep.steps = 0.02, -0.02, 0.02\n");
    cli::Options opt;
    opt.out_dir = fresh_dir("sweep").string();
    cli::cmd_sweep(cfg, opt);
    auto rows = data_lines(fs::path(opt.out_dir) / "sweep.csv");
    REQUIRE(rows.size() == 3);  // header + two unique steps
    CHECK(rows[0] == "intensity_step,tau_star_ns,response");

    cfg.sweep_steps.clear();
    cli::Options empty;
    empty.out_dir = fresh_dir("sweep_empty").string();
    cli::cmd_sweep(cfg, empty);
    rows = data_lines(fs::path(empty.out_dir) / "sweep.csv");
    REQUIRE(rows.size() == 1);
}

TEST_CASE("mc command writes clicks, histogram and correlation tables") {
    const RunConfig cfg = parse(
        "g_mhz = 5.1\n"
        "kappa_mhz = 3.7\n"
        "gamma_mhz = 6.0\n"
        "gamma_prime_mhz = 9.1\n"
        "n_atoms = 2\n"
        "epsilon_mhz = 2.3\n"
        "mc.trajectories = 200\n"
        "mc.duration_ns = 600\n"
        "mc.cutoff = 2\n"
        "mc.seed = 42\n"
        "mc.threads = 1\n"
        "hist.bin_ns = 5\n"
        "hist.tau_min_ns = -100\n"
        "hist.tau_max_ns = 100\n"
        "hist.normalize = rate\n");
    cli::Options opt;
    opt.out_dir = fresh_dir("mc").string();
    cli::cmd_mc(cfg, opt);

    const fs::path dir(opt.out_dir);
    const auto clicks = data_lines(dir / "clicks.csv");
    REQUIRE(clicks.size() >= 2);
    CHECK(clicks[0] == "trajectory_id,detector,time_ns");

    const auto hist = data_lines(dir / "histogram.csv");
    REQUIRE(hist.size() == 41);  // header + 200/5 bins
    CHECK(hist[0] == "bin_lo_ns,counts");

    const auto g2 = data_lines(dir / "g2_mc.csv");
    REQUIRE(g2.size() == 41);
    CHECK(g2[0] == "tau_ns,g2,stderr");

    SECTION("seed override changes the record, same seed repeats it") {
        cli::Options o2;
        o2.out_dir = fresh_dir("mc_seed").string();
        o2.seed = 42;
        cli::cmd_mc(cfg, o2);
        CHECK(data_lines(fs::path(o2.out_dir) / "clicks.csv") == clicks);

        cli::Options o3;
        o3.out_dir = fresh_dir("mc_seed2").string();
        o3.seed = 43;
        cli::cmd_mc(cfg, o3);
        CHECK(data_lines(fs::path(o3.out_dir) / "clicks.csv") != clicks);
    }
}

TEST_CASE("oracle command reports the route deviation") {
    const RunConfig cfg = parse(kMinimal +
                                "grid.tau_max_ns = 50\n"
                                "grid.dt_ns = 1\n");
    cli::Options opt;
    opt.out_dir = fresh_dir("oracle").string();
    opt.json_out = true;
    cli::cmd_oracle(cfg, opt);

    const fs::path dir(opt.out_dir);
    const auto rows = data_lines(dir / "g2_oracle.csv");
    REQUIRE(rows.size() == 52);
    CHECK(rows[0] == "tau_ns,g2");

    const auto kv = key_values(dir / "oracle_report.txt");
    REQUIRE(kv.count("max_abs_deviation") == 1);
    REQUIRE(kv.count("tau_at_max_ns") == 1);
    REQUIRE(kv.count("lambda") == 1);
    // lambda ~ 0.033 here, so the two routes sit within O(lambda^2).
    CHECK(kv.at("max_abs_deviation") < 1e-2);

    const auto j = nlohmann::json::parse(slurp(dir / "oracle_report.json"));
    CHECK(j.at("max_abs_deviation").get<double>() ==
          Catch::Approx(kv.at("max_abs_deviation")).epsilon(1e-9));
}
