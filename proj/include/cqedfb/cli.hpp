#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cqedfb/conditional.hpp"
#include "cqedfb/config.hpp"
#include "cqedfb/correlator.hpp"
#include "cqedfb/drive.hpp"
#include "cqedfb/errors.hpp"
#include "cqedfb/mc.hpp"
#include "cqedfb/oracle.hpp"
#include "cqedfb/steady_state.hpp"

// Subcommand implementations behind the cqedfb binary.  Every command is a
// pure function of (config, options): reruns produce byte-identical files, so
// nothing here reads clocks or hostnames.
namespace cqedfb::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;  // overrides mc.seed
    bool json_out = false;
};

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

// CSV/report sink with the resolved configuration echoed as '#' comments.
class Table {
  public:
    Table(const fs::path& path, const std::string& command, const RunConfig& cfg) {
        out_.open(path, std::ios::binary);
        if (!out_) throw std::runtime_error("cannot open output file: " + path.string());
        out_ << "# cqedfb " << command << "\n";
        for (const auto& line : cfg.echo_lines()) out_ << "# " << line << "\n";
    }

    void line(const std::string& s) { out_ << s << "\n"; }

    template <class... Ts>
    void row(Ts... cells) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
        out_ << "\n";
    }

  private:
    static std::string cell(double v) { return fmt(v); }
    static std::string cell(std::uint64_t v) { return std::to_string(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(const char* v) { return v; }
    static std::string cell(const std::string& v) { return v; }

    std::ofstream out_;
};

inline fs::path prepare_out_dir(const Options& opt) {
    fs::path dir(opt.out_dir);
    fs::create_directories(dir);
    return dir;
}

inline std::vector<double> uniform_grid(double tau_max_ns, double dt_ns) {
    const auto n = static_cast<std::size_t>(std::floor(tau_max_ns / dt_ns + 1e-9));
    std::vector<double> grid(n + 1);
    for (std::size_t i = 0; i <= n; ++i) grid[i] = static_cast<double>(i) * dt_ns;
    return grid;
}

// Free conditional trace at one delay, starting from the post-click state.
inline ConditionalState free_state_at(const RunConfig& cfg, double tau_ns) {
    const ConditionalState init = cqedfb::detail::post_click_initial(cfg.params);
    const DriveWaveform wf(cfg.params.epsilon_mhz, {});
    const double grid[1] = {tau_ns};
    return evolve(init, cfg.params, wf, grid)[0];
}

struct ResolvedPulse {
    FeedbackPulse pulse;
    std::optional<CaptureSolution> capture;  // present when start was auto
};

// Fill in the 'auto' fields: pulse start from the requested crossing of the
// free trace, intensity step from the value that freezes the trace there.
inline ResolvedPulse resolve_pulse(const RunConfig& cfg) {
    ResolvedPulse r;
    r.pulse.duration_ns = cfg.pulse.duration_ns;
    r.pulse.risetime_ns = cfg.pulse.risetime_ns;
    if (!cfg.pulse.shape_file.empty()) {
        r.pulse.shape = load_sampled_shape(cfg.pulse.shape_file);
        r.pulse.duration_ns = r.pulse.shape->duration_ns();
        r.pulse.risetime_ns = 0.0;
    }
    if (cfg.pulse.start_auto) {
        r.capture = find_capture(cfg.params, cfg.pulse.mode, cfg.pulse.guard_ns);
        r.pulse.start_ns = r.capture->t_capture_ns;
    } else {
        r.pulse.start_ns = cfg.pulse.start_ns;
    }
    if (cfg.pulse.step_auto) {
        if (r.capture) {
            r.pulse.intensity_step = r.capture->intensity_step;
        } else {
            const double z = free_state_at(cfg, r.pulse.start_ns).zeta;
            r.pulse.intensity_step = z * z - 1.0;
        }
    } else {
        r.pulse.intensity_step = cfg.pulse.intensity_step;
    }
    r.pulse.validate();
    return r;
}

}  // namespace detail

inline void cmd_steady(const RunConfig& cfg, const Options& opt) {
    const fs::path dir = detail::prepare_out_dir(opt);
    const auto sol = solve_amplitudes(cfg.params, cfg.cutoff);
    const DerivedRates d = derived_rates(cfg.params);

    detail::Table t(dir / "steady.txt", "steady", cfg);
    t.line("lambda = " + detail::fmt(sol.lambda));
    t.line("zeta0 = " + detail::fmt(sol.zeta0));
    t.line("theta0 = " + detail::fmt(sol.theta0));
    t.line("g2_zero = " + detail::fmt(sol.g2_zero));
    t.line("cooperativity_single = " + detail::fmt(d.c1));
    t.line("saturation_photon_number = " + detail::fmt(d.n0));
    t.line("vacuum_rabi_mhz = " + detail::fmt(d.vacuum_rabi_mhz));
    t.line("mean_photon_number = " + detail::fmt(sol.lambda * sol.lambda));

    if (opt.json_out) {
        json j;
        j["lambda"] = sol.lambda;
        j["zeta0"] = sol.zeta0;
        j["theta0"] = sol.theta0;
        j["g2_zero"] = sol.g2_zero;
        j["cooperativity_single"] = d.c1;
        j["saturation_photon_number"] = d.n0;
        j["vacuum_rabi_mhz"] = d.vacuum_rabi_mhz;
        j["mean_photon_number"] = sol.lambda * sol.lambda;
        std::ofstream out(dir / "steady.json", std::ios::binary);
        out << j.dump(2) << "\n";
    }
}

inline void cmd_g2(const RunConfig& cfg, const Options& opt) {
    const fs::path dir = detail::prepare_out_dir(opt);
    const G2Series g = g2_free(cfg.params, cfg.tau_max_ns, cfg.dt_ns);

    detail::Table t(dir / "g2.csv", "g2", cfg);
    t.row("tau_ns", "g2");
    for (std::size_t i = 0; i < g.tau_ns.size(); ++i) t.row(g.tau_ns[i], g.values[i]);
}

inline void cmd_capture(const RunConfig& cfg, const Options& opt) {
    const fs::path dir = detail::prepare_out_dir(opt);
    const auto resolved = detail::resolve_pulse(cfg);

    const G2Series fed =
        simulate_capture_release(cfg.params, resolved.pulse, cfg.tau_max_ns, cfg.dt_ns);
    const G2Series free_trace = g2_free(cfg.params, cfg.tau_max_ns, cfg.dt_ns);

    detail::Table t(dir / "capture.csv", "capture", cfg);
    t.row("tau_ns", "g2_feedback", "g2_free");
    for (std::size_t i = 0; i < fed.tau_ns.size(); ++i)
        t.row(fed.tau_ns[i], fed.values[i], free_trace.values[i]);

    detail::Table s(dir / "capture.txt", "capture", cfg);
    s.line("pulse_start_ns = " + detail::fmt(resolved.pulse.start_ns));
    s.line("pulse_duration_ns = " + detail::fmt(resolved.pulse.duration_ns));
    s.line("pulse_risetime_ns = " + detail::fmt(resolved.pulse.risetime_ns));
    s.line("intensity_step = " + detail::fmt(resolved.pulse.intensity_step));
    if (resolved.capture) {
        s.line("zeta_at_capture = " + detail::fmt(resolved.capture->zeta_at_capture));
        s.line("lambda_prime = " + detail::fmt(resolved.capture->lambda_prime));
    }

    if (opt.json_out) {
        json j;
        j["pulse_start_ns"] = resolved.pulse.start_ns;
        j["pulse_duration_ns"] = resolved.pulse.duration_ns;
        j["pulse_risetime_ns"] = resolved.pulse.risetime_ns;
        j["intensity_step"] = resolved.pulse.intensity_step;
        if (resolved.capture) {
            j["zeta_at_capture"] = resolved.capture->zeta_at_capture;
            j["lambda_prime"] = resolved.capture->lambda_prime;
        }
        std::ofstream out(dir / "capture.json", std::ios::binary);
        out << j.dump(2) << "\n";
    }
}

inline void cmd_sweep(const RunConfig& cfg, const Options& opt) {
    const fs::path dir = detail::prepare_out_dir(opt);

    std::vector<double> steps = cfg.sweep_steps;
    std::sort(steps.begin(), steps.end());
    const auto dup = std::unique(steps.begin(), steps.end());
    if (dup != steps.end()) {
        std::cerr << "warning: removed " << std::distance(dup, steps.end())
                  << " duplicate sweep step(s)\n";
        steps.erase(dup, steps.end());
    }

    FeedbackPulse pulse;
    if (!steps.empty()) {
        auto resolved = detail::resolve_pulse(cfg);
        pulse = resolved.pulse;
    }

    detail::Table t(dir / "sweep.csv", "sweep", cfg);
    t.row("intensity_step", "tau_star_ns", "response");
    if (!steps.empty()) {
        const auto rows = sweep_steps(cfg.params, pulse, steps);
        for (const auto& r : rows) t.row(r.intensity_step, r.tau_star_ns, r.response);
    }
}

inline void cmd_mc(const RunConfig& cfg, const Options& opt) {
    const fs::path dir = detail::prepare_out_dir(opt);

    mc::TrajectoryConfig run;
    run.n_trajectories = cfg.mc.trajectories;
    run.duration_ns = cfg.mc.duration_ns;
    run.seed = opt.seed.value_or(cfg.mc.seed);
    run.excitation_cutoff = cfg.mc.cutoff;
    run.splitter_ratio = cfg.mc.splitter_ratio;
    run.efficiency_start = cfg.mc.efficiency_start;
    run.efficiency_stop = cfg.mc.efficiency_stop;
    run.ground_start = cfg.mc.ground_start;
    run.burn_in_ns = cfg.mc.burn_in_ns;
    run.step_ns = cfg.mc.step_ns;
    run.n_threads = cfg.mc.threads;
    if (cfg.mc.feedback) {
        mc::FeedbackConfig fb;
        fb.loop_delay_ns = cfg.mc.loop_delay_ns;
        fb.trigger = cfg.mc.trigger;
        fb.retrigger = cfg.mc.retrigger;
        fb.pulse.duration_ns = cfg.pulse.duration_ns;
        fb.pulse.risetime_ns = cfg.pulse.risetime_ns;
        if (!cfg.pulse.shape_file.empty()) {
            fb.pulse.shape = load_sampled_shape(cfg.pulse.shape_file);
            fb.pulse.duration_ns = fb.pulse.shape->duration_ns();
            fb.pulse.risetime_ns = 0.0;
        }
        if (cfg.pulse.step_auto) {
            // Natural step: the value that freezes the free trace one loop
            // delay after a click, which is where the pulse lands.
            const double z = detail::free_state_at(cfg, fb.loop_delay_ns).zeta;
            fb.pulse.intensity_step = z * z - 1.0;
        } else {
            fb.pulse.intensity_step = cfg.pulse.intensity_step;
        }
        run.feedback = fb;
    }

    const mc::RunResult result = mc::run(cfg.params, run);

    detail::Table clicks(dir / "clicks.csv", "mc", cfg);
    clicks.row("trajectory_id", "detector", "time_ns");
    for (const auto& c : result.clicks)
        clicks.row(c.trajectory_id, c.detector == mc::Detector::start ? "start" : "stop",
                   c.time_ns);

    HistogramWindow window;
    window.bin_width_ns = cfg.hist.bin_ns;
    window.tau_min_ns = cfg.hist.tau_min_ns;
    window.tau_max_ns = cfg.hist.tau_max_ns;
    window.record_duration_ns = cfg.mc.duration_ns;
    window.multi_stop = cfg.hist.multi_stop;
    Histogram h = histogram(result.clicks, window);
    if (cfg.hist.rebin > 1) h = rebin(h, cfg.hist.rebin);

    detail::Table hist_out(dir / "histogram.csv", "mc", cfg);
    hist_out.row("bin_lo_ns", "counts");
    for (std::size_t i = 0; i < h.counts.size(); ++i)
        hist_out.row(h.tau_min_ns + static_cast<double>(i) * h.bin_width_ns, h.counts[i]);

    double independent_rate = 0.0;
    if (cfg.hist.normalize == NormalizeMode::steady_rate)
        independent_rate = static_cast<double>(result.n_stop_clicks) /
                           (static_cast<double>(result.n_trajectories) * result.duration_ns);
    const G2Series g = normalize(h, cfg.hist.normalize, independent_rate);

    detail::Table g2_out(dir / "g2_mc.csv", "mc", cfg);
    g2_out.row("tau_ns", "g2", "stderr");
    for (std::size_t i = 0; i < g.tau_ns.size(); ++i)
        g2_out.row(g.tau_ns[i], g.values[i], g.stderr_values[i]);
}

inline void cmd_oracle(const RunConfig& cfg, const Options& opt) {
    const fs::path dir = detail::prepare_out_dir(opt);
    const auto grid = detail::uniform_grid(cfg.tau_max_ns, cfg.dt_ns);

    const G2Series dm = oracle::g2_of_tau(cfg.params, cfg.oracle_cutoff, grid);
    const G2Series cond = g2_free(cfg.params, cfg.tau_max_ns, cfg.dt_ns);

    detail::Table t(dir / "g2_oracle.csv", "oracle", cfg);
    t.row("tau_ns", "g2");
    for (std::size_t i = 0; i < dm.tau_ns.size(); ++i) t.row(dm.tau_ns[i], dm.values[i]);

    double max_dev = 0.0;
    double tau_at_max = 0.0;
    for (std::size_t i = 0; i < dm.values.size(); ++i) {
        const double dev = std::fabs(dm.values[i] - cond.values[i]);
        if (dev > max_dev) {
            max_dev = dev;
            tau_at_max = dm.tau_ns[i];
        }
    }
    detail::Table rep(dir / "oracle_report.txt", "oracle", cfg);
    rep.line("max_abs_deviation = " + detail::fmt(max_dev));
    rep.line("tau_at_max_ns = " + detail::fmt(tau_at_max));
    rep.line("lambda = " + detail::fmt(derived_rates(cfg.params).lambda));

    if (opt.json_out) {
        json j;
        j["max_abs_deviation"] = max_dev;
        j["tau_at_max_ns"] = tau_at_max;
        j["lambda"] = derived_rates(cfg.params).lambda;
        std::ofstream out(dir / "oracle_report.json", std::ios::binary);
        out << j.dump(2) << "\n";
    }
}

}  // namespace cqedfb::cli
