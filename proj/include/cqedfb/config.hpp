#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cqedfb/conditional.hpp"
#include "cqedfb/correlator.hpp"
#include "cqedfb/drive.hpp"
#include "cqedfb/effective_fit.hpp"
#include "cqedfb/errors.hpp"
#include "cqedfb/mc.hpp"
#include "cqedfb/params.hpp"

// Plain key = value configuration.  '#' starts a comment, keys are dotted
// paths, unknown keys are hard errors so typos cannot silently fall back to
// defaults.
namespace cqedfb {

struct PulseSpec {
    bool start_auto = true;            // start_ns = "auto": place at a zeta = theta crossing
    double start_ns = 0.0;
    CrossingMode mode = CrossingMode::rising;
    double guard_ns = 45.0;
    double duration_ns = 120.0;
    double risetime_ns = 8.0;
    bool step_auto = true;             // intensity_step = "auto": freeze the free trace
    double intensity_step = 0.0;
    std::string shape_file;            // optional sampled profile
};

struct McSpec {
    std::uint64_t trajectories = 1000;
    double duration_ns = 2000.0;
    std::uint64_t seed = 1;
    int cutoff = 3;
    double splitter_ratio = 0.5;
    double efficiency_start = 1.0;
    double efficiency_stop = 1.0;
    bool feedback = false;
    double loop_delay_ns = 45.0;
    mc::Detector trigger = mc::Detector::start;
    bool retrigger = false;
    bool ground_start = false;
    double burn_in_ns = 0.0;           // 0: ten damping times
    double step_ns = 8.0;
    int threads = 0;                   // 0: hardware concurrency
};

struct HistSpec {
    double bin_ns = 0.5;
    double tau_min_ns = -300.0;
    double tau_max_ns = 300.0;
    int rebin = 1;
    bool multi_stop = true;
    NormalizeMode normalize = NormalizeMode::tail_average;
};

struct FitSpec {
    double vacuum_rabi_mhz = 0.0;
    double g2_zero = 0.0;
};

struct RunConfig {
    SystemParams params;               // fully resolved (after any effective fit)
    std::optional<FitSpec> fit;
    std::optional<double> n_over_n0;   // set when the drive came in as a photon number
    double tau_max_ns = 300.0;
    double dt_ns = 0.1;
    int cutoff = 2;                    // conditional / steady-state cutoff
    int oracle_cutoff = 4;
    PulseSpec pulse;
    std::vector<double> sweep_steps;
    McSpec mc;
    HistSpec hist;

    // Resolved configuration, one line per key, for the CSV comment headers.
    std::vector<std::string> echo_lines() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

class KeyValueFile {
  public:
    KeyValueFile(std::istream& in, std::string origin) : origin_(std::move(origin)) {
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin_ + ":" + std::to_string(lineno) +
                                  ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError(origin_ + ":" + std::to_string(lineno) + ": empty key");
            if (!entries_.emplace(key, Entry{value, lineno}).second)
                throw ConfigError(origin_ + ":" + std::to_string(lineno) +
                                  ": duplicate key '" + key + "'");
        }
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    std::string raw(const std::string& key) {
        auto it = entries_.find(key);
        if (it == entries_.end())
            throw ConfigError(origin_ + ": missing required key '" + key + "'");
        consumed_.insert(key);
        return it->second.value;
    }

    std::optional<std::string> raw_opt(const std::string& key) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        consumed_.insert(key);
        return it->second.value;
    }

    double number(const std::string& key) { return to_number(key, raw(key)); }

    double number_or(const std::string& key, double fallback) {
        auto v = raw_opt(key);
        return v ? to_number(key, *v) : fallback;
    }

    std::uint64_t unsigned_or(const std::string& key, std::uint64_t fallback) {
        auto v = raw_opt(key);
        if (!v) return fallback;
        const double d = to_number(key, *v);
        if (!(d >= 0.0) || d != std::floor(d) || d > 1.8e19)
            throw ConfigError(locate(key) + ": '" + key + "' must be a nonnegative integer");
        return static_cast<std::uint64_t>(d);
    }

    int int_or(const std::string& key, int fallback) {
        auto v = raw_opt(key);
        if (!v) return fallback;
        const double d = to_number(key, *v);
        if (d != std::floor(d) || std::fabs(d) > 1e9)
            throw ConfigError(locate(key) + ": '" + key + "' must be an integer");
        return static_cast<int>(d);
    }

    bool bool_or(const std::string& key, bool fallback) {
        auto v = raw_opt(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "on" || *v == "1") return true;
        if (*v == "false" || *v == "off" || *v == "0") return false;
        throw ConfigError(locate(key) + ": '" + key + "' must be true/false/on/off");
    }

    std::vector<double> number_list(const std::string& key) {
        std::vector<double> out;
        std::string body = raw(key);
        std::size_t pos = 0;
        while (pos <= body.size()) {
            const auto comma = body.find(',', pos);
            const std::string item =
                trim(body.substr(pos, comma == std::string::npos ? comma : comma - pos));
            if (!item.empty()) out.push_back(to_number(key, item));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return out;
    }

    void reject_unconsumed() const {
        for (const auto& [key, entry] : entries_)
            if (consumed_.count(key) == 0)
                throw ConfigError(origin_ + ":" + std::to_string(entry.lineno) +
                                  ": unknown key '" + key + "'");
    }

  private:
    struct Entry {
        std::string value;
        int lineno;
    };

    std::string locate(const std::string& key) const {
        auto it = entries_.find(key);
        return origin_ + (it == entries_.end() ? "" : ":" + std::to_string(it->second.lineno));
    }

    double to_number(const std::string& key, const std::string& text) const {
        try {
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError(locate(key) + ": '" + key + "' is not a number: '" + text + "'");
        }
    }

    std::string origin_;
    std::map<std::string, Entry> entries_;
    std::set<std::string> consumed_;
};

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in, const std::string& origin) {
    detail::KeyValueFile kv(in, origin);
    RunConfig cfg;

    SystemParams p;
    p.g_mhz = kv.number("g_mhz");
    p.kappa_mhz = kv.number("kappa_mhz");
    p.gamma_mhz = kv.number("gamma_mhz");
    p.gamma_prime_mhz = kv.number_or("gamma_prime_mhz", p.gamma_mhz);

    if (kv.has("fit.vacuum_rabi_mhz") || kv.has("fit.g2_zero")) {
        FitSpec fit;
        fit.vacuum_rabi_mhz = kv.number("fit.vacuum_rabi_mhz");
        fit.g2_zero = kv.number("fit.g2_zero");
        cfg.fit = fit;
        // n_atoms, if present, is superseded by the fitted effective pair.
        kv.number_or("n_atoms", 0.0);
        const EffectiveParams eff = fit_effective_params(
            p.g_mhz, p.kappa_mhz, p.gamma_prime_mhz, fit.vacuum_rabi_mhz, fit.g2_zero);
        p.g_mhz = eff.g_eff_mhz;
        p.n_atoms = eff.n_eff;
    } else {
        p.n_atoms = kv.number("n_atoms");
    }

    const bool has_eps = kv.has("epsilon_mhz");
    const bool has_n = kv.has("n_over_n0");
    if (has_eps == has_n)
        throw ConfigError(origin + ": exactly one of epsilon_mhz / n_over_n0 is required");
    if (has_eps) {
        p.epsilon_mhz = kv.number("epsilon_mhz");
    } else {
        cfg.n_over_n0 = kv.number("n_over_n0");
        p.epsilon_mhz = drive_for_photon_number(p, *cfg.n_over_n0);
    }
    p.validate();
    cfg.params = p;

    cfg.tau_max_ns = kv.number_or("grid.tau_max_ns", cfg.tau_max_ns);
    cfg.dt_ns = kv.number_or("grid.dt_ns", cfg.dt_ns);
    if (!(cfg.tau_max_ns > 0.0) || !(cfg.dt_ns > 0.0))
        throw ConfigError(origin + ": grid.tau_max_ns and grid.dt_ns must be positive");
    cfg.cutoff = kv.int_or("cutoff", cfg.cutoff);
    cfg.oracle_cutoff = kv.int_or("oracle.cutoff", cfg.oracle_cutoff);
    if (cfg.cutoff < 2 || cfg.oracle_cutoff < 2)
        throw ConfigError(origin + ": cutoffs must be >= 2");

    if (auto start = kv.raw_opt("pulse.start_ns")) {
        cfg.pulse.start_auto = (*start == "auto");
        if (!cfg.pulse.start_auto) {
            try {
                std::size_t used = 0;
                cfg.pulse.start_ns = std::stod(*start, &used);
                if (used != start->size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw ConfigError(origin + ": pulse.start_ns must be a number or 'auto'");
            }
        }
    }
    if (auto mode = kv.raw_opt("pulse.mode")) {
        if (*mode == "rising")
            cfg.pulse.mode = CrossingMode::rising;
        else if (*mode == "falling")
            cfg.pulse.mode = CrossingMode::falling;
        else
            throw ConfigError(origin + ": pulse.mode must be rising or falling");
    }
    cfg.pulse.guard_ns = kv.number_or("pulse.guard_ns", cfg.pulse.guard_ns);
    cfg.pulse.duration_ns = kv.number_or("pulse.duration_ns", cfg.pulse.duration_ns);
    cfg.pulse.risetime_ns = kv.number_or("pulse.risetime_ns", cfg.pulse.risetime_ns);
    if (auto step = kv.raw_opt("pulse.intensity_step")) {
        cfg.pulse.step_auto = (*step == "auto");
        if (!cfg.pulse.step_auto) {
            try {
                std::size_t used = 0;
                cfg.pulse.intensity_step = std::stod(*step, &used);
                if (used != step->size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw ConfigError(origin + ": pulse.intensity_step must be a number or 'auto'");
            }
        }
    }
    if (auto shape = kv.raw_opt("pulse.shape_file")) cfg.pulse.shape_file = *shape;

    if (kv.has("sweep.steps")) cfg.sweep_steps = kv.number_list("sweep.steps");

    cfg.mc.trajectories = kv.unsigned_or("mc.trajectories", cfg.mc.trajectories);
    cfg.mc.duration_ns = kv.number_or("mc.duration_ns", cfg.mc.duration_ns);
    cfg.mc.seed = kv.unsigned_or("mc.seed", cfg.mc.seed);
    cfg.mc.cutoff = kv.int_or("mc.cutoff", cfg.mc.cutoff);
    cfg.mc.splitter_ratio = kv.number_or("mc.splitter_ratio", cfg.mc.splitter_ratio);
    cfg.mc.efficiency_start = kv.number_or("mc.efficiency_start", cfg.mc.efficiency_start);
    cfg.mc.efficiency_stop = kv.number_or("mc.efficiency_stop", cfg.mc.efficiency_stop);
    cfg.mc.feedback = kv.bool_or("mc.feedback", cfg.mc.feedback);
    cfg.mc.loop_delay_ns = kv.number_or("mc.loop_delay_ns", cfg.mc.loop_delay_ns);
    if (auto trig = kv.raw_opt("mc.trigger")) {
        if (*trig == "start")
            cfg.mc.trigger = mc::Detector::start;
        else if (*trig == "stop")
            cfg.mc.trigger = mc::Detector::stop;
        else
            throw ConfigError(origin + ": mc.trigger must be start or stop");
    }
    cfg.mc.retrigger = kv.bool_or("mc.retrigger", cfg.mc.retrigger);
    cfg.mc.ground_start = kv.bool_or("mc.ground_start", cfg.mc.ground_start);
    cfg.mc.burn_in_ns = kv.number_or("mc.burn_in_ns", cfg.mc.burn_in_ns);
    cfg.mc.step_ns = kv.number_or("mc.step_ns", cfg.mc.step_ns);
    cfg.mc.threads = kv.int_or("mc.threads", cfg.mc.threads);

    cfg.hist.bin_ns = kv.number_or("hist.bin_ns", cfg.hist.bin_ns);
    cfg.hist.tau_min_ns = kv.number_or("hist.tau_min_ns", cfg.hist.tau_min_ns);
    cfg.hist.tau_max_ns = kv.number_or("hist.tau_max_ns", cfg.hist.tau_max_ns);
    cfg.hist.rebin = kv.int_or("hist.rebin", cfg.hist.rebin);
    cfg.hist.multi_stop = kv.bool_or("hist.multi_stop", cfg.hist.multi_stop);
    if (auto norm = kv.raw_opt("hist.normalize")) {
        if (*norm == "tail")
            cfg.hist.normalize = NormalizeMode::tail_average;
        else if (*norm == "rate")
            cfg.hist.normalize = NormalizeMode::steady_rate;
        else
            throw ConfigError(origin + ": hist.normalize must be tail or rate");
    }
    if (cfg.hist.rebin < 1) throw ConfigError(origin + ": hist.rebin must be >= 1");

    kv.reject_unconsumed();
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    return parse_config(in, path);
}

inline std::vector<std::string> RunConfig::echo_lines() const {
    std::vector<std::string> out;
    auto add = [&out](const std::string& key, const std::string& value) {
        out.push_back(key + " = " + value);
    };
    using detail::fmt;
    add("g_mhz", fmt(params.g_mhz));
    add("kappa_mhz", fmt(params.kappa_mhz));
    add("gamma_mhz", fmt(params.gamma_mhz));
    add("gamma_prime_mhz", fmt(params.gamma_prime_mhz));
    add("n_atoms", fmt(params.n_atoms));
    add("epsilon_mhz", fmt(params.epsilon_mhz));
    if (fit) {
        add("fit.vacuum_rabi_mhz", fmt(fit->vacuum_rabi_mhz));
        add("fit.g2_zero", fmt(fit->g2_zero));
    }
    if (n_over_n0) add("n_over_n0", fmt(*n_over_n0));
    add("grid.tau_max_ns", fmt(tau_max_ns));
    add("grid.dt_ns", fmt(dt_ns));
    add("cutoff", std::to_string(cutoff));
    add("oracle.cutoff", std::to_string(oracle_cutoff));
    add("pulse.start_ns", pulse.start_auto ? "auto" : fmt(pulse.start_ns));
    add("pulse.mode", pulse.mode == CrossingMode::rising ? "rising" : "falling");
    add("pulse.guard_ns", fmt(pulse.guard_ns));
    add("pulse.duration_ns", fmt(pulse.duration_ns));
    add("pulse.risetime_ns", fmt(pulse.risetime_ns));
    add("pulse.intensity_step", pulse.step_auto ? "auto" : fmt(pulse.intensity_step));
    if (!pulse.shape_file.empty()) add("pulse.shape_file", pulse.shape_file);
    if (!sweep_steps.empty()) {
        std::string list;
        for (std::size_t i = 0; i < sweep_steps.size(); ++i)
            list += (i ? ", " : "") + fmt(sweep_steps[i]);
        add("sweep.steps", list);
    }
    add("mc.trajectories", std::to_string(mc.trajectories));
    add("mc.duration_ns", fmt(mc.duration_ns));
    add("mc.seed", std::to_string(mc.seed));
    add("mc.cutoff", std::to_string(mc.cutoff));
    add("mc.splitter_ratio", fmt(mc.splitter_ratio));
    add("mc.efficiency_start", fmt(mc.efficiency_start));
    add("mc.efficiency_stop", fmt(mc.efficiency_stop));
    add("mc.feedback", mc.feedback ? "on" : "off");
    add("mc.loop_delay_ns", fmt(mc.loop_delay_ns));
    add("mc.trigger", mc.trigger == mc::Detector::start ? "start" : "stop");
    add("mc.retrigger", mc.retrigger ? "true" : "false");
    add("mc.ground_start", mc.ground_start ? "true" : "false");
    add("mc.burn_in_ns", fmt(mc.burn_in_ns));
    add("mc.step_ns", fmt(mc.step_ns));
    add("mc.threads", std::to_string(mc.threads));
    add("hist.bin_ns", fmt(hist.bin_ns));
    add("hist.tau_min_ns", fmt(hist.tau_min_ns));
    add("hist.tau_max_ns", fmt(hist.tau_max_ns));
    add("hist.rebin", std::to_string(hist.rebin));
    add("hist.multi_stop", hist.multi_stop ? "true" : "false");
    add("hist.normalize", hist.normalize == NormalizeMode::tail_average ? "tail" : "rate");
    return out;
}

}  // namespace cqedfb
