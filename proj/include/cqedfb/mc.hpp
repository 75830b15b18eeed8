#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <thread>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "cqedfb/basis.hpp"
#include "cqedfb/drive.hpp"
#include "cqedfb/params.hpp"
#include "cqedfb/rng.hpp"
#include "cqedfb/steady_state.hpp"

namespace cqedfb::mc {

enum class Detector { start, stop };

struct ClickRecord {
    std::uint64_t trajectory_id = 0;
    Detector detector = Detector::start;
    double time_ns = 0.0;
};

// Feedback loop: a detected trigger click schedules the pulse template at
// click time + loop_delay.  With retrigger off (the one-shot pulse shaper),
// triggers are ignored from acceptance until the pulse ends; with it on, any
// trigger whose pulse would not overlap a pending or active pulse is accepted.
struct FeedbackConfig {
    FeedbackPulse pulse;  // start_ns is ignored; scheduling is per click
    double loop_delay_ns = 45.0;
    Detector trigger = Detector::start;
    bool retrigger = false;
};

struct TrajectoryConfig {
    std::uint64_t n_trajectories = 1;
    double duration_ns = 0.0;
    std::uint64_t seed = 1;
    int excitation_cutoff = 3;
    double splitter_ratio = 0.5;  // fraction of the cavity output routed to the start APD
    double efficiency_start = 1.0;
    double efficiency_stop = 1.0;
    std::optional<FeedbackConfig> feedback;
    bool ground_start = false;  // burn in from |0,0> instead of starting on the steady amplitudes
    double burn_in_ns = 0.0;    // 0 = ten damping times
    double step_ns = 8.0;       // propagator grid; jump times are resolved ~2^-27 below it
    int n_threads = 0;          // 0 = hardware concurrency
    // Test hook: start every trajectory from these amplitudes instead of the
    // steady state (e.g. a bare one-photon state with epsilon = 0).
    std::optional<Eigen::VectorXd> initial_amplitudes;
};

struct RunResult {
    std::vector<ClickRecord> clicks;
    std::uint64_t n_trajectories = 0;
    double duration_ns = 0.0;
    std::uint64_t n_cavity_jumps = 0;
    std::uint64_t n_atomic_jumps = 0;
    std::uint64_t n_start_clicks = 0;
    std::uint64_t n_stop_clicks = 0;
};

namespace detail {

inline constexpr int kLevels = 28;          // dyadic propagator halvings per grid step
inline constexpr double kRampStepNs = 0.25; // piecewise-constant slices through ramps

// Propagators exp(A(scale) * step / 2^j) for one drive scale.  Any interval is
// walked as a greedy sum of dyadic chunks; leftovers below the finest chunk
// (sub-1e-7 ns) are dropped.
struct DyadicCache {
    double scale = 1.0;
    std::vector<Eigen::MatrixXd> prop;
};

struct Engine {
    SystemParams params;
    TrajectoryConfig cfg;
    ExcitationBasis basis;
    Eigen::MatrixXd a_free;     // generator at drive scale 0
    Eigen::MatrixXd a_drive;    // drive part; A(f) = a_free + f * a_drive
    Eigen::VectorXd init;       // unit-norm initial amplitudes
    std::vector<DyadicCache> caches;
    std::vector<double> weight_photon;  // n per basis state
    std::vector<double> weight_excited; // k per basis state
    double kappa2 = 0.0;        // 2 kappa, rad/ns
    double gamma_p = 0.0;       // gamma', rad/ns
    double burn_ns = 0.0;

    Engine(const SystemParams& p, const TrajectoryConfig& c)
        : params(p), cfg(c), basis(p.n_atoms, c.excitation_cutoff) {
        a_free = no_jump_generator(p, basis, 0.0);
        a_drive = no_jump_generator(p, basis, 1.0) - a_free;
        kappa2 = 2.0 * angular_per_ns(p.kappa_mhz);
        gamma_p = angular_per_ns(p.gamma_prime_mhz);

        weight_photon.resize(basis.size());
        weight_excited.resize(basis.size());
        for (int i = 0; i < basis.size(); ++i) {
            weight_photon[i] = basis.state(i).photons;
            weight_excited[i] = basis.state(i).excited;
        }

        if (cfg.initial_amplitudes) {
            if (cfg.initial_amplitudes->size() != basis.size())
                throw std::invalid_argument("mc::run: initial_amplitudes length != basis size");
            init = cfg.initial_amplitudes->normalized();
        } else {
            init = solve_amplitudes(p, c.excitation_cutoff).state.amplitudes.normalized();
        }

        const double t_damp = damping_time_ns();
        burn_ns = cfg.ground_start ? (cfg.burn_in_ns > 0.0 ? cfg.burn_in_ns : 10.0 * t_damp) : 0.0;

        build_cache(1.0);
        if (cfg.feedback) {
            const FeedbackPulse& pulse = cfg.feedback->pulse;
            if (!pulse.shape) build_cache(std::sqrt(1.0 + pulse.intensity_step));
        }
    }

    double damping_time_ns() const {
        const double kappa = angular_per_ns(params.kappa_mhz);
        const double gamma_h = 0.5 * angular_per_ns(params.gamma_prime_mhz);
        return 2.0 / (kappa + gamma_h);
    }

    Eigen::MatrixXd generator(double scale) const { return a_free + scale * a_drive; }

    void build_cache(double scale) {
        for (const auto& c : caches)
            if (c.scale == scale) return;
        DyadicCache c;
        c.scale = scale;
        c.prop.reserve(kLevels);
        const Eigen::MatrixXd a = generator(scale);
        for (int j = 0; j < kLevels; ++j) {
            const double dt = cfg.step_ns / static_cast<double>(1ULL << j);
            c.prop.push_back((a * dt).exp());
        }
        caches.push_back(std::move(c));
    }

    const DyadicCache* cache_for(double scale) const {
        for (const auto& c : caches)
            if (c.scale == scale) return &c;
        return nullptr;
    }
};

struct Walker {
    Eigen::VectorXd c;  // unnormalized; squared norm is the no-jump survival probability
    Eigen::VectorXd tmp;
    double t = 0.0;
    double r = 1.0;  // survival threshold for the next jump
};

// Advance under a constant drive scale using the dyadic cache.  Returns true
// if the squared norm crossed below the threshold; the walker then sits at the
// crossing time (resolved to step/2^27) in the pre-jump state.
inline bool advance_cached(Walker& w, double t_end, const DyadicCache& cache, double step_ns) {
    double remaining = t_end - w.t;
    const double finest = step_ns / static_cast<double>(1ULL << (kLevels - 1));
    while (remaining > finest) {
        int j = 0;
        while (j < kLevels && step_ns / static_cast<double>(1ULL << j) > remaining * (1.0 + 1e-12))
            ++j;
        if (j >= kLevels) break;
        w.tmp.noalias() = cache.prop[static_cast<std::size_t>(j)] * w.c;
        if (w.tmp.squaredNorm() >= w.r) {
            w.c.swap(w.tmp);
            remaining -= step_ns / static_cast<double>(1ULL << j);
            continue;
        }
        // crossing inside this chunk: binary descent keeps the surviving halves
        for (int jj = j + 1; jj < kLevels; ++jj) {
            w.tmp.noalias() = cache.prop[static_cast<std::size_t>(jj)] * w.c;
            if (w.tmp.squaredNorm() >= w.r) {
                w.c.swap(w.tmp);
                remaining -= step_ns / static_cast<double>(1ULL << jj);
            }
        }
        w.t = t_end - remaining;
        return true;
    }
    w.t = t_end;
    return false;
}

// Advance under a frozen generator with fresh exponentials (flat segments at
// uncached scales, and piecewise-constant ramp slices).  Jump times are
// bisected to 1e-6 ns.
inline bool advance_frozen(Walker& w, double t_end, const Eigen::MatrixXd& a) {
    const double span = t_end - w.t;
    if (!(span > 0.0)) return false;
    w.tmp.noalias() = (a * span).exp() * w.c;
    if (w.tmp.squaredNorm() >= w.r) {
        w.c.swap(w.tmp);
        w.t = t_end;
        return false;
    }
    double lo = 0.0, hi = span;
    Eigen::VectorXd base = w.c;
    while (hi - lo > 1e-6) {
        const double mid = 0.5 * (lo + hi);
        w.tmp.noalias() = (a * mid).exp() * base;
        if (w.tmp.squaredNorm() >= w.r) {
            lo = mid;
            w.c = w.tmp;
        } else {
            hi = mid;
        }
    }
    w.t += lo;
    return true;
}

// One uniform stretch of the per-trajectory waveform starting at some time:
// either constant drive scale or linear-in-intensity (ramps, sampled shapes).
struct Piece {
    double t_end = 0.0;
    bool constant = true;
    double scale = 1.0;
    double t0 = 0.0, t1 = 0.0, i0 = 1.0, i1 = 1.0;  // linear piece: intensity i0 at t0 -> i1 at t1
};

inline Piece piece_of_pulse(const FeedbackPulse& p, double t) {
    Piece piece;
    if (p.shape) {
        const auto& ts = p.shape->time_ns;
        const auto& q = p.shape->unit_profile;
        const double local = t - p.start_ns;
        auto it = std::upper_bound(ts.begin(), ts.end(), local);
        std::size_t hi = static_cast<std::size_t>(it - ts.begin());
        if (hi == 0) hi = 1;
        if (hi >= ts.size()) hi = ts.size() - 1;
        piece.t0 = p.start_ns + ts[hi - 1];
        piece.t1 = p.start_ns + ts[hi];
        piece.i0 = 1.0 + p.intensity_step * q[hi - 1];
        piece.i1 = 1.0 + p.intensity_step * q[hi];
        piece.t_end = piece.t1;
        piece.constant = std::fabs(piece.i1 - piece.i0) < 1e-15;
        piece.scale = std::sqrt(piece.i0);
        return piece;
    }
    const double plateau = 1.0 + p.intensity_step;
    if (p.risetime_ns <= 0.0) {
        piece.t_end = p.end_ns();
        piece.scale = std::sqrt(plateau);
        return piece;
    }
    const double up_end = p.start_ns + p.risetime_ns;
    const double down_start = p.end_ns() - p.risetime_ns;
    if (t < up_end) {
        piece = {up_end, false, 1.0, p.start_ns, up_end, 1.0, plateau};
    } else if (t < down_start) {
        piece.t_end = down_start;
        piece.scale = std::sqrt(plateau);
    } else {
        piece = {p.end_ns(), false, 1.0, down_start, p.end_ns(), plateau, 1.0};
    }
    return piece;
}

class Trajectory {
  public:
    Trajectory(const Engine& e, std::uint64_t traj_id, RunResult& out)
        : e_(e), id_(traj_id), out_(out), stream_(e.cfg.seed, traj_id) {
        w_.c = e.init;
        w_.tmp.resize(e.init.size());
        w_.t = -e.burn_ns;
        w_.r = stream_.threshold();
    }

    void run() {
        const double duration = e_.cfg.duration_ns;
        while (w_.t < duration) {
            const Piece piece = next_piece(std::min(piece_horizon(), duration));
            const bool jumped = advance_piece(piece);
            if (jumped) handle_jump();
        }
    }

  private:
    double piece_horizon() const { return e_.cfg.duration_ns; }

    // Uniform piece of the live waveform starting at w_.t.
    Piece next_piece(double hard_end) {
        const double t = w_.t;
        for (std::size_t i = pulse_idx_; i < pulses_.size(); ++i) {
            const FeedbackPulse& p = pulses_[i];
            if (t < p.start_ns) {
                Piece piece;
                piece.t_end = std::min(p.start_ns, hard_end);
                return piece;
            }
            if (t < p.end_ns()) {
                Piece piece = piece_of_pulse(p, t);
                piece.t_end = std::min(piece.t_end, hard_end);
                return piece;
            }
            pulse_idx_ = i + 1;
        }
        Piece piece;
        piece.t_end = hard_end;
        return piece;
    }

    bool advance_piece(const Piece& piece) {
        if (piece.constant) {
            if (const DyadicCache* cache = e_.cache_for(piece.scale))
                return advance_cached(w_, piece.t_end, *cache, e_.cfg.step_ns);
            return advance_frozen(w_, piece.t_end, e_.generator(piece.scale));
        }
        // linear intensity: slice into piecewise-constant midpoint generators
        while (w_.t < piece.t_end - 1e-12) {
            const double slice_end = std::min(piece.t_end, w_.t + kRampStepNs);
            const double mid = 0.5 * (w_.t + slice_end);
            const double frac = (mid - piece.t0) / (piece.t1 - piece.t0);
            const double intensity = piece.i0 + (piece.i1 - piece.i0) * frac;
            if (advance_frozen(w_, slice_end, e_.generator(std::sqrt(intensity)))) return true;
        }
        return false;
    }

    void handle_jump() {
        const double norm = w_.c.norm();
        w_.c /= norm;
        double n_mean = 0.0, k_mean = 0.0;
        for (int i = 0; i < w_.c.size(); ++i) {
            const double p2 = w_.c(i) * w_.c(i);
            n_mean += e_.weight_photon[static_cast<std::size_t>(i)] * p2;
            k_mean += e_.weight_excited[static_cast<std::size_t>(i)] * p2;
        }
        const double w_cav = e_.kappa2 * n_mean;
        const double w_at = e_.gamma_p * k_mean;
        if (!(w_cav + w_at > 0.0))
            throw std::runtime_error("mc::run: jump with no open decay channel");

        const bool cavity = stream_.uniform() * (w_cav + w_at) < w_cav;
        apply_lowering(cavity);

        if (cavity) {
            const bool to_start = stream_.uniform() < e_.cfg.splitter_ratio;
            const double eff = to_start ? e_.cfg.efficiency_start : e_.cfg.efficiency_stop;
            const bool detected = stream_.uniform() < eff;
            if (w_.t >= 0.0) {
                ++out_.n_cavity_jumps;
                if (detected) {
                    const Detector det = to_start ? Detector::start : Detector::stop;
                    out_.clicks.push_back({id_, det, w_.t});
                    if (det == Detector::start)
                        ++out_.n_start_clicks;
                    else
                        ++out_.n_stop_clicks;
                    maybe_trigger(det);
                }
            }
        } else if (w_.t >= 0.0) {
            ++out_.n_atomic_jumps;
        }
        w_.r = stream_.threshold();
    }

    void apply_lowering(bool cavity) {
        const auto& basis = e_.basis;
        w_.tmp.setZero();
        for (int i = 0; i < basis.size(); ++i) {
            const auto [n, k] = basis.state(i);
            const int src = cavity ? basis.index_of(n + 1, k) : basis.index_of(n, k + 1);
            if (src >= 0) w_.tmp(i) = std::sqrt(cavity ? n + 1.0 : k + 1.0) * w_.c(src);
        }
        const double norm = w_.tmp.norm();
        if (!(norm > 0.0)) throw std::runtime_error("mc::run: lowering annihilated the state");
        w_.c = w_.tmp / norm;
    }

    void maybe_trigger(Detector det) {
        if (!e_.cfg.feedback || det != e_.cfg.feedback->trigger) return;
        const FeedbackConfig& fb = *e_.cfg.feedback;
        FeedbackPulse pulse = fb.pulse;
        pulse.start_ns = w_.t + fb.loop_delay_ns;
        if (fb.retrigger) {
            if (!pulses_.empty() && pulse.start_ns < pulses_.back().end_ns()) return;
        } else {
            if (w_.t < armed_after_) return;
            armed_after_ = pulse.end_ns();
        }
        pulses_.push_back(pulse);
    }

    const Engine& e_;
    std::uint64_t id_;
    RunResult& out_;
    rng::Stream stream_;
    Walker w_;
    std::vector<FeedbackPulse> pulses_;
    std::size_t pulse_idx_ = 0;
    double armed_after_ = -1e300;
};

}  // namespace detail

inline void validate(const SystemParams& p, const TrajectoryConfig& cfg) {
    p.validate();
    auto bad = [](const std::string& msg) { throw std::invalid_argument("mc::run: " + msg); };
    if (cfg.n_trajectories < 1) bad("n_trajectories must be >= 1");
    if (!(cfg.duration_ns > 0.0)) bad("duration_ns must be > 0");
    if (cfg.excitation_cutoff < 2) bad("excitation_cutoff must be >= 2");
    if (!(cfg.splitter_ratio >= 0.0 && cfg.splitter_ratio <= 1.0)) bad("splitter_ratio in [0,1]");
    if (!(cfg.efficiency_start >= 0.0 && cfg.efficiency_start <= 1.0)) bad("efficiency_start in [0,1]");
    if (!(cfg.efficiency_stop >= 0.0 && cfg.efficiency_stop <= 1.0)) bad("efficiency_stop in [0,1]");
    if (!(cfg.step_ns > 0.0)) bad("step_ns must be > 0");
    if (cfg.burn_in_ns < 0.0) bad("burn_in_ns must be >= 0");
    double span = 0.0;
    if (cfg.feedback) {
        cfg.feedback->pulse.validate();
        if (!(cfg.feedback->loop_delay_ns >= 0.0)) bad("loop_delay_ns must be >= 0");
        span = cfg.feedback->loop_delay_ns + cfg.feedback->pulse.duration_ns;
    }
    const double kappa = angular_per_ns(p.kappa_mhz);
    const double gamma_h = 0.5 * angular_per_ns(p.gamma_prime_mhz);
    const double t_damp = 2.0 / (kappa + gamma_h);
    if (cfg.duration_ns < 10.0 * t_damp + span)
        bad("duration_ns must cover 10 damping times (" + std::to_string(10.0 * t_damp) +
            " ns) plus the feedback span");
}

// Quantum-jump unraveling of the full measurement chain.  Each trajectory owns
// an independent RNG stream derived from (seed, trajectory_id); the result is
// identical for any thread count.  Draw order per jump: channel, then for
// cavity jumps splitter routing and detection, then the next survival
// threshold.  Propagation is exact per drive segment (matrix exponentials), so
// there is no step-size failure mode; jump times are resolved to ~1e-7 ns.
inline RunResult run(const SystemParams& params, const TrajectoryConfig& cfg) {
    validate(params, cfg);
    const detail::Engine engine(params, cfg);

    RunResult result;
    result.n_trajectories = cfg.n_trajectories;
    result.duration_ns = cfg.duration_ns;

    unsigned hw = std::thread::hardware_concurrency();
    std::uint64_t n_threads = cfg.n_threads > 0 ? static_cast<std::uint64_t>(cfg.n_threads)
                                                : (hw ? hw : 1);
    n_threads = std::min<std::uint64_t>(n_threads, cfg.n_trajectories);

    if (n_threads <= 1) {
        for (std::uint64_t id = 0; id < cfg.n_trajectories; ++id)
            detail::Trajectory(engine, id, result).run();
        return result;
    }

    std::vector<RunResult> partial(n_threads);
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    const std::uint64_t per = (cfg.n_trajectories + n_threads - 1) / n_threads;
    for (std::uint64_t w = 0; w < n_threads; ++w) {
        workers.emplace_back([&, w] {
            const std::uint64_t lo = w * per;
            const std::uint64_t hi = std::min(cfg.n_trajectories, lo + per);
            for (std::uint64_t id = lo; id < hi; ++id)
                detail::Trajectory(engine, id, partial[w]).run();
        });
    }
    for (auto& t : workers) t.join();
    for (auto& part : partial) {
        result.clicks.insert(result.clicks.end(), part.clicks.begin(), part.clicks.end());
        result.n_cavity_jumps += part.n_cavity_jumps;
        result.n_atomic_jumps += part.n_atomic_jumps;
        result.n_start_clicks += part.n_start_clicks;
        result.n_stop_clicks += part.n_stop_clicks;
    }
    return result;
}

}  // namespace cqedfb::mc
