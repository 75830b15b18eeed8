#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cqedfb/drive.hpp"
#include "cqedfb/errors.hpp"
#include "cqedfb/ode.hpp"
#include "cqedfb/params.hpp"
#include "cqedfb/steady_state.hpp"
#include "cqedfb/types.hpp"

namespace cqedfb {

// Coefficients of the conditioned mean-field pair, all in rad/ns:
//   zeta' = f(t) (kappa + coupling) - kappa zeta - coupling theta
//   theta' = gamma_h (zeta - theta)
// with f(t) the drive amplitude factor, gamma_h = gamma'/2 and
// coupling = 2 g^2 N / gamma'.  Fixed point at zeta = theta = f for constant f.
struct ZetaThetaRates {
    double kappa = 0.0;
    double gamma_h = 0.0;
    double coupling = 0.0;

    // Oscillation frequency and envelope decay of the relaxation, rad/ns.
    // frequency is 0 in the overdamped regime.
    double envelope_rate() const { return 0.5 * (kappa + gamma_h); }
    double frequency() const {
        const double d = coupling * gamma_h - 0.25 * (kappa - gamma_h) * (kappa - gamma_h);
        return d > 0.0 ? std::sqrt(d) : 0.0;
    }
};

inline ZetaThetaRates zeta_theta_rates(const SystemParams& p) {
    p.validate();
    ZetaThetaRates r;
    r.kappa = angular_per_ns(p.kappa_mhz);
    r.gamma_h = 0.5 * angular_per_ns(p.gamma_prime_mhz);
    const double g = angular_per_ns(p.g_mhz);
    r.coupling = 2.0 * g * g * p.n_atoms / angular_per_ns(p.gamma_prime_mhz);
    return r;
}

namespace detail {

// Advance (zeta, theta) from t0 to t1 under the waveform, splitting at profile
// corners so the integrator only ever sees a smooth right-hand side.  The drive
// factor is sampled just inside each segment's right edge, which keeps
// rectangular pulse edges on the correct side.
inline void advance(std::array<double, 2>& y, double t0, double t1, const ZetaThetaRates& r,
                    const DriveWaveform& wf, const ode::Options& opt) {
    if (!(t1 > t0)) return;
    std::vector<double> cuts = wf.breakpoints_in(t0, t1);
    cuts.push_back(t1);
    double a = t0;
    for (double b : cuts) {
        const double t_hi = b - 1e-10;
        auto rhs = [&](double t, const std::array<double, 2>& s, std::array<double, 2>& ds) {
            const double f = wf.amplitude_factor(t < t_hi ? t : t_hi);
            ds[0] = f * (r.kappa + r.coupling) - r.kappa * s[0] - r.coupling * s[1];
            ds[1] = r.gamma_h * (s[0] - s[1]);
        };
        ode::integrate<2>(rhs, y, a, b, opt);
        a = b;
    }
}

// Post-click initial state at the configured drive.  The ray is solved on a
// deeper ladder than the pair needs so that its truncation error sits well
// below the O(lambda^2) linearization error of the pair dynamics itself;
// callers after the limiting shape should simply configure a weak drive.
inline constexpr int kInitRayCutoff = 5;

inline ConditionalState post_click_initial(const SystemParams& p) {
    return post_jump_state(solve_amplitudes(p, kInitRayCutoff));
}

struct ScanPoint {
    double tau_ns;
    std::array<double, 2> y;
    double dzeta;  // zeta' at tau
};

// Free-evolution scan from the post-jump state on a uniform grid; the returned
// points carry enough state to restart integration anywhere.
inline std::vector<ScanPoint> scan_free(const SystemParams& p, ConditionalState init,
                                        double tau_end_ns, double step_ns) {
    const ZetaThetaRates r = zeta_theta_rates(p);
    const DriveWaveform wf(p.epsilon_mhz);
    const ode::Options opt;
    std::vector<ScanPoint> pts;
    std::array<double, 2> y{init.zeta, init.theta};
    double tau = 0.0;
    while (true) {
        const double dz = (r.kappa + r.coupling) - r.kappa * y[0] - r.coupling * y[1];
        pts.push_back({tau, y, dz});
        if (tau >= tau_end_ns) break;
        const double next = std::min(tau + step_ns, tau_end_ns);
        advance(y, tau, next, r, wf, opt);
        tau = next;
    }
    return pts;
}

}  // namespace detail

// Conditioned evolution after a detection at t = 0 under an arbitrary drive
// waveform, sampled at the given times (non-decreasing, >= 0).
inline std::vector<ConditionalState> evolve(ConditionalState initial, const SystemParams& p,
                                            const DriveWaveform& waveform,
                                            std::span<const double> t_grid_ns) {
    p.validate();
    const ZetaThetaRates r = zeta_theta_rates(p);
    const ode::Options opt;
    std::vector<ConditionalState> out;
    out.reserve(t_grid_ns.size());
    std::array<double, 2> y{initial.zeta, initial.theta};
    double t = 0.0;
    for (double tg : t_grid_ns) {
        if (!(tg >= t))
            throw std::invalid_argument("evolve: sample times must be non-decreasing and >= 0");
        detail::advance(y, t, tg, r, waveform, opt);
        t = tg;
        out.push_back({y[0], y[1]});
    }
    return out;
}

// Free-running conditional intensity correlation g2(tau) = zeta(tau)^2 on a
// uniform grid.  Requires a driven steady state.
inline G2Series g2_free(const SystemParams& p, double tau_max_ns, double dt_ns) {
    if (!(dt_ns > 0.0) || !(tau_max_ns >= 0.0))
        throw std::invalid_argument("g2_free: need dt_ns > 0 and tau_max_ns >= 0");
    const ConditionalState init = detail::post_click_initial(p);

    const std::size_t n = static_cast<std::size_t>(std::floor(tau_max_ns / dt_ns + 1e-9));
    std::vector<double> grid(n + 1);
    for (std::size_t i = 0; i <= n; ++i) grid[i] = static_cast<double>(i) * dt_ns;

    const DriveWaveform wf(p.epsilon_mhz);
    const std::vector<ConditionalState> states = evolve(init, p, wf, grid);
    G2Series g;
    g.tau_ns = std::move(grid);
    g.values.reserve(states.size());
    for (const auto& s : states) g.values.push_back(s.zeta * s.zeta);
    return g;
}

// Which flank of the zeta = theta crossing to capture on: rising means the
// field trace is increasing there (a downward intensity step), falling the
// opposite.
enum class CrossingMode { rising, falling };

struct CaptureSolution {
    double t_capture_ns = 0.0;
    double zeta_at_capture = 0.0;
    double intensity_step = 0.0;  // zeta(T)^2 - 1
    double lambda_prime = 0.0;    // captured field amplitude zeta(T) * lambda
};

// First time T > guard_ns where the field and polarization traces cross on the
// requested flank.  Freezing the drive intensity by the factor zeta(T)^2 at
// that moment parks the conditional state on the fixed point.
inline CaptureSolution find_capture(const SystemParams& p, CrossingMode mode,
                                    double guard_ns = 5.0) {
    const ZetaThetaRates r = zeta_theta_rates(p);
    if (r.frequency() <= 0.0)
        throw NoCaptureError("find_capture: relaxation is overdamped, traces never recross");
    const ConditionalState init = detail::post_click_initial(p);

    const double period = kTwoPi / r.frequency();
    const double t_env = 1.0 / r.envelope_rate();
    const double tau_end = guard_ns + std::max(12.0 * t_env, 4.0 * period);
    const double step = std::min(period / 32.0, 1.0);
    const auto pts = detail::scan_free(p, init, tau_end, step);

    double h_max = 0.0;
    for (const auto& pt : pts) h_max = std::max(h_max, std::fabs(pt.y[0] - pt.y[1]));
    if (h_max < 1e-12)
        throw NoCaptureError("find_capture: field and polarization traces coincide");

    const DriveWaveform wf(p.epsilon_mhz);
    const ode::Options opt;
    auto gap = [](const std::array<double, 2>& y) { return y[0] - y[1]; };

    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double h0 = gap(pts[i].y), h1 = gap(pts[i + 1].y);
        if (h0 == 0.0 && pts[i].tau_ns == 0.0) continue;  // crossing at the jump itself
        if (h0 * h1 > 0.0) continue;
        if (pts[i + 1].tau_ns <= guard_ns) continue;

        // Bisect inside the bracket, restarting from the stored left state.
        double lo = pts[i].tau_ns, hi = pts[i + 1].tau_ns;
        double h_lo = h0;
        std::array<double, 2> y_mid = pts[i].y;
        double mid = lo;
        for (int it = 0; it < 80 && hi - lo > 1e-9; ++it) {
            mid = 0.5 * (lo + hi);
            y_mid = pts[i].y;
            detail::advance(y_mid, pts[i].tau_ns, mid, r, wf, opt);
            const double hm = gap(y_mid);
            if (std::fabs(hm) <= 1e-10) break;
            if ((h_lo <= 0.0) == (hm <= 0.0)) {
                lo = mid;
                h_lo = hm;
            } else {
                hi = mid;
            }
        }
        if (mid <= guard_ns) continue;

        const double dzeta = (r.kappa + r.coupling) - r.kappa * y_mid[0] - r.coupling * y_mid[1];
        const bool rising = dzeta > 0.0;
        if ((mode == CrossingMode::rising) != rising) continue;

        CaptureSolution cap;
        cap.t_capture_ns = mid;
        cap.zeta_at_capture = y_mid[0];
        cap.intensity_step = y_mid[0] * y_mid[0] - 1.0;
        cap.lambda_prime = y_mid[0] * derived_rates(p).lambda;
        return cap;
    }
    throw NoCaptureError("find_capture: no crossing on the requested flank after the guard time");
}

// Conditional intensity with a feedback pulse applied, on a uniform grid.
inline G2Series simulate_capture_release(const SystemParams& p, const FeedbackPulse& pulse,
                                         double tau_max_ns, double dt_ns) {
    if (!(dt_ns > 0.0) || !(tau_max_ns >= 0.0))
        throw std::invalid_argument("simulate_capture_release: need dt_ns > 0 and tau_max_ns >= 0");
    pulse.validate();
    const ConditionalState init = detail::post_click_initial(p);

    const std::size_t n = static_cast<std::size_t>(std::floor(tau_max_ns / dt_ns + 1e-9));
    std::vector<double> grid(n + 1);
    for (std::size_t i = 0; i <= n; ++i) grid[i] = static_cast<double>(i) * dt_ns;

    const DriveWaveform wf(p.epsilon_mhz, {pulse});
    const std::vector<ConditionalState> states = evolve(init, p, wf, grid);
    G2Series g;
    g.tau_ns = std::move(grid);
    g.values.reserve(states.size());
    for (const auto& s : states) g.values.push_back(s.zeta * s.zeta);
    return g;
}

// First extremum of the free conditional intensity after the pulse start, and
// the intensity response there: g2 with the pulse minus the new baseline 1 + s.
// The extremum must fall inside the pulse window.
inline std::pair<double, double> response_at_tau_star(const SystemParams& p,
                                                      const FeedbackPulse& pulse) {
    pulse.validate();
    const ZetaThetaRates r = zeta_theta_rates(p);
    const ConditionalState init = detail::post_click_initial(p);

    const double period = r.frequency() > 0.0 ? kTwoPi / r.frequency() : 0.0;
    const double t_env = 1.0 / r.envelope_rate();
    const double tau_end = pulse.end_ns() + std::max(12.0 * t_env, 2.0 * period);
    const double step = period > 0.0 ? std::min(period / 32.0, 1.0) : 0.5;
    const auto pts = detail::scan_free(p, init, tau_end, step);

    const DriveWaveform free_wf(p.epsilon_mhz);
    const ode::Options opt;

    double tau_star = -1.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        if (pts[i + 1].tau_ns <= pulse.start_ns) continue;
        if (pts[i].dzeta * pts[i + 1].dzeta > 0.0) continue;
        double lo = pts[i].tau_ns, hi = pts[i + 1].tau_ns;
        double d_lo = pts[i].dzeta;
        double mid = lo;
        for (int it = 0; it < 80 && hi - lo > 1e-9; ++it) {
            mid = 0.5 * (lo + hi);
            std::array<double, 2> y = pts[i].y;
            detail::advance(y, pts[i].tau_ns, mid, r, free_wf, opt);
            const double dm = (r.kappa + r.coupling) - r.kappa * y[0] - r.coupling * y[1];
            if ((d_lo <= 0.0) == (dm <= 0.0)) {
                lo = mid;
                d_lo = dm;
            } else {
                hi = mid;
            }
        }
        if (mid > pulse.start_ns) {
            tau_star = mid;
            break;
        }
    }
    if (tau_star < 0.0 || tau_star >= pulse.end_ns())
        throw ProtocolError("response_at_tau_star: no free-trace extremum inside the pulse window");

    std::array<double, 2> y{init.zeta, init.theta};
    const DriveWaveform wf(p.epsilon_mhz, {pulse});
    detail::advance(y, 0.0, tau_star, r, wf, opt);
    const double response = y[0] * y[0] - (1.0 + pulse.intensity_step);
    return {tau_star, response};
}

struct SweepRow {
    double intensity_step = 0.0;
    double tau_star_ns = 0.0;
    double response = 0.0;
};

// Response table over a set of candidate steps with a fixed pulse template,
// sorted by step.
inline std::vector<SweepRow> sweep_steps(const SystemParams& p, const FeedbackPulse& pulse_template,
                                         std::span<const double> steps) {
    std::vector<double> sorted(steps.begin(), steps.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<SweepRow> rows;
    rows.reserve(sorted.size());
    for (double s : sorted) {
        FeedbackPulse pulse = pulse_template;
        pulse.intensity_step = s;
        auto [tau_star, resp] = response_at_tau_star(p, pulse);
        rows.push_back({s, tau_star, resp});
    }
    return rows;
}

}  // namespace cqedfb
