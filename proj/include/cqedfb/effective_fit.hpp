#pragma once

#include <cmath>
#include <string>

#include "cqedfb/errors.hpp"
#include "cqedfb/params.hpp"
#include "cqedfb/steady_state.hpp"

namespace cqedfb {

namespace detail {
// g2(0) of the weak-drive steady state for an effective pair (g_eff, n_eff)
// constrained to the measured collective coupling target_rabi = g_eff sqrt(n_eff).
inline double g2_zero_at(double g_eff_mhz, double target_rabi_mhz, double kappa_mhz,
                         double gamma_prime_mhz) {
    SystemParams p;
    p.g_mhz = g_eff_mhz;
    p.kappa_mhz = kappa_mhz;
    p.gamma_mhz = gamma_prime_mhz;
    p.gamma_prime_mhz = gamma_prime_mhz;
    p.n_atoms = (target_rabi_mhz / g_eff_mhz) * (target_rabi_mhz / g_eff_mhz);
    const DerivedRates d = derived_rates(p);
    // reference drive deep in the weak limit; the quadratic drive corrections
    // carry prefactors ~(C1 N)^2 and would bias the fit at any ordinary lambda
    p.epsilon_mhz = 1e-8 * p.kappa_mhz * (1.0 + d.c1 * p.n_atoms);
    return solve_amplitudes(p).g2_zero;
}
}  // namespace detail

// Match an effective atom number and coupling to two measured quantities: the
// collective coupling g_eff sqrt(n_eff) (from the vacuum Rabi frequency) and the
// weak-drive g2(0).  g2(0) falls monotonically as the coupling is concentrated
// in fewer atoms, so a bisection on g_eff in (0, min(g, target_rabi)] does it.
// n_eff comes out non-integer in general.
inline EffectiveParams fit_effective_params(double g_mhz, double kappa_mhz,
                                            double gamma_prime_mhz, double target_rabi_mhz,
                                            double target_g2_zero) {
    if (!(g_mhz > 0.0) || !(kappa_mhz > 0.0) || !(gamma_prime_mhz > 0.0))
        throw std::invalid_argument("fit_effective_params: rates must be > 0");
    if (!(target_rabi_mhz > 0.0))
        throw std::invalid_argument("fit_effective_params: target_rabi_mhz must be > 0");
    if (!(target_g2_zero > 0.0))
        throw std::invalid_argument("fit_effective_params: target_g2_zero must be > 0");

    // n_eff >= 1 caps g_eff at the collective coupling itself.
    const double g_hi = std::min(g_mhz, target_rabi_mhz);
    const double g_lo = 1e-6 * g_hi;
    auto f = [&](double g) {
        return detail::g2_zero_at(g, target_rabi_mhz, kappa_mhz, gamma_prime_mhz) - target_g2_zero;
    };
    double f_lo = f(g_lo), f_hi = f(g_hi);
    // Targets sitting on an endpoint of the attainable range fit exactly there.
    if (std::fabs(f_hi) <= 1e-9) return {g_hi, (target_rabi_mhz / g_hi) * (target_rabi_mhz / g_hi)};
    if (std::fabs(f_lo) <= 1e-9) return {g_lo, (target_rabi_mhz / g_lo) * (target_rabi_mhz / g_lo)};
    if (f_lo * f_hi > 0.0) {
        const double lo_val = target_g2_zero + f_hi;  // most antibunched attainable
        const double hi_val = target_g2_zero + f_lo;  // near-coherent limit
        throw InfeasibleTargetError(
            "fit_effective_params: target g2(0) = " + std::to_string(target_g2_zero) +
                " outside attainable [" + std::to_string(lo_val) + ", " + std::to_string(hi_val) +
                "] for g <= " + std::to_string(g_hi) + " MHz",
            lo_val, hi_val);
    }

    double lo = g_lo, hi = g_hi;
    for (int it = 0; it < 200 && (hi - lo) > 1e-13 * g_hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) {
            lo = hi = mid;
            break;
        }
        if ((fm > 0.0) == (f_lo > 0.0))
            lo = mid;
        else
            hi = mid;
    }
    const double g_eff = 0.5 * (lo + hi);
    return {g_eff, (target_rabi_mhz / g_eff) * (target_rabi_mhz / g_eff)};
}

}  // namespace cqedfb
