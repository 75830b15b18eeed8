#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cqedfb {

// All user-facing rates are ordinary frequencies nu = omega/2pi in MHz, the form in
// which cavity QED parameters are usually quoted.  Internally every dynamical
// formula uses angular rates in rad/ns, and times are in ns throughout.
inline constexpr double kTwoPi = 6.283185307179586476925286766559;

inline double angular_per_ns(double nu_mhz) { return kTwoPi * 1e-3 * nu_mhz; }

// One driven cavity coupled to an effective number of stationary two-level atoms,
// everything on resonance.
//
//   g_mhz           atom-cavity coupling for a single maximally coupled atom
//   kappa_mhz       cavity field decay rate (HWHM of the empty-cavity line)
//   gamma_mhz       free-space atomic linewidth (FWHM)
//   gamma_prime_mhz broadened polarization linewidth (FWHM), >= gamma_mhz
//   n_atoms         effective atom number; real-valued because it usually comes
//                   out of a fit, >= 1
//   epsilon_mhz     coherent drive amplitude, same units as kappa
struct SystemParams {
    double g_mhz = 0.0;
    double kappa_mhz = 0.0;
    double gamma_mhz = 0.0;
    double gamma_prime_mhz = 0.0;
    double n_atoms = 1.0;
    double epsilon_mhz = 0.0;

    void validate() const {
        auto bad = [](const std::string& msg) { throw std::invalid_argument("SystemParams: " + msg); };
        for (double v : {g_mhz, kappa_mhz, gamma_mhz, gamma_prime_mhz, n_atoms, epsilon_mhz})
            if (!std::isfinite(v)) bad("non-finite parameter");
        if (kappa_mhz <= 0.0) bad("kappa_mhz must be > 0");
        if (gamma_mhz <= 0.0) bad("gamma_mhz must be > 0");
        if (gamma_prime_mhz < gamma_mhz) bad("gamma_prime_mhz must be >= gamma_mhz");
        if (g_mhz < 0.0) bad("g_mhz must be >= 0");
        if (epsilon_mhz < 0.0) bad("epsilon_mhz must be >= 0");
        if (n_atoms < 1.0) bad("n_atoms must be >= 1");
    }

    // Collective coupling g*sqrt(N); half the vacuum Rabi splitting.
    double vacuum_rabi_mhz() const { return g_mhz * std::sqrt(n_atoms); }
};

// Quantities derived from the static parameters.
//
//   c1           single-atom cooperativity g^2 / (kappa * gamma_prime/2)
//   n0           saturation photon number gamma^2 / (3 g^2), from the free-space
//                linewidth; +inf when g = 0
//   lambda       weak-drive intracavity field amplitude epsilon / (kappa (1 + c1 N))
struct DerivedRates {
    double c1 = 0.0;
    double n0 = 0.0;
    double vacuum_rabi_mhz = 0.0;
    double lambda = 0.0;
};

inline DerivedRates derived_rates(const SystemParams& p) {
    p.validate();
    DerivedRates d;
    d.c1 = p.g_mhz * p.g_mhz / (p.kappa_mhz * 0.5 * p.gamma_prime_mhz);
    d.n0 = p.g_mhz > 0.0 ? p.gamma_mhz * p.gamma_mhz / (3.0 * p.g_mhz * p.g_mhz)
                         : std::numeric_limits<double>::infinity();
    d.vacuum_rabi_mhz = p.vacuum_rabi_mhz();
    d.lambda = p.epsilon_mhz / (p.kappa_mhz * (1.0 + d.c1 * p.n_atoms));
    return d;
}

// Drive amplitude that puts the weak-drive intracavity photon number at the given
// fraction of the saturation photon number: lambda^2 = n_over_n0 * n0.
inline double drive_for_photon_number(const SystemParams& p, double n_over_n0) {
    DerivedRates d = derived_rates(p);
    if (!(n_over_n0 >= 0.0) || !std::isfinite(n_over_n0))
        throw std::invalid_argument("drive_for_photon_number: n_over_n0 must be >= 0");
    if (!std::isfinite(d.n0))
        throw std::invalid_argument("drive_for_photon_number: n0 undefined for g = 0");
    double lambda = std::sqrt(n_over_n0 * d.n0);
    return lambda * p.kappa_mhz * (1.0 + d.c1 * p.n_atoms);
}

// Result of matching (g, N) to a measured vacuum Rabi frequency and g2(0).
struct EffectiveParams {
    double g_eff_mhz = 0.0;
    double n_eff = 0.0;
};

}  // namespace cqedfb
