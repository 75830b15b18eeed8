#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cqedfb/basis.hpp"
#include "cqedfb/errors.hpp"
#include "cqedfb/params.hpp"
#include "cqedfb/types.hpp"

namespace cqedfb {

// Non-Hermitian no-jump generator A on the truncated basis, in rad/ns, with the
// drive phase fixed so that every entry is real:  dc/dt = A c.
//
//   drive        +eps*sqrt(n+1) raising, -eps*sqrt(n+1) lowering (scaled)
//   interaction  +g*sqrt((n+1)(k+1)(N-k)) photon emission into the cavity,
//                the transpose entry with a minus sign for absorption
//   diagonal     -(kappa*n + gamma_prime*k/2)
//
// epsilon_scale multiplies the drive only; the feedback pulse enters there.
inline Eigen::MatrixXd no_jump_generator(const SystemParams& p, const ExcitationBasis& basis,
                                         double epsilon_scale = 1.0) {
    p.validate();
    const double g = angular_per_ns(p.g_mhz);
    const double kappa = angular_per_ns(p.kappa_mhz);
    const double gp = angular_per_ns(p.gamma_prime_mhz);
    const double eps = angular_per_ns(p.epsilon_mhz) * epsilon_scale;
    const double n_at = basis.n_atoms();

    const int s = basis.size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(s, s);
    for (int i = 0; i < s; ++i) {
        const auto [n, k] = basis.state(i);
        a(i, i) = -(kappa * n + 0.5 * gp * k);
        if (int up = basis.index_of(n + 1, k); up >= 0) {
            const double el = eps * std::sqrt(n + 1.0);
            a(up, i) += el;
            a(i, up) -= el;
        }
        if (int em = basis.index_of(n + 1, k - 1); em >= 0) {
            // |n,k> -> |n+1,k-1>: one excitation radiated into the cavity mode.
            const double el = g * std::sqrt((n + 1.0) * k * (n_at - (k - 1.0)));
            a(em, i) += el;
            a(i, em) -= el;
        }
    }
    return a;
}

// Pure-state amplitudes over a truncated basis.  Real-valued in the drive
// phase convention used throughout.
struct AmplitudeVector {
    ExcitationBasis basis;
    Eigen::VectorXd amplitudes;
};

// Steady ray of the no-jump evolution, ground amplitude scaled to 1.  lambda
// is the field amplitude c(1,0); zeta0 and theta0 are the two-photon and
// photon-polarization correlation amplitudes that set the state after a
// photodetection.
struct SteadyStateSolution {
    SystemParams params;
    AmplitudeVector state;
    double lambda = 0.0;
    double zeta0 = 0.0;
    double theta0 = 0.0;
    double g2_zero = 0.0;
};

// The no-click record decays the norm, so the conditioned attractor is the
// slowest-decaying eigenray A c = mu c (mu -> -kappa lambda^2 as the drive
// weakens), not a null vector.  Pinning c_0 = 1 and dropping mu instead would
// inject an O(lambda^2) error with a collectively enhanced coefficient.
//
// The ray is extracted in rung-scaled variables d_i = c_i / lambda^{w_i} with
// w the total excitation: the generator couples adjacent rungs only, so the
// scaled matrix stays O(1) and deep amplitudes come out with full relative
// precision instead of being read off an eigenvector lambda^{w} below its
// noise floor.  The eigensolve supplies mu and the structural checks; a single
// deflated solve with d_0 = 1 then rebuilds the ray.
inline SteadyStateSolution solve_amplitudes(const SystemParams& p, int cutoff = 2) {
    p.validate();
    ExcitationBasis basis(p.n_atoms, cutoff);
    const int s = basis.size();
    SteadyStateSolution sol{p, {basis, Eigen::VectorXd::Zero(s)}};

    const double scale = derived_rates(p).lambda;
    if (scale <= 0.0) {
        // Undriven: the ray is the ground state and post-click values are undefined.
        sol.state.amplitudes(0) = 1.0;
        sol.zeta0 = sol.theta0 = sol.g2_zero = std::numeric_limits<double>::quiet_NaN();
        return sol;
    }

    const Eigen::MatrixXd a = no_jump_generator(p, basis);
    Eigen::EigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("solve_amplitudes: eigensolve failed");
    const Eigen::VectorXcd ev = es.eigenvalues();
    int top = 0;
    for (int i = 1; i < s; ++i)
        if (ev(i).real() > ev(top).real()) top = i;
    // A real dominant eigenvalue has a real ray; a conjugate-pair winner means
    // the no-jump flow has no steady direction at these parameters.
    if (ev(top).imag() != 0.0)
        throw std::runtime_error("solve_amplitudes: dominant eigenray is not real");
    const double mu = ev(top).real();
    const Eigen::VectorXcd v = es.eigenvectors().col(top);
    if (std::abs(v(0)) < 1e-8 * v.norm())
        throw std::runtime_error("solve_amplitudes: steady ray has no ground component");

    Eigen::MatrixXd b = a;
    for (int r = 0; r < s; ++r) {
        const auto [rn, rk] = basis.state(r);
        for (int col = 0; col < s; ++col) {
            const auto [cn, ck] = basis.state(col);
            const int dw = (cn + ck) - (rn + rk);
            if (dw == 1)
                b(r, col) *= scale;
            else if (dw == -1)
                b(r, col) /= scale;
        }
    }
    Eigen::MatrixXd m = b.block(1, 1, s - 1, s - 1);
    m.diagonal().array() -= mu;
    const Eigen::VectorXd x = m.partialPivLu().solve(-b.col(0).tail(s - 1));
    if (!x.allFinite())
        throw std::runtime_error("solve_amplitudes: deflated solve failed");

    Eigen::VectorXd& c = sol.state.amplitudes;
    c(0) = 1.0;
    for (int i = 1; i < s; ++i) {
        const auto [n, k] = basis.state(i);
        c(i) = x(i - 1) * std::pow(scale, n + k);
    }

    const double d10 = x(basis.index_of(1, 0) - 1);
    sol.lambda = scale * d10;
    const double gsn = angular_per_ns(p.vacuum_rabi_mhz());
    const double gp = angular_per_ns(p.gamma_prime_mhz);
    if (sol.lambda > 0.0) {
        sol.zeta0 = std::sqrt(2.0) * x(basis.index_of(2, 0) - 1) / (d10 * d10);
        // theta is reported relative to the steady polarization -(2 g sqrt(N)/gamma') lambda;
        // with no atoms coupled it has no first-order reference and is 1 by convention.
        sol.theta0 =
            gsn > 0.0 ? -x(basis.index_of(1, 1) - 1) * gp / (2.0 * gsn * d10 * d10) : 1.0;
        sol.g2_zero = sol.zeta0 * sol.zeta0;
    } else {
        sol.zeta0 = sol.theta0 = sol.g2_zero = std::numeric_limits<double>::quiet_NaN();
    }
    return sol;
}

// State directly after a photodetection: apply the photon annihilator to the
// steady state and renormalize the ground amplitude to 1.  To leading order the
// field scale drops to zeta0 and the polarization scale to theta0 exactly.
inline ConditionalState post_jump_state(const SteadyStateSolution& sol) {
    if (!(sol.lambda > 0.0))
        throw std::invalid_argument("post_jump_state: requires a driven steady state (lambda > 0)");
    const auto& basis = sol.state.basis;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(basis.size());
    for (int i = 0; i < basis.size(); ++i) {
        const auto [n, k] = basis.state(i);
        if (int src = basis.index_of(n + 1, k); src >= 0)
            c(i) = std::sqrt(n + 1.0) * sol.state.amplitudes(src);
    }
    c /= c(0);

    ConditionalState out;
    out.zeta = c(basis.index_of(1, 0)) / sol.lambda;
    const double gsn = angular_per_ns(sol.params.vacuum_rabi_mhz());
    const double gp = angular_per_ns(sol.params.gamma_prime_mhz);
    out.theta = gsn > 0.0
                    ? -c(basis.index_of(0, 1)) * gp / (2.0 * gsn * sol.lambda)
                    : 1.0;
    return out;
}

}  // namespace cqedfb
