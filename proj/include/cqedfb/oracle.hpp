#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <stdexcept>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "cqedfb/basis.hpp"
#include "cqedfb/params.hpp"
#include "cqedfb/steady_state.hpp"
#include "cqedfb/types.hpp"

// Unconditional master-equation route.  Everything the conditional hierarchy
// predicts can be recomputed here from the full density matrix on a truncated
// basis; the two routes agree in the weak-drive limit and the comparison is the
// main correctness check of the package.
namespace cqedfb::oracle {

// In the real drive gauge used throughout, the steady density matrix is real
// symmetric, so plain MatrixXd carries it.
struct DensityMatrix {
    ExcitationBasis basis;
    Eigen::MatrixXd rho;
};

inline Eigen::MatrixXd photon_annihilator(const ExcitationBasis& basis) {
    const int s = basis.size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(s, s);
    for (int i = 0; i < s; ++i) {
        const auto [n, k] = basis.state(i);
        if (int src = basis.index_of(n + 1, k); src >= 0) a(i, src) = std::sqrt(n + 1.0);
    }
    return a;
}

// Collapse operator of the broadened atomic decay: independent-emitter damping
// of the excitation number, elements sqrt(k), total jump rate gamma' * k.
inline Eigen::MatrixXd excitation_annihilator(const ExcitationBasis& basis) {
    const int s = basis.size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(s, s);
    for (int i = 0; i < s; ++i) {
        const auto [n, k] = basis.state(i);
        if (int src = basis.index_of(n, k + 1); src >= 0) m(i, src) = std::sqrt(k + 1.0);
    }
    return m;
}

namespace detail {
inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}
}  // namespace detail

// Generator of the unconditional evolution acting on column-stacked density
// matrices:  L vec(rho) = vec(A rho + rho A^T + 2 kappa a rho a^T + gamma' s rho s^T)
// with A the no-jump generator.  Trace-preserving on the truncated basis.
inline Eigen::MatrixXd liouvillian(const SystemParams& p, const ExcitationBasis& basis) {
    const Eigen::MatrixXd a = no_jump_generator(p, basis);
    const Eigen::MatrixXd ph = photon_annihilator(basis);
    const Eigen::MatrixXd at = excitation_annihilator(basis);
    const double kappa = angular_per_ns(p.kappa_mhz);
    const double gp = angular_per_ns(p.gamma_prime_mhz);
    const int s = basis.size();
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(s, s);
    return detail::kron(id, a) + detail::kron(a, id) + 2.0 * kappa * detail::kron(ph, ph) +
           gp * detail::kron(at, at);
}

inline DensityMatrix steady_density(const SystemParams& p, int cutoff = 4) {
    p.validate();
    ExcitationBasis basis(p.n_atoms, cutoff);
    const int s = basis.size();
    const Eigen::MatrixXd lv = liouvillian(p, basis);

    // Null vector with unit trace: overwrite one row with the trace functional.
    Eigen::MatrixXd m = lv;
    m.row(0).setZero();
    for (int j = 0; j < s; ++j) m(0, j * s + j) = 1.0;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s * s);
    rhs(0) = 1.0;

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    Eigen::VectorXd v = lu.solve(rhs);
    const double residual = (lv * v).lpNorm<Eigen::Infinity>();
    if (!(residual <= 1e-10))
        throw std::runtime_error("steady_density: steady state not unique or solve failed");

    Eigen::MatrixXd rho = Eigen::Map<Eigen::MatrixXd>(v.data(), s, s);
    rho = 0.5 * (rho + rho.transpose()).eval();
    rho /= rho.trace();
    return {basis, rho};
}

inline double mean_photon_number(const DensityMatrix& d) {
    double n = 0.0;
    for (int i = 0; i < d.basis.size(); ++i) n += d.basis.state(i).photons * d.rho(i, i);
    return n;
}

inline double mean_excitation_number(const DensityMatrix& d) {
    double k = 0.0;
    for (int i = 0; i < d.basis.size(); ++i) k += d.basis.state(i).excited * d.rho(i, i);
    return k;
}

inline double g2_zero(const DensityMatrix& d) {
    const Eigen::MatrixXd a = photon_annihilator(d.basis);
    const Eigen::MatrixXd collapsed = a * d.rho * a.transpose();
    double num = 0.0;
    for (int i = 0; i < d.basis.size(); ++i) num += d.basis.state(i).photons * collapsed(i, i);
    const double n = mean_photon_number(d);
    if (!(n > 0.0)) throw std::invalid_argument("oracle::g2_zero: undriven steady state");
    return num / (n * n);
}

// Photon correlation from the regression of the collapsed state:
// g2(tau) = tr[n exp(L tau)(a rho a^T)] / <n>^2 on a nondecreasing grid
// (tau >= 0; the function is even in tau).  Uniform grids reuse one
// exponential; each distinct spacing costs one more.
inline G2Series g2_of_tau(const SystemParams& p, int cutoff,
                          std::span<const double> tau_grid_ns) {
    const DensityMatrix d = steady_density(p, cutoff);
    const int s = d.basis.size();
    const double n_mean = mean_photon_number(d);
    if (!(n_mean > 0.0)) throw std::invalid_argument("oracle::g2_of_tau: undriven steady state");

    const Eigen::MatrixXd a = photon_annihilator(d.basis);
    Eigen::MatrixXd state = a * d.rho * a.transpose();
    const Eigen::MatrixXd lv = liouvillian(p, d.basis);

    G2Series g;
    g.tau_ns.reserve(tau_grid_ns.size());
    g.values.reserve(tau_grid_ns.size());
    Eigen::Map<Eigen::VectorXd> v(state.data(), s * s);
    Eigen::MatrixXd prop;
    double prop_dt = -1.0;
    double tau = 0.0;
    for (double target : tau_grid_ns) {
        if (!(target >= tau))
            throw std::invalid_argument("oracle::g2_of_tau: grid must be nondecreasing, >= 0");
        const double dt = target - tau;
        if (dt > 0.0) {
            if (std::fabs(dt - prop_dt) > 1e-12) {
                prop = (lv * dt).exp();
                prop_dt = dt;
            }
            v = (prop * v).eval();
            tau = target;
        }
        double num = 0.0;
        for (int j = 0; j < s; ++j) num += d.basis.state(j).photons * state(j, j);
        g.tau_ns.push_back(target);
        g.values.push_back(num / (n_mean * n_mean));
    }
    return g;
}

// Convenience uniform-grid front end.
inline G2Series g2_of_tau(const SystemParams& p, double tau_max_ns, double dt_ns,
                          int cutoff = 4) {
    if (!(dt_ns > 0.0) || !(tau_max_ns >= 0.0))
        throw std::invalid_argument("oracle::g2_of_tau: need dt_ns > 0 and tau_max_ns >= 0");
    const std::size_t n = static_cast<std::size_t>(std::floor(tau_max_ns / dt_ns + 1e-9));
    std::vector<double> grid(n + 1);
    for (std::size_t i = 0; i <= n; ++i) grid[i] = static_cast<double>(i) * dt_ns;
    return g2_of_tau(p, cutoff, grid);
}

}  // namespace cqedfb::oracle
