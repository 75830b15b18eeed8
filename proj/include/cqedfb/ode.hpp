#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "cqedfb/errors.hpp"

namespace cqedfb::ode {

struct Options {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    double h_init_ns = 0.0;   // 0 = pick from the interval length
    double h_min_ns = 1e-12;  // below this the step controller gives up
};

// Dormand-Prince 5(4) with FSAL and a standard PI-free step controller.
// Integrates y' = rhs(t, y) from t0 to t1 in place.  rhs must be smooth on the
// interval; callers split at drive-waveform corners before calling.
template <std::size_t Dim, class Rhs>
void integrate(const Rhs& rhs, std::array<double, Dim>& y, double t0, double t1,
               const Options& opt = {}) {
    using State = std::array<double, Dim>;
    const double span = t1 - t0;
    if (!(span > 0.0)) {
        if (span == 0.0) return;
        throw std::invalid_argument("ode::integrate: t1 < t0");
    }
    if (span < 1e-14) return;  // below time resolution of interest

    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    double t = t0;
    double h = opt.h_init_ns > 0.0 ? opt.h_init_ns : span / 16.0;
    State k1, k2, k3, k4, k5, k6, k7, yt, ynew;
    rhs(t, y, k1);

    while (t < t1) {
        if (h > t1 - t) h = t1 - t;

        for (std::size_t i = 0; i < Dim; ++i) yt[i] = y[i] + h * a21 * k1[i];
        rhs(t + h / 5.0, yt, k2);
        for (std::size_t i = 0; i < Dim; ++i) yt[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        rhs(t + 3.0 * h / 10.0, yt, k3);
        for (std::size_t i = 0; i < Dim; ++i)
            yt[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        rhs(t + 4.0 * h / 5.0, yt, k4);
        for (std::size_t i = 0; i < Dim; ++i)
            yt[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        rhs(t + 8.0 * h / 9.0, yt, k5);
        for (std::size_t i = 0; i < Dim; ++i)
            yt[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        rhs(t + h, yt, k6);
        for (std::size_t i = 0; i < Dim; ++i)
            ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        rhs(t + h, ynew, k7);

        double err = 0.0;
        for (std::size_t i = 0; i < Dim; ++i) {
            const double ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                                   e6 * k6[i] + e7 * k7[i]);
            const double ymag = std::fmax(std::fabs(y[i]), std::fabs(ynew[i]));
            const double tol = opt.abs_tol + opt.rel_tol * ymag;
            err += (ei / tol) * (ei / tol);
        }
        err = std::sqrt(err / Dim);

        if (err <= 1.0) {  // accept
            t += h;
            y = ynew;
            k1 = k7;
            const double grow = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
            h *= std::fmin(5.0, std::fmax(0.2, grow));
        } else {
            const double shrink = std::isfinite(err) ? std::fmax(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
            h *= shrink;
        }
        if (h < opt.h_min_ns && t < t1)
            throw IntegrationError("ode::integrate: step-size underflow at t = " +
                                       std::to_string(t) + " ns",
                                   t);
    }
}

}  // namespace cqedfb::ode
