#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cqedfb/errors.hpp"
#include "cqedfb/mc.hpp"
#include "cqedfb/types.hpp"

namespace cqedfb {

struct HistogramWindow {
    double bin_width_ns = 0.5;
    double tau_min_ns = -300.0;
    double tau_max_ns = 300.0;
    double record_duration_ns = 0.0;  // trajectory length; bounds the observable lags
    bool multi_stop = true;           // false: first stop after each start only (hardware TDC)
};

// Start-stop delay histogram.  counts[i] holds coincidences with lag in
// [tau_min + i*w, tau_min + (i+1)*w).  exposure_ns[i] is the summed fraction of
// that lag bin observable from each start given the finite record (a lag tau
// is visible from a start at t only if t + tau lies in [0, duration]), in
// start*ns; rates are counts/exposure, which removes the finite-record tail
// bias that counts/(n_starts*bin_width) carries.
struct Histogram {
    double bin_width_ns = 0.5;
    double tau_min_ns = 0.0;
    double tau_max_ns = 0.0;
    std::vector<std::uint64_t> counts;
    std::vector<double> exposure_ns;
    std::uint64_t n_starts = 0;
};

inline Histogram histogram(const std::vector<mc::ClickRecord>& clicks, const HistogramWindow& w) {
    if (!(w.bin_width_ns > 0.0))
        throw std::invalid_argument("histogram: bin_width_ns must be > 0");
    if (!(w.tau_max_ns > w.tau_min_ns))
        throw std::invalid_argument("histogram: tau_max_ns must exceed tau_min_ns");
    if (!(w.record_duration_ns > 0.0))
        throw std::invalid_argument("histogram: record_duration_ns must be > 0");
    const double ratio = (w.tau_max_ns - w.tau_min_ns) / w.bin_width_ns;
    const std::size_t n_bins = static_cast<std::size_t>(std::llround(ratio));
    if (std::fabs(ratio - static_cast<double>(n_bins)) > 1e-9 || n_bins == 0)
        throw std::invalid_argument("histogram: window must be a whole number of bins");
    // tau = 0 on a bin edge keeps the +/- halves cleanly separated
    if (w.tau_min_ns < 0.0 && w.tau_max_ns > 0.0) {
        const double edge = -w.tau_min_ns / w.bin_width_ns;
        if (std::fabs(edge - std::round(edge)) > 1e-9)
            throw std::invalid_argument("histogram: tau = 0 must fall on a bin edge");
    }

    Histogram h;
    h.bin_width_ns = w.bin_width_ns;
    h.tau_min_ns = w.tau_min_ns;
    h.tau_max_ns = w.tau_max_ns;
    h.counts.assign(n_bins, 0);
    h.exposure_ns.assign(n_bins, 0.0);

    auto bin_of = [&](double tau) -> std::ptrdiff_t {
        const double x = (tau - w.tau_min_ns) / w.bin_width_ns;
        if (x < 0.0 || x >= static_cast<double>(n_bins)) return -1;
        return static_cast<std::ptrdiff_t>(x);
    };

    // per-trajectory pass; clicks arrive grouped by trajectory, times ascending
    std::vector<double> starts, stops;
    std::size_t i = 0;
    while (i < clicks.size()) {
        const std::uint64_t traj = clicks[i].trajectory_id;
        starts.clear();
        stops.clear();
        for (; i < clicks.size() && clicks[i].trajectory_id == traj; ++i) {
            if (clicks[i].detector == mc::Detector::start)
                starts.push_back(clicks[i].time_ns);
            else
                stops.push_back(clicks[i].time_ns);
        }
        for (double ts : starts) {
            // exposure: the lag range visible from this start
            const double lo = std::max(w.tau_min_ns, -ts);
            const double hi = std::min(w.tau_max_ns, w.record_duration_ns - ts);
            if (hi > lo) {
                const double fl = (lo - w.tau_min_ns) / w.bin_width_ns;
                const double fh = (hi - w.tau_min_ns) / w.bin_width_ns;
                std::size_t bl = static_cast<std::size_t>(std::max(0.0, std::floor(fl)));
                std::size_t bh = static_cast<std::size_t>(
                    std::min(static_cast<double>(n_bins - 1), std::floor(fh - 1e-12)));
                for (std::size_t b = bl; b <= bh && b < n_bins; ++b) {
                    const double bin_lo = w.tau_min_ns + static_cast<double>(b) * w.bin_width_ns;
                    const double bin_hi = bin_lo + w.bin_width_ns;
                    h.exposure_ns[b] += std::min(hi, bin_hi) - std::max(lo, bin_lo);
                }
            }
            if (w.multi_stop) {
                auto first = std::lower_bound(stops.begin(), stops.end(), ts + w.tau_min_ns);
                for (auto it = first; it != stops.end() && *it - ts < w.tau_max_ns; ++it) {
                    const std::ptrdiff_t b = bin_of(*it - ts);
                    if (b >= 0) ++h.counts[static_cast<std::size_t>(b)];
                }
            } else {
                auto it = std::upper_bound(stops.begin(), stops.end(), ts);
                if (it != stops.end()) {
                    const std::ptrdiff_t b = bin_of(*it - ts);
                    if (b >= 0) ++h.counts[static_cast<std::size_t>(b)];
                }
            }
        }
        h.n_starts += starts.size();
    }
    return h;
}

enum class NormalizeMode { tail_average, steady_rate };

// Turn the histogram into g2 samples at bin centers.  The per-bin conditional
// stop rate counts/exposure is divided by the unconditional rate: either the
// average conditional rate over the trailing 100 ns of the positive-lag side,
// or an independently supplied steady-state stop rate (per ns).  stderr is the
// Poisson error sqrt(counts)/exposure over the same denominator.
inline G2Series normalize(const Histogram& h, NormalizeMode mode,
                          double independent_rate_per_ns = 0.0) {
    if (h.counts.empty()) throw NormalizationError("normalize: empty histogram");
    double uncond = 0.0;
    if (mode == NormalizeMode::steady_rate) {
        if (!(independent_rate_per_ns > 0.0))
            throw NormalizationError("normalize: independent rate must be > 0");
        uncond = independent_rate_per_ns;
    } else {
        const double tail_lo = h.tau_max_ns - 100.0;
        double cnt = 0.0, exp_ns = 0.0;
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            const double lo = h.tau_min_ns + static_cast<double>(b) * h.bin_width_ns;
            if (lo + 0.5 * h.bin_width_ns < tail_lo) continue;
            cnt += static_cast<double>(h.counts[b]);
            exp_ns += h.exposure_ns[b];
        }
        if (!(cnt > 0.0) || !(exp_ns > 0.0))
            throw NormalizationError("normalize: empty tail, cannot estimate the unconditional rate");
        uncond = cnt / exp_ns;
    }

    G2Series g;
    g.tau_ns.reserve(h.counts.size());
    g.values.reserve(h.counts.size());
    g.stderr_values.reserve(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        g.tau_ns.push_back(h.tau_min_ns + (static_cast<double>(b) + 0.5) * h.bin_width_ns);
        if (h.exposure_ns[b] > 0.0) {
            const double rate = static_cast<double>(h.counts[b]) / h.exposure_ns[b];
            g.values.push_back(rate / uncond);
            g.stderr_values.push_back(std::sqrt(static_cast<double>(h.counts[b])) /
                                      h.exposure_ns[b] / uncond);
        } else {
            g.values.push_back(std::numeric_limits<double>::quiet_NaN());
            g.stderr_values.push_back(std::numeric_limits<double>::infinity());
        }
    }
    return g;
}

inline Histogram rebin(const Histogram& h, int factor) {
    if (factor < 1) throw std::invalid_argument("rebin: factor must be >= 1");
    if (h.counts.size() % static_cast<std::size_t>(factor) != 0)
        throw std::invalid_argument("rebin: factor must divide the bin count");
    Histogram out;
    out.bin_width_ns = h.bin_width_ns * factor;
    out.tau_min_ns = h.tau_min_ns;
    out.tau_max_ns = h.tau_max_ns;
    out.n_starts = h.n_starts;
    const std::size_t n = h.counts.size() / static_cast<std::size_t>(factor);
    out.counts.assign(n, 0);
    out.exposure_ns.assign(n, 0.0);
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        out.counts[b / factor] += h.counts[b];
        out.exposure_ns[b / factor] += h.exposure_ns[b];
    }
    return out;
}

}  // namespace cqedfb
