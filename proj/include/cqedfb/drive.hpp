#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cqedfb/errors.hpp"

namespace cqedfb {

// Unit intensity profile q(t) loaded from a two-column text file
// (time_ns intensity_factor, '#' comments).  Deviations from 1 are normalized
// by the signed peak deviation, so the plateau sits at q = 1 no matter which
// way the file steps, and the endpoints are clamped to q = 0.  The file's time
// span defines the pulse duration; times are shifted to start at 0.
struct SampledShape {
    std::vector<double> time_ns;
    std::vector<double> unit_profile;

    double duration_ns() const { return time_ns.empty() ? 0.0 : time_ns.back(); }

    double at(double t_ns) const {
        if (time_ns.size() < 2 || t_ns <= time_ns.front() || t_ns >= time_ns.back()) return 0.0;
        auto it = std::upper_bound(time_ns.begin(), time_ns.end(), t_ns);
        const std::size_t hi = static_cast<std::size_t>(it - time_ns.begin());
        const double w = (t_ns - time_ns[hi - 1]) / (time_ns[hi] - time_ns[hi - 1]);
        return unit_profile[hi - 1] + w * (unit_profile[hi] - unit_profile[hi - 1]);
    }
};

inline SampledShape load_sampled_shape(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("pulse shape file not readable: " + path);
    SampledShape s;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        std::istringstream row(line);
        double t, f;
        if (!(row >> t)) continue;  // blank line
        if (!(row >> f))
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected two columns (time_ns intensity_factor)");
        if (!std::isfinite(t) || !std::isfinite(f) || f <= 0.0)
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": intensity factor must be finite and > 0");
        if (!s.time_ns.empty() && t <= s.time_ns.back())
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": sample times must be strictly increasing");
        s.time_ns.push_back(t);
        s.unit_profile.push_back(f - 1.0);
    }
    if (s.time_ns.size() < 2)
        throw ConfigError(path + ": need at least two samples");

    const double t0 = s.time_ns.front();
    for (double& t : s.time_ns) t -= t0;

    double peak = 0.0;
    for (double d : s.unit_profile)
        if (std::fabs(d) > std::fabs(peak)) peak = d;
    if (peak == 0.0)
        throw ConfigError(path + ": shape is flat (all factors equal 1)");
    for (double& d : s.unit_profile) d /= peak;
    s.unit_profile.front() = 0.0;
    s.unit_profile.back() = 0.0;
    return s;
}

// One intensity pulse on the drive.  The applied intensity factor is
// 1 + intensity_step * q(t) with q the unit profile: a trapezoid with linear
// ramps of risetime_ns by default, or a sampled shape.  Amplitude factor is the
// square root of the intensity factor.
struct FeedbackPulse {
    double start_ns = 0.0;
    double duration_ns = 120.0;
    double risetime_ns = 8.0;
    double intensity_step = 0.0;
    std::optional<SampledShape> shape;

    double end_ns() const { return start_ns + duration_ns; }

    void validate() const {
        auto bad = [](const std::string& msg) { throw std::invalid_argument("FeedbackPulse: " + msg); };
        if (!(start_ns >= 0.0)) bad("start_ns must be >= 0");
        if (!(duration_ns > 0.0)) bad("duration_ns must be > 0");
        if (!(risetime_ns >= 0.0)) bad("risetime_ns must be >= 0");
        if (2.0 * risetime_ns > duration_ns) bad("ramps do not fit in the pulse");
        if (!(1.0 + intensity_step > 0.0)) bad("intensity_step must keep the intensity positive");
        if (shape && std::fabs(shape->duration_ns() - duration_ns) > 1e-9)
            bad("duration_ns must equal the sampled shape's span");
    }

    double unit_profile(double t_ns) const {
        if (shape) return shape->at(t_ns - start_ns);
        const double dt = t_ns - start_ns;
        if (dt < 0.0 || dt >= duration_ns) return 0.0;
        if (risetime_ns <= 0.0) return 1.0;
        if (dt < risetime_ns) return dt / risetime_ns;
        if (dt > duration_ns - risetime_ns) return (duration_ns - dt) / risetime_ns;
        return 1.0;
    }

    double intensity_factor(double t_ns) const { return 1.0 + intensity_step * unit_profile(t_ns); }

    // Times where the profile has a corner; integrators split segments here.
    std::vector<double> corner_times() const {
        std::vector<double> c;
        if (shape) {
            c.reserve(shape->time_ns.size());
            for (double t : shape->time_ns) c.push_back(start_ns + t);
            return c;
        }
        c.push_back(start_ns);
        if (risetime_ns > 0.0) {
            c.push_back(start_ns + risetime_ns);
            c.push_back(end_ns() - risetime_ns);
        }
        c.push_back(end_ns());
        return c;
    }
};

// Baseline drive plus a sequence of non-overlapping pulses.
class DriveWaveform {
  public:
    explicit DriveWaveform(double baseline_epsilon_mhz, std::vector<FeedbackPulse> pulses = {})
        : epsilon_mhz_(baseline_epsilon_mhz), pulses_(std::move(pulses)) {
        if (!(epsilon_mhz_ >= 0.0))
            throw std::invalid_argument("DriveWaveform: baseline epsilon must be >= 0");
        for (const auto& p : pulses_) p.validate();
        std::sort(pulses_.begin(), pulses_.end(),
                  [](const FeedbackPulse& a, const FeedbackPulse& b) { return a.start_ns < b.start_ns; });
        for (std::size_t i = 1; i < pulses_.size(); ++i)
            if (pulses_[i].start_ns < pulses_[i - 1].end_ns() - 1e-12)
                throw std::invalid_argument("DriveWaveform: pulses overlap");
    }

    double baseline_epsilon_mhz() const { return epsilon_mhz_; }
    const std::vector<FeedbackPulse>& pulses() const { return pulses_; }

    double intensity_factor(double t_ns) const {
        for (const auto& p : pulses_)
            if (t_ns >= p.start_ns && t_ns < p.end_ns()) return p.intensity_factor(t_ns);
        return 1.0;
    }

    double amplitude_factor(double t_ns) const { return std::sqrt(intensity_factor(t_ns)); }

    // Corner times strictly inside (t0, t1), sorted and deduplicated.
    std::vector<double> breakpoints_in(double t0_ns, double t1_ns) const {
        std::vector<double> b;
        for (const auto& p : pulses_)
            for (double c : p.corner_times())
                if (c > t0_ns && c < t1_ns) b.push_back(c);
        std::sort(b.begin(), b.end());
        b.erase(std::unique(b.begin(), b.end()), b.end());
        return b;
    }

  private:
    double epsilon_mhz_;
    std::vector<FeedbackPulse> pulses_;
};

}  // namespace cqedfb
