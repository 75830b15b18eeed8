#pragma once

#include <stdexcept>
#include <string>

namespace cqedfb {

// Config file / CLI input problems. Message carries the offending key or line.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Adaptive integration failed (step-size underflow). Carries the time of failure.
struct IntegrationError : std::runtime_error {
    double t_ns;
    IntegrationError(const std::string& what, double t) : std::runtime_error(what), t_ns(t) {}
};

// Requested fit target lies outside the attainable range of the search bracket.
struct InfeasibleTargetError : std::runtime_error {
    double attainable_lo, attainable_hi;
    InfeasibleTargetError(const std::string& what, double lo, double hi)
        : std::runtime_error(what), attainable_lo(lo), attainable_hi(hi) {}
};

// No capture point exists (overdamped regime, or the oscillation never recrosses
// the atomic trace after the guard time).
struct NoCaptureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Feedback protocol cannot be realized as configured (e.g. no g2 extremum inside
// the pulse window).
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Correlation histogram cannot be normalized (empty tail / zero unconditional rate).
struct NormalizationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cqedfb
