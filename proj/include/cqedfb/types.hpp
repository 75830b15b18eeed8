#pragma once

#include <vector>

namespace cqedfb {

// State of the conditioned field/polarization pair.  zeta scales the field
// amplitude relative to its steady value, theta the atomic polarization; both
// relax to 1.  g2(tau) of the free evolution is zeta(tau)^2 in the weak-drive
// limit.
struct ConditionalState {
    double zeta = 1.0;
    double theta = 1.0;
};

// A sampled correlation function g2(tau).  stderr_values is empty for
// deterministic series and carries per-bin Poisson errors for estimates from
// click records.
struct G2Series {
    std::vector<double> tau_ns;
    std::vector<double> values;
    std::vector<double> stderr_values;
};

}  // namespace cqedfb
