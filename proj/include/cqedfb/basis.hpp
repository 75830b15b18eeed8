#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace cqedfb {

// |n, k>: n cavity photons, k atomic excitations in the symmetric sector.
struct BasisState {
    int photons = 0;
    int excited = 0;
};

// Truncated product basis holding every state with n + k <= cutoff and
// k <= floor(n_atoms).  Ordered by total excitation, then by k, so the ground
// state is index 0 and the weak-drive hierarchy reads off block by block:
//   (0,0) | (1,0) (0,1) | (2,0) (1,1) (0,2) | ...
class ExcitationBasis {
  public:
    ExcitationBasis(double n_atoms, int cutoff) : n_atoms_(n_atoms), cutoff_(cutoff) {
        if (!(n_atoms >= 1.0))
            throw std::invalid_argument("ExcitationBasis: n_atoms must be >= 1");
        if (cutoff < 2)
            throw std::invalid_argument("ExcitationBasis: cutoff must be >= 2");
        // clamp in double first: n_atoms may exceed int range
        const double capped = std::min(std::floor(n_atoms), static_cast<double>(cutoff));
        const int k_cap = static_cast<int>(capped);
        lut_.assign(static_cast<std::size_t>(cutoff + 1) * (k_cap + 1), -1);
        k_cap_ = k_cap;
        for (int total = 0; total <= cutoff; ++total) {
            for (int k = 0; k <= (total < k_cap ? total : k_cap); ++k) {
                lut_[lut_index(total - k, k)] = static_cast<int>(states_.size());
                states_.push_back({total - k, k});
            }
        }
    }

    int size() const { return static_cast<int>(states_.size()); }
    const BasisState& state(int i) const { return states_[static_cast<std::size_t>(i)]; }
    double n_atoms() const { return n_atoms_; }
    int cutoff() const { return cutoff_; }
    int max_excited() const { return k_cap_; }

    // -1 when |n, k> lies outside the truncation.
    int index_of(int photons, int excited) const {
        if (photons < 0 || excited < 0 || excited > k_cap_ || photons + excited > cutoff_)
            return -1;
        return lut_[lut_index(photons, excited)];
    }

  private:
    std::size_t lut_index(int n, int k) const {
        return static_cast<std::size_t>(n) * (k_cap_ + 1) + k;
    }

    double n_atoms_;
    int cutoff_;
    int k_cap_ = 0;
    std::vector<BasisState> states_;
    std::vector<int> lut_;
};

inline ExcitationBasis build_basis(double n_atoms, int cutoff) {
    return ExcitationBasis(n_atoms, cutoff);
}

}  // namespace cqedfb
