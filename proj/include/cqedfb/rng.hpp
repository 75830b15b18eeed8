#pragma once

#include <cstdint>

namespace cqedfb::rng {

// splitmix64; used only to expand seeds into xoshiro state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256++ stream, one per trajectory, derived from (master seed, stream id).
// Streams are decorrelated by the splitmix expansion of the combined seed; the
// same pair always reproduces the same draw sequence regardless of how
// trajectories are scheduled across threads.
class Stream {
  public:
    Stream(std::uint64_t master_seed, std::uint64_t stream_id) {
        std::uint64_t sm = master_seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
        for (auto& word : s_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1]; valid as a survival threshold
    double threshold() { return 1.0 - uniform(); }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

}  // namespace cqedfb::rng
