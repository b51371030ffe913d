// Counter-based random number generation (Philox4x32-10).
//
// Every random quantity in this library is addressed, not streamed: a draw is
// a pure function of (seed, stream, substream, counter).  Replicates of an
// experiment use distinct streams, so any replicate can be regenerated in
// isolation and results are identical across platforms and thread schedules.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace fexp {

struct PhiloxState {
    std::array<std::uint32_t, 4> counter{0, 0, 0, 0};
    std::array<std::uint32_t, 2> key{0, 0};
};

namespace detail {

inline void philox_mulhilo(std::uint32_t a, std::uint32_t b,
                           std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

inline void philox_round(std::array<std::uint32_t, 4>& x,
                         const std::array<std::uint32_t, 2>& k) {
    std::uint32_t hi0, lo0, hi1, lo1;
    philox_mulhilo(0xD2511F53u, x[0], hi0, lo0);
    philox_mulhilo(0xCD9E8D57u, x[2], hi1, lo1);
    x = {hi1 ^ x[1] ^ k[0], lo1, hi0 ^ x[3] ^ k[1], lo0};
}

} // namespace detail

// One 10-round Philox4x32 block: 128 bits of counter -> 128 random bits.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                               std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        detail::philox_round(counter, key);
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
    }
    return counter;
}

// Sequential view of a Philox stream.  (seed, stream, substream) select an
// independent stream; successive calls walk the block counter.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0,
                 std::uint32_t substream = 0)
        : key_{static_cast<std::uint32_t>(seed),
               static_cast<std::uint32_t>(seed >> 32)},
          prefix_{static_cast<std::uint32_t>(stream),
                  static_cast<std::uint32_t>(stream >> 32), substream} {}

    std::uint32_t next_u32() {
        if (avail_ == 0)
            refill();
        return block_[--avail_];
    }

    std::uint64_t next_u64() {
        const std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform on (0,1); never returns an endpoint.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller, independent of any libc distribution
    // implementation so that draws are bit-reproducible everywhere.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free modulo is fine here; n is always tiny vs 2^64.
        return next_u64() % n;
    }

private:
    void refill() {
        block_ = philox4x32({ctr_, prefix_[2], prefix_[0], prefix_[1]}, key_);
        ++ctr_;
        avail_ = 4;
    }

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 3> prefix_;
    std::uint32_t ctr_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int avail_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Canonical name recorded in configs and manifests.
inline constexpr const char* kRngName = "philox4x32-10";

} // namespace fexp
