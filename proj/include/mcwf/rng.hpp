#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace mcwf {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// Each (seed, stream) pair yields an independent sequence, so trajectory i of
// an ensemble can draw from Philox(base_seed, i) without any coordination.
// The 128-bit counter is split as [block_lo, block_hi, stream_lo, stream_hi];
// the 64-bit key is the seed.
class Philox {
public:
    using result_type = std::uint64_t;

    explicit Philox(std::uint64_t seed, std::uint64_t stream = 0) noexcept {
        key_[0] = static_cast<std::uint32_t>(seed);
        key_[1] = static_cast<std::uint32_t>(seed >> 32);
        ctr_[0] = 0;
        ctr_[1] = 0;
        ctr_[2] = static_cast<std::uint32_t>(stream);
        ctr_[3] = static_cast<std::uint32_t>(stream >> 32);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (avail_ < 2) refill();
        const std::uint64_t lo = buf_[4 - avail_];
        const std::uint64_t hi = buf_[5 - avail_];
        avail_ -= 2;
        return lo | (hi << 32);
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform01() noexcept {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    // Exponential waiting time with the given rate.
    double exponential(double rate) noexcept {
        return -std::log1p(-uniform01()) / rate;
    }

    // Raw 4x32 block for the given counter words; exposed for known-answer tests.
    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += 0x9E3779B9u;
                key[1] += 0xBB67AE85u;
            }
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    void refill() noexcept {
        buf_ = block(ctr_, key_);
        if (++ctr_[0] == 0) ++ctr_[1]; // 64-bit block counter; stream words untouched
        avail_ = 4;
    }

    std::array<std::uint32_t, 4> ctr_{};
    std::array<std::uint32_t, 2> key_{};
    std::array<std::uint32_t, 4> buf_{};
    int avail_ = 0;
};

} // namespace mcwf
