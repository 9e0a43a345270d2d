#pragma once

#include <cstdint>

namespace fp8emu {

/// Fibonacci linear-feedback shift register with the maximal-length tap set
/// (16, 15, 13, 4). The register walks through all 2^16 - 1 nonzero states
/// before repeating. Each sample clocks the register `sample_bits` times and
/// assembles the shifted-out bits MSB-first.
///
/// A stream is single-owner mutable state: concurrent users must derive
/// independent streams via split().
class LfsrStream {
public:
    static constexpr int kRegisterBits = 16;
    static constexpr std::uint32_t kPeriod = 0xFFFFu; // 2^16 - 1

    explicit LfsrStream(std::uint16_t seed, int sample_bits = 16);

    /// Next sample as an integer in [0, 2^sample_bits).
    std::uint32_t next_bits();

    /// Next sample as a fraction in [0, 1): next_bits() / 2^sample_bits.
    double next_fraction();

    std::uint16_t state() const { return state_; }
    int sample_bits() const { return sample_bits_; }

    /// Deterministically derive an independent stream for (seed, stream_index).
    /// Any 64-bit seed is accepted; the mapping to a nonzero register state is
    /// fixed for all time.
    static LfsrStream split(std::uint64_t seed, std::uint64_t stream_index,
                            int sample_bits = 16);

private:
    std::uint16_t state_;
    int sample_bits_;
};

/// SplitMix64 mixing step. Used wherever a well-scrambled deterministic
/// 64-bit value is needed (seed derivation, substream indexing).
std::uint64_t mix64(std::uint64_t x);

/// Combine a seed with a stream index into a new seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(seed + 0x9E3779B97F4A7C15ull * (index + 1));
}

} // namespace fp8emu
