#include "fp8emu/lfsr.hpp"

#include <stdexcept>

namespace fp8emu {

LfsrStream::LfsrStream(std::uint16_t seed, int sample_bits)
    : state_(seed), sample_bits_(sample_bits) {
    if (seed == 0) {
        throw std::invalid_argument("LfsrStream: zero seed is a fixed point");
    }
    if (sample_bits < 1 || sample_bits > kRegisterBits) {
        throw std::invalid_argument("LfsrStream: sample_bits out of range");
    }
}

std::uint32_t LfsrStream::next_bits() {
    std::uint32_t out = 0;
    for (int i = 0; i < sample_bits_; ++i) {
        const std::uint16_t s = state_;
        const std::uint16_t bit =
            ((s >> 0) ^ (s >> 1) ^ (s >> 3) ^ (s >> 12)) & 1u;
        state_ = static_cast<std::uint16_t>((s >> 1) | (bit << 15));
        out = (out << 1) | (s & 1u);
    }
    return out;
}

double LfsrStream::next_fraction() {
    const double denom = static_cast<double>(1u << sample_bits_);
    return static_cast<double>(next_bits()) / denom;
}

LfsrStream LfsrStream::split(std::uint64_t seed, std::uint64_t stream_index,
                             int sample_bits) {
    std::uint64_t h = mix_seed(seed, stream_index);
    std::uint16_t s = static_cast<std::uint16_t>(h & 0xFFFFu);
    // Fold the upper bits in until nonzero; h == 0 everywhere is unreachable
    // for mix64 output but guard anyway.
    while (s == 0) {
        h = mix64(h + 1);
        s = static_cast<std::uint16_t>(h & 0xFFFFu);
    }
    return LfsrStream(s, sample_bits);
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace fp8emu
