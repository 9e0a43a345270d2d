#pragma once

#include <cmath>
#include <cstdint>

#include "fp8emu/lfsr.hpp"

namespace fp8emu {

/// Counter-based generator over the splitmix64 mixer: uniform doubles in
/// [0, 1) plus Box-Muller normals. Stateless apart from the counter, so any
/// (seed, draw index) pair is reproducible everywhere.
struct Rand {
    std::uint64_t seed;
    std::uint64_t n = 0;
    bool have_spare = false;
    double spare = 0.0;

    double uniform() {
        return static_cast<double>(mix64(seed + ++n) >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        const double u1 =
            (static_cast<double>(mix64(seed + ++n) >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare = r * std::sin(a);
        have_spare = true;
        return r * std::cos(a);
    }
};

} // namespace fp8emu
