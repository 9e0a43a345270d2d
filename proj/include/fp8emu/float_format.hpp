#pragma once

#include <cstdint>
#include <string>

#include "fp8emu/lfsr.hpp"

namespace fp8emu {

/// How a real value is mapped onto the nearest representable code.
enum class RoundingMode {
    NearestEven,       // ties to even mantissa
    Stochastic,        // round up with probability residual/ulp
    TruncateTowardZero // drop discarded bits; building block for the others
};

const char* to_string(RoundingMode mode);
RoundingMode rounding_mode_from_string(const std::string& name);

struct DynamicRange {
    double max_normal;
    double min_normal;
    double min_subnormal;
};

/// Parametric minifloat descriptor: 1 sign bit, `exponent_bits` exponent,
/// `mantissa_bits` mantissa, bias 2^(e-1) - 1. The all-ones exponent field is
/// reserved for Inf (mantissa 0) and NaN (mantissa != 0); the all-zero
/// exponent field holds signed zero and the subnormals.
struct FloatFormat {
    const char* name;
    int exponent_bits;
    int mantissa_bits;

    constexpr int width() const { return 1 + exponent_bits + mantissa_bits; }
    constexpr int bias() const { return (1 << (exponent_bits - 1)) - 1; }
    constexpr int max_exponent_field() const { return (1 << exponent_bits) - 2; }

    constexpr std::uint32_t mantissa_mask() const {
        return (1u << mantissa_bits) - 1u;
    }
    constexpr std::uint32_t exponent_mask() const {
        return (1u << exponent_bits) - 1u;
    }
    constexpr std::uint32_t sign_mask() const {
        return 1u << (exponent_bits + mantissa_bits);
    }
    constexpr std::uint32_t code_mask() const {
        return (width() == 32) ? 0xFFFFFFFFu : ((1u << width()) - 1u);
    }

    /// Magnitude code of the largest finite value.
    constexpr std::uint32_t max_normal_code() const {
        return (static_cast<std::uint32_t>(max_exponent_field()) << mantissa_bits) |
               mantissa_mask();
    }
    constexpr std::uint32_t inf_code() const {
        return exponent_mask() << mantissa_bits;
    }
    /// Canonical quiet NaN: all-ones exponent, mantissa MSB set, sign 0.
    constexpr std::uint32_t nan_code() const {
        return inf_code() | (1u << (mantissa_bits - 1));
    }

    double max_normal() const;
    double min_normal() const;
    double min_subnormal() const;
    DynamicRange dynamic_range() const;

    bool operator==(const FloatFormat& other) const {
        return exponent_bits == other.exponent_bits &&
               mantissa_bits == other.mantissa_bits;
    }
};

inline constexpr FloatFormat kFp8{"FP8", 5, 2};
inline constexpr FloatFormat kFp16{"FP16", 5, 10};
inline constexpr FloatFormat kFp32{"FP32", 8, 23};

const FloatFormat& format_from_string(const std::string& name);

struct EncodeResult {
    std::uint32_t code;
    bool overflowed;
    bool underflowed_to_zero;
};

/// Exact value of a code as a double (strictly wider than any supported
/// format, so no information is lost). Reserved exponent decodes to +-Inf or
/// NaN; -0 decodes to a signed zero that compares equal to 0.
double decode(std::uint32_t code, const FloatFormat& fmt);

/// Round a real value to a code of `fmt`. Total: numeric trouble is reported
/// through flags, never thrown.
///   |x| > max normal  -> +-Inf code and overflowed=true (or the max-normal
///                        code when `saturate` is set; the flag still fires)
///   0 < |x| rounds to 0 -> underflowed_to_zero=true
///   NaN               -> canonical NaN code
/// `rng` is consulted only in Stochastic mode and must be non-null there.
EncodeResult encode(double x, const FloatFormat& fmt, RoundingMode mode,
                    LfsrStream* rng = nullptr, bool saturate = false);

/// Value-level round-to-nearest, ties to even mantissa.
double round_nearest_even(double x, const FloatFormat& fmt);

/// Value-level stochastic rounding: with residual d = x - trunc(x) and
/// quantization step e = ulp(x), rounds up with probability d/e, realized by
/// drawing r uniform in [0, e) and truncating x + r.
double stochastic_round(double x, const FloatFormat& fmt, LfsrStream& rng);

/// Spacing between adjacent representable magnitudes at |x|: 2^(E - m) for
/// |x| in the binade [2^E, 2^(E+1)), and the subnormal step below the minimum
/// normal. Requires |x| <= max normal.
double ulp(double x, const FloatFormat& fmt);

/// Dynamic-range comparison table for FP32/FP16/FP8 (max normal, min normal,
/// min subnormal; three significant digits).
std::string range_report();

/// Number formatting used by the range report: integral values below 10^6
/// print as integers, everything else as %.2e with an unpadded exponent.
std::string format_range_value(double v);

} // namespace fp8emu
