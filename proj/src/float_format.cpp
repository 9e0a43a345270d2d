#include "fp8emu/float_format.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <utility>

namespace fp8emu {

const char* to_string(RoundingMode mode) {
    switch (mode) {
    case RoundingMode::NearestEven: return "nearest-even";
    case RoundingMode::Stochastic: return "stochastic";
    case RoundingMode::TruncateTowardZero: return "truncate";
    }
    return "?";
}

RoundingMode rounding_mode_from_string(const std::string& name) {
    if (name == "nearest-even" || name == "rne") return RoundingMode::NearestEven;
    if (name == "stochastic") return RoundingMode::Stochastic;
    if (name == "truncate") return RoundingMode::TruncateTowardZero;
    throw std::invalid_argument("unknown rounding mode: " + name);
}

double FloatFormat::max_normal() const {
    // (2 - 2^-m) * 2^(emax - bias)
    const double two_minus = 2.0 - std::ldexp(1.0, -mantissa_bits);
    return two_minus * std::ldexp(1.0, max_exponent_field() - bias());
}

double FloatFormat::min_normal() const {
    return std::ldexp(1.0, 1 - bias());
}

double FloatFormat::min_subnormal() const {
    return std::ldexp(1.0, 1 - bias() - mantissa_bits);
}

DynamicRange FloatFormat::dynamic_range() const {
    return {max_normal(), min_normal(), min_subnormal()};
}

const FloatFormat& format_from_string(const std::string& name) {
    if (name == "fp8" || name == "FP8") return kFp8;
    if (name == "fp16" || name == "FP16") return kFp16;
    if (name == "fp32" || name == "FP32") return kFp32;
    throw std::invalid_argument("unknown float format: " + name);
}

double decode(std::uint32_t code, const FloatFormat& fmt) {
    code &= fmt.code_mask();
    const bool negative = (code & fmt.sign_mask()) != 0;
    const std::uint32_t efield = (code >> fmt.mantissa_bits) & fmt.exponent_mask();
    const std::uint32_t mfield = code & fmt.mantissa_mask();

    double v;
    if (efield == fmt.exponent_mask()) {
        if (mfield != 0) return std::numeric_limits<double>::quiet_NaN();
        v = std::numeric_limits<double>::infinity();
    } else if (efield == 0) {
        v = std::ldexp(static_cast<double>(mfield),
                       1 - fmt.bias() - fmt.mantissa_bits);
    } else {
        const double significand =
            1.0 + std::ldexp(static_cast<double>(mfield), -fmt.mantissa_bits);
        v = significand * std::ldexp(1.0, static_cast<int>(efield) - fmt.bias());
    }
    return negative ? -v : v;
}

namespace {

// Magnitude code of the largest representable value <= a, together with the
// step up to the next code. Requires 0 < a <= max normal. All arithmetic here
// is exact in double for every supported format.
std::pair<std::uint32_t, double> floor_code(double a, const FloatFormat& fmt) {
    const int mb = fmt.mantissa_bits;
    if (a < fmt.min_normal()) {
        const double step = fmt.min_subnormal();
        const auto q = static_cast<std::uint32_t>(a / step); // power-of-two divide
        return {q, step};
    }
    int e2 = 0;
    std::frexp(a, &e2);                      // a = f * 2^e2, f in [0.5, 1)
    const int unbiased = e2 - 1;             // a in [2^unbiased, 2^(unbiased+1))
    const double mant = std::ldexp(a, -unbiased);        // in [1, 2)
    const auto m = static_cast<std::uint32_t>(
        std::ldexp(mant - 1.0, mb));                      // truncated mantissa
    const auto efield = static_cast<std::uint32_t>(unbiased + fmt.bias());
    return {(efield << mb) | m, std::ldexp(1.0, unbiased - mb)};
}

} // namespace

EncodeResult encode(double x, const FloatFormat& fmt, RoundingMode mode,
                    LfsrStream* rng, bool saturate) {
    if (std::isnan(x)) return {fmt.nan_code(), false, false};

    const std::uint32_t sign = std::signbit(x) ? fmt.sign_mask() : 0u;
    const double a = std::fabs(x);

    if (a > fmt.max_normal()) {
        const std::uint32_t magnitude =
            saturate ? fmt.max_normal_code() : fmt.inf_code();
        return {sign | magnitude, true, false};
    }
    if (a == 0.0) return {sign, false, false};

    auto [code, step] = floor_code(a, fmt);
    const double lo = decode(code, fmt);
    if (lo != a) {
        switch (mode) {
        case RoundingMode::TruncateTowardZero:
            break;
        case RoundingMode::NearestEven: {
            const double mid = lo + 0.5 * step; // exact: short dyadic operands
            if (a > mid || (a == mid && (code & 1u))) ++code;
            break;
        }
        case RoundingMode::Stochastic: {
            if (rng == nullptr) {
                throw std::invalid_argument(
                    "encode: Stochastic mode requires an rng stream");
            }
            const double r = rng->next_fraction() * step;
            if ((a - lo) + r >= step) ++code;
            break;
        }
        }
    }
    const bool underflowed = (code == 0);
    return {sign | code, false, underflowed};
}

double round_nearest_even(double x, const FloatFormat& fmt) {
    return decode(encode(x, fmt, RoundingMode::NearestEven).code, fmt);
}

double stochastic_round(double x, const FloatFormat& fmt, LfsrStream& rng) {
    return decode(encode(x, fmt, RoundingMode::Stochastic, &rng).code, fmt);
}

double ulp(double x, const FloatFormat& fmt) {
    const double a = std::fabs(x);
    if (a < fmt.min_normal()) return fmt.min_subnormal();
    int e2 = 0;
    std::frexp(a, &e2);
    return std::ldexp(1.0, (e2 - 1) - fmt.mantissa_bits);
}

std::string format_range_value(double v) {
    if (v >= 1.0 && v < 1e6 && v == std::floor(v)) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    // Three significant digits with the tail truncated, not rounded
    // (2^-126 prints as 1.17e-38, 2^-16 as 1.52e-5).
    const int e10 = static_cast<int>(std::floor(std::log10(v)));
    double mant = v / std::pow(10.0, e10);
    mant = std::floor(mant * 100.0) / 100.0;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2fe%+d", mant, e10);
    std::string s(buf);
    const auto e = s.find('e');
    if (e != std::string::npos && e + 2 < s.size()) {
        auto digits = e + 2; // first exponent digit after the sign
        while (digits + 1 < s.size() && s[digits] == '0') {
            s.erase(digits, 1);
        }
    }
    return s;
}

std::string range_report() {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-18s %-22s %-12s %-12s %-13s\n",
                  "Data Type", "Bit Format (s, e, m)", "Max Normal",
                  "Min Normal", "Min Subnormal");
    out += line;
    const struct {
        const char* label;
        const FloatFormat* fmt;
    } rows[] = {
        {"IEEE-754 float", &kFp32},
        {"IEEE-754 half-float", &kFp16},
        {"FP8", &kFp8},
    };
    for (const auto& row : rows) {
        const DynamicRange r = row.fmt->dynamic_range();
        char bits[24];
        std::snprintf(bits, sizeof(bits), "1, %d, %d", row.fmt->exponent_bits,
                      row.fmt->mantissa_bits);
        std::snprintf(line, sizeof(line), "%-18s %-22s %-12s %-12s %-13s\n",
                      row.label, bits, format_range_value(r.max_normal).c_str(),
                      format_range_value(r.min_normal).c_str(),
                      format_range_value(r.min_subnormal).c_str());
        out += line;
    }
    out += "note: half-float max normal is 65504 = (2 - 2^-10) * 2^15; 65535 is "
           "the unsigned 16-bit integer ceiling, not a representable value.\n";
    return out;
}

} // namespace fp8emu
