#pragma once

#include <cstdint>
#include <vector>

#include "fp8emu/float_format.hpp"

namespace fp8emu {

/// Dense row-major FP32 tensor.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape_);
    Tensor(std::vector<std::int64_t> shape_, std::vector<float> data_);

    std::int64_t numel() const;
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }

    float& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    float at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);

struct QuantConfig {
    RoundingMode mode = RoundingMode::NearestEven;
    std::uint64_t seed = 1; // must be nonzero
    bool saturate_on_overflow = false;
};

/// FP8/FP16-coded counterpart of a Tensor. Codes are stored in the low bits
/// of each element; overflow/underflow counters tally the encode flags seen
/// while quantizing.
struct QuantizedTensor {
    std::vector<std::int64_t> shape;
    std::vector<std::uint16_t> codes;
    FloatFormat fmt = kFp8;
    RoundingMode mode_used = RoundingMode::NearestEven;
    std::int64_t overflow_count = 0;
    std::int64_t underflow_count = 0;

    std::int64_t numel() const;

    std::uint16_t code_at(std::int64_t i) const {
        return codes[static_cast<std::size_t>(i)];
    }

    /// Metadata-only reshape; the element count must be preserved.
    QuantizedTensor reshaped(std::vector<std::int64_t> new_shape) const;
};

/// Element-wise down-conversion of an FP32 tensor ("Q" node). Stochastic mode
/// derives one rounding stream per kQuantBlock-element block from cfg.seed,
/// so any parallel schedule that respects block boundaries reproduces the
/// serial result bit for bit.
QuantizedTensor quantize(const Tensor& t, const FloatFormat& fmt,
                         const QuantConfig& cfg);

/// Element-wise decode back to FP32.
Tensor dequantize(const QuantizedTensor& q);

inline constexpr std::int64_t kQuantBlock = 4096;

/// 256-entry FP32 decode table for an 8-bit format (and the generic decode
/// used by the kernels for wider codes).
const float* fp8_decode_table(const FloatFormat& fmt);
float decode_to_float(std::uint16_t code, const FloatFormat& fmt);

/// Transposed copy of a rank-2 quantized tensor (pure code permutation).
QuantizedTensor transpose(const QuantizedTensor& q);

} // namespace fp8emu
