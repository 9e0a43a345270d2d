#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "fp8emu/tensor.hpp"

namespace fp8emu {

/// Unreadable, unwritable, or garbled tensor/config files.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Binary tensor container ("FP8T").
///
/// Byte-exact layout, all multi-byte fields big-endian:
///   offset 0   4 bytes   magic "FP8T"
///   offset 4   1 byte    version (1)
///   offset 5   1 byte    dtype: 0 = FP32 (4-byte IEEE single per element),
///                               1 = FP8 codes (1 byte per element),
///                               2 = FP16 codes (2 bytes per element)
///   offset 6   1 byte    rank
///   offset 7   1 byte    rounding mode used to produce the codes:
///                               0 = none, 1 = nearest-even, 2 = stochastic,
///                               3 = truncate
///   offset 8   8 bytes   reserved, zero
///   offset 16  rank * 8  dimensions, uint64 each
///   then       payload   row-major element data
enum class TensorDtype : std::uint8_t { Fp32 = 0, Fp8Codes = 1, Fp16Codes = 2 };

void save_tensor(const std::string& path, const Tensor& t);
void save_tensor(const std::string& path, const QuantizedTensor& q);
Tensor load_tensor_fp32(const std::string& path);
QuantizedTensor load_tensor_codes(const std::string& path);
TensorDtype peek_tensor_dtype(const std::string& path);

/// Text tensor format: first line is the comma-separated shape, remaining
/// lines are the row-major values (comma-separated, any line breaking).
Tensor load_tensor_csv(const std::string& path);
void save_tensor_csv(const std::string& path, const Tensor& t);

/// Reads either container by extension: ".csv" as text, anything else as
/// FP8T with dtype 0.
Tensor load_fp32_any(const std::string& path);

} // namespace fp8emu
