#pragma once

#include "fp8emu/tensor.hpp"

namespace fp8emu {

/// Matrix multiply over quantized operands: a is [M, K], b is [K, N], both in
/// the same (8- or 16-bit) format. Every product and the running sum are held
/// in FP32; the accumulation order is k ascending, so results are bitwise
/// reproducible. The FP32 output is returned unquantized.
Tensor gemm_fp8(const QuantizedTensor& a, const QuantizedTensor& b);

struct ConvGeometry {
    std::int64_t stride = 1;
    std::int64_t pad = 0;
};

/// Direct 2-D convolution: x is [N, C, H, W], w is [F, C, kH, kW]. FP32
/// multiply-accumulate in fixed order (c, kh, kw ascending; padded taps
/// contribute explicit zero products so the im2col path is bit-identical).
/// Returns the unquantized FP32 output [N, F, OH, OW].
Tensor conv2d_fp8(const QuantizedTensor& x, const QuantizedTensor& w,
                  const ConvGeometry& geom);

/// Patch matrix of x for the given kernel/stride/pad: rows index (c, kh, kw),
/// columns index (n, oh, ow); out-of-bounds taps hold the zero code. Pure
/// code movement, no arithmetic.
QuantizedTensor im2col(const QuantizedTensor& x, std::int64_t kh, std::int64_t kw,
                       const ConvGeometry& geom);

/// conv2d_fp8 reformulated as im2col + gemm_fp8; bitwise equal to the direct
/// path by construction. Kept public as a cross-check.
Tensor conv2d_fp8_im2col(const QuantizedTensor& x, const QuantizedTensor& w,
                         const ConvGeometry& geom);

std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, std::int64_t stride,
                          std::int64_t pad);

/// Convolution data gradient: e is the output error [N, F, OH, OW], w the
/// kernel [F, C, kH, kW]; returns dx [N, C, H, W] in FP32 with (f, kh, kw)
/// ascending accumulation.
Tensor conv2d_backward_data_fp8(const QuantizedTensor& e, const QuantizedTensor& w,
                                const ConvGeometry& geom, std::int64_t h,
                                std::int64_t w_dim);

/// Convolution weight gradient: x [N, C, H, W] against e [N, F, OH, OW];
/// returns dw [F, C, kH, kW] in FP32 with (n, oh, ow) ascending accumulation.
Tensor conv2d_backward_weights_fp8(const QuantizedTensor& x, const QuantizedTensor& e,
                                   std::int64_t kh, std::int64_t kw,
                                   const ConvGeometry& geom);

} // namespace fp8emu
