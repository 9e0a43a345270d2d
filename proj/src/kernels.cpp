#include "fp8emu/kernels.hpp"

#include <stdexcept>

namespace fp8emu {

namespace {

void check_same_format(const QuantizedTensor& a, const QuantizedTensor& b) {
    if (!(a.fmt == b.fmt)) {
        throw std::invalid_argument("kernel operands must share one format");
    }
}

// Decode closure over either the 8-bit LUT or the generic path.
struct Decoder {
    explicit Decoder(const FloatFormat& fmt)
        : lut(fmt.width() == 8 ? fp8_decode_table(fmt) : nullptr), fmt(&fmt) {}
    float operator()(std::uint16_t code) const {
        return lut ? lut[code & 0xFFu] : decode_to_float(code, *fmt);
    }
    const float* lut;
    const FloatFormat* fmt;
};

} // namespace

std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, std::int64_t stride,
                          std::int64_t pad) {
    const std::int64_t span = in + 2 * pad - k;
    if (span < 0 || stride < 1) {
        throw std::invalid_argument("convolution geometry does not fit input");
    }
    return span / stride + 1;
}

Tensor gemm_fp8(const QuantizedTensor& a, const QuantizedTensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2) {
        throw std::invalid_argument("gemm_fp8 expects rank-2 operands");
    }
    if (a.shape[1] != b.shape[0]) {
        throw std::invalid_argument("gemm_fp8 inner dimensions disagree");
    }
    check_same_format(a, b);

    const std::int64_t m = a.shape[0];
    const std::int64_t k = a.shape[1];
    const std::int64_t n = b.shape[1];
    const Decoder dec(a.fmt);

    Tensor y({m, n});
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (std::int64_t p = 0; p < k; ++p) {
                acc += dec(a.code_at(i * k + p)) * dec(b.code_at(p * n + j));
            }
            y.at(i * n + j) = acc;
        }
    }
    return y;
}

QuantizedTensor im2col(const QuantizedTensor& x, std::int64_t kh, std::int64_t kw,
                       const ConvGeometry& geom) {
    if (x.shape.size() != 4) {
        throw std::invalid_argument("im2col expects [N, C, H, W]");
    }
    const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2],
                       w = x.shape[3];
    const std::int64_t oh = conv_out_dim(h, kh, geom.stride, geom.pad);
    const std::int64_t ow = conv_out_dim(w, kw, geom.stride, geom.pad);

    QuantizedTensor cols;
    cols.fmt = x.fmt;
    cols.mode_used = x.mode_used;
    cols.shape = {c * kh * kw, n * oh * ow};
    cols.codes.assign(static_cast<std::size_t>(cols.shape[0] * cols.shape[1]), 0);

    const std::int64_t ncols = cols.shape[1];
    for (std::int64_t ci = 0; ci < c; ++ci) {
        for (std::int64_t ki = 0; ki < kh; ++ki) {
            for (std::int64_t kj = 0; kj < kw; ++kj) {
                const std::int64_t row = (ci * kh + ki) * kw + kj;
                for (std::int64_t ni = 0; ni < n; ++ni) {
                    for (std::int64_t oi = 0; oi < oh; ++oi) {
                        const std::int64_t ii = oi * geom.stride - geom.pad + ki;
                        for (std::int64_t oj = 0; oj < ow; ++oj) {
                            const std::int64_t jj = oj * geom.stride - geom.pad + kj;
                            std::uint16_t code = 0;
                            if (ii >= 0 && ii < h && jj >= 0 && jj < w) {
                                code = x.code_at(((ni * c + ci) * h + ii) * w + jj);
                            }
                            const std::int64_t col = (ni * oh + oi) * ow + oj;
                            cols.codes[static_cast<std::size_t>(row * ncols + col)] =
                                code;
                        }
                    }
                }
            }
        }
    }
    return cols;
}

Tensor conv2d_fp8(const QuantizedTensor& x, const QuantizedTensor& w,
                  const ConvGeometry& geom) {
    if (x.shape.size() != 4 || w.shape.size() != 4) {
        throw std::invalid_argument("conv2d_fp8 expects [N,C,H,W] and [F,C,kH,kW]");
    }
    if (x.shape[1] != w.shape[1]) {
        throw std::invalid_argument("conv2d_fp8 channel counts disagree");
    }
    check_same_format(x, w);

    const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2],
                       iw = x.shape[3];
    const std::int64_t f = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const std::int64_t oh = conv_out_dim(h, kh, geom.stride, geom.pad);
    const std::int64_t ow = conv_out_dim(iw, kw, geom.stride, geom.pad);
    const Decoder dec(x.fmt);

    Tensor y({n, f, oh, ow});
    for (std::int64_t ni = 0; ni < n; ++ni) {
        for (std::int64_t fi = 0; fi < f; ++fi) {
            for (std::int64_t oi = 0; oi < oh; ++oi) {
                for (std::int64_t oj = 0; oj < ow; ++oj) {
                    float acc = 0.0f;
                    for (std::int64_t ci = 0; ci < c; ++ci) {
                        for (std::int64_t ki = 0; ki < kh; ++ki) {
                            const std::int64_t ii = oi * geom.stride - geom.pad + ki;
                            for (std::int64_t kj = 0; kj < kw; ++kj) {
                                const std::int64_t jj =
                                    oj * geom.stride - geom.pad + kj;
                                float xv = 0.0f;
                                if (ii >= 0 && ii < h && jj >= 0 && jj < iw) {
                                    xv = dec(x.code_at(
                                        ((ni * c + ci) * h + ii) * iw + jj));
                                }
                                acc += xv * dec(w.code_at(
                                           ((fi * c + ci) * kh + ki) * kw + kj));
                            }
                        }
                    }
                    y.at(((ni * f + fi) * oh + oi) * ow + oj) = acc;
                }
            }
        }
    }
    return y;
}

Tensor conv2d_backward_data_fp8(const QuantizedTensor& e, const QuantizedTensor& w,
                                const ConvGeometry& geom, std::int64_t h,
                                std::int64_t w_dim) {
    if (e.shape.size() != 4 || w.shape.size() != 4) {
        throw std::invalid_argument("conv backward expects rank-4 operands");
    }
    if (e.shape[1] != w.shape[0]) {
        throw std::invalid_argument("conv backward filter counts disagree");
    }
    check_same_format(e, w);

    const std::int64_t n = e.shape[0], f = e.shape[1], oh = e.shape[2],
                       ow = e.shape[3];
    const std::int64_t c = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    if (conv_out_dim(h, kh, geom.stride, geom.pad) != oh ||
        conv_out_dim(w_dim, kw, geom.stride, geom.pad) != ow) {
        throw std::invalid_argument("conv backward geometry disagrees with error");
    }
    const Decoder dec(e.fmt);

    Tensor dx({n, c, h, w_dim});
    for (std::int64_t ni = 0; ni < n; ++ni) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            for (std::int64_t i = 0; i < h; ++i) {
                for (std::int64_t j = 0; j < w_dim; ++j) {
                    float acc = 0.0f;
                    for (std::int64_t fi = 0; fi < f; ++fi) {
                        for (std::int64_t ki = 0; ki < kh; ++ki) {
                            for (std::int64_t kj = 0; kj < kw; ++kj) {
                                const std::int64_t oi_num = i + geom.pad - ki;
                                const std::int64_t oj_num = j + geom.pad - kj;
                                if (oi_num % geom.stride || oj_num % geom.stride) {
                                    continue;
                                }
                                const std::int64_t oi = oi_num / geom.stride;
                                const std::int64_t oj = oj_num / geom.stride;
                                if (oi < 0 || oi >= oh || oj < 0 || oj >= ow) {
                                    continue;
                                }
                                acc += dec(w.code_at(
                                           ((fi * c + ci) * kh + ki) * kw + kj)) *
                                       dec(e.code_at(
                                           ((ni * f + fi) * oh + oi) * ow + oj));
                            }
                        }
                    }
                    dx.at(((ni * c + ci) * h + i) * w_dim + j) = acc;
                }
            }
        }
    }
    return dx;
}

Tensor conv2d_backward_weights_fp8(const QuantizedTensor& x, const QuantizedTensor& e,
                                   std::int64_t kh, std::int64_t kw,
                                   const ConvGeometry& geom) {
    if (x.shape.size() != 4 || e.shape.size() != 4 || x.shape[0] != e.shape[0]) {
        throw std::invalid_argument("conv backward expects matching rank-4 operands");
    }
    check_same_format(x, e);

    const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2],
                       iw = x.shape[3];
    const std::int64_t f = e.shape[1], oh = e.shape[2], ow = e.shape[3];
    if (conv_out_dim(h, kh, geom.stride, geom.pad) != oh ||
        conv_out_dim(iw, kw, geom.stride, geom.pad) != ow) {
        throw std::invalid_argument("conv backward geometry disagrees with error");
    }
    const Decoder dec(x.fmt);

    Tensor dw({f, c, kh, kw});
    for (std::int64_t fi = 0; fi < f; ++fi) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            for (std::int64_t ki = 0; ki < kh; ++ki) {
                for (std::int64_t kj = 0; kj < kw; ++kj) {
                    float acc = 0.0f;
                    for (std::int64_t ni = 0; ni < n; ++ni) {
                        for (std::int64_t oi = 0; oi < oh; ++oi) {
                            for (std::int64_t oj = 0; oj < ow; ++oj) {
                                const std::int64_t ii =
                                    oi * geom.stride - geom.pad + ki;
                                const std::int64_t jj =
                                    oj * geom.stride - geom.pad + kj;
                                if (ii < 0 || ii >= h || jj < 0 || jj >= iw) {
                                    continue;
                                }
                                acc += dec(x.code_at(
                                           ((ni * c + ci) * h + ii) * iw + jj)) *
                                       dec(e.code_at(
                                           ((ni * f + fi) * oh + oi) * ow + oj));
                            }
                        }
                    }
                    dw.at(((fi * c + ci) * kh + ki) * kw + kj) = acc;
                }
            }
        }
    }
    return dw;
}

Tensor conv2d_fp8_im2col(const QuantizedTensor& x, const QuantizedTensor& w,
                         const ConvGeometry& geom) {
    const std::int64_t n = x.shape[0];
    const std::int64_t f = w.shape[0], c = w.shape[1], kh = w.shape[2],
                       kw = w.shape[3];
    const std::int64_t oh = conv_out_dim(x.shape[2], kh, geom.stride, geom.pad);
    const std::int64_t ow = conv_out_dim(x.shape[3], kw, geom.stride, geom.pad);

    const QuantizedTensor cols = im2col(x, kh, kw, geom);
    const QuantizedTensor wmat = w.reshaped({f, c * kh * kw});
    const Tensor flat = gemm_fp8(wmat, cols); // [F, N*OH*OW]

    Tensor y({n, f, oh, ow});
    const std::int64_t ncols = n * oh * ow;
    for (std::int64_t ni = 0; ni < n; ++ni) {
        for (std::int64_t fi = 0; fi < f; ++fi) {
            for (std::int64_t oi = 0; oi < oh; ++oi) {
                for (std::int64_t oj = 0; oj < ow; ++oj) {
                    const std::int64_t col = (ni * oh + oi) * ow + oj;
                    y.at(((ni * f + fi) * oh + oi) * ow + oj) =
                        flat.at(fi * ncols + col);
                }
            }
        }
    }
    return y;
}

} // namespace fp8emu
