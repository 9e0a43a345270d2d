#include "fp8emu/tensor.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace fp8emu {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        if (d < 0) throw std::invalid_argument("negative dimension");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<std::int64_t> shape_) : shape(std::move(shape_)) {
    data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0f);
}

Tensor::Tensor(std::vector<std::int64_t> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
        throw std::invalid_argument("tensor data length does not match shape");
    }
}

std::int64_t Tensor::numel() const {
    return static_cast<std::int64_t>(data.size());
}

std::int64_t QuantizedTensor::numel() const {
    return static_cast<std::int64_t>(codes.size());
}

QuantizedTensor QuantizedTensor::reshaped(std::vector<std::int64_t> new_shape) const {
    if (shape_numel(new_shape) != numel()) {
        throw std::invalid_argument("reshape changes element count");
    }
    QuantizedTensor out = *this;
    out.shape = std::move(new_shape);
    return out;
}

QuantizedTensor quantize(const Tensor& t, const FloatFormat& fmt,
                         const QuantConfig& cfg) {
    if (cfg.seed == 0) throw std::invalid_argument("QuantConfig.seed must be nonzero");

    QuantizedTensor q;
    q.shape = t.shape;
    q.fmt = fmt;
    q.mode_used = cfg.mode;
    q.codes.resize(t.data.size());

    const std::int64_t n = t.numel();
    if (cfg.mode == RoundingMode::Stochastic) {
        for (std::int64_t block = 0; block * kQuantBlock < n; ++block) {
            LfsrStream rng = LfsrStream::split(cfg.seed,
                                               static_cast<std::uint64_t>(block));
            const std::int64_t end = std::min(n, (block + 1) * kQuantBlock);
            for (std::int64_t i = block * kQuantBlock; i < end; ++i) {
                const EncodeResult r = encode(t.at(i), fmt, cfg.mode, &rng,
                                              cfg.saturate_on_overflow);
                q.codes[static_cast<std::size_t>(i)] =
                    static_cast<std::uint16_t>(r.code);
                q.overflow_count += r.overflowed;
                q.underflow_count += r.underflowed_to_zero;
            }
        }
    } else {
        for (std::int64_t i = 0; i < n; ++i) {
            const EncodeResult r =
                encode(t.at(i), fmt, cfg.mode, nullptr, cfg.saturate_on_overflow);
            q.codes[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(r.code);
            q.overflow_count += r.overflowed;
            q.underflow_count += r.underflowed_to_zero;
        }
    }
    return q;
}

Tensor dequantize(const QuantizedTensor& q) {
    Tensor t;
    t.shape = q.shape;
    t.data.resize(q.codes.size());
    if (q.fmt.width() == 8) {
        const float* lut = fp8_decode_table(q.fmt);
        for (std::size_t i = 0; i < q.codes.size(); ++i) {
            t.data[i] = lut[q.codes[i] & 0xFFu];
        }
    } else {
        for (std::size_t i = 0; i < q.codes.size(); ++i) {
            t.data[i] = decode_to_float(q.codes[i], q.fmt);
        }
    }
    return t;
}

namespace {

std::array<float, 65536> build_fp16_table() {
    std::array<float, 65536> lut{};
    for (std::uint32_t c = 0; c < 65536; ++c) {
        lut[c] = static_cast<float>(decode(c, kFp16));
    }
    return lut;
}

} // namespace

const float* fp8_decode_table(const FloatFormat& fmt) {
    if (fmt.width() != 8) {
        throw std::invalid_argument("fp8_decode_table: format is not 8 bits wide");
    }
    static const std::array<float, 256> lut = [] {
        std::array<float, 256> t{};
        for (std::uint32_t c = 0; c < 256; ++c) {
            t[c] = static_cast<float>(decode(c, kFp8));
        }
        return t;
    }();
    return lut.data();
}

float decode_to_float(std::uint16_t code, const FloatFormat& fmt) {
    if (fmt.width() == 8) return fp8_decode_table(fmt)[code & 0xFFu];
    if (fmt == kFp16) {
        static const std::array<float, 65536> lut = build_fp16_table();
        return lut[code];
    }
    return static_cast<float>(decode(code, fmt));
}

QuantizedTensor transpose(const QuantizedTensor& q) {
    if (q.shape.size() != 2) {
        throw std::invalid_argument("transpose expects a rank-2 tensor");
    }
    const std::int64_t rows = q.shape[0];
    const std::int64_t cols = q.shape[1];
    QuantizedTensor out = q;
    out.shape = {cols, rows};
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) {
            out.codes[static_cast<std::size_t>(c * rows + r)] =
                q.codes[static_cast<std::size_t>(r * cols + c)];
        }
    }
    return out;
}

} // namespace fp8emu
