#include "fp8emu/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace fp8emu {

namespace {

constexpr char kMagic[4] = {'F', 'P', '8', 'T'};
constexpr std::uint8_t kVersion = 1;

void put_u64_be(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (56 - 8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64_be(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | b[i];
    return v;
}

std::uint8_t mode_tag(RoundingMode mode) {
    switch (mode) {
    case RoundingMode::NearestEven: return 1;
    case RoundingMode::Stochastic: return 2;
    case RoundingMode::TruncateTowardZero: return 3;
    }
    return 0;
}

RoundingMode mode_from_tag(std::uint8_t tag, const std::string& path) {
    switch (tag) {
    case 0:
    case 1: return RoundingMode::NearestEven;
    case 2: return RoundingMode::Stochastic;
    case 3: return RoundingMode::TruncateTowardZero;
    default: throw IoError(path + ": unknown rounding mode tag");
    }
}

void write_header(std::ostream& os, TensorDtype dtype,
                  const std::vector<std::int64_t>& shape, std::uint8_t mode) {
    os.write(kMagic, 4);
    const std::uint8_t head[4] = {kVersion, static_cast<std::uint8_t>(dtype),
                                  static_cast<std::uint8_t>(shape.size()), mode};
    os.write(reinterpret_cast<const char*>(head), 4);
    const char zeros[8] = {};
    os.write(zeros, 8);
    for (std::int64_t d : shape) put_u64_be(os, static_cast<std::uint64_t>(d));
}

struct Header {
    TensorDtype dtype;
    std::uint8_t mode;
    std::vector<std::int64_t> shape;
};

Header read_header(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError(path + ": not an FP8T tensor file (bad magic)");
    }
    std::uint8_t head[4];
    is.read(reinterpret_cast<char*>(head), 4);
    char reserved[8];
    is.read(reserved, 8);
    if (!is) throw IoError(path + ": truncated FP8T header");
    if (head[0] != kVersion) {
        throw IoError(path + ": unsupported FP8T version " + std::to_string(head[0]));
    }
    if (head[1] > 2) {
        throw IoError(path + ": unknown FP8T dtype tag " + std::to_string(head[1]));
    }
    Header h;
    h.dtype = static_cast<TensorDtype>(head[1]);
    h.mode = head[3];
    h.shape.resize(head[2]);
    for (auto& d : h.shape) {
        d = static_cast<std::int64_t>(get_u64_be(is));
    }
    if (!is) throw IoError(path + ": truncated FP8T dimension list");
    return h;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(path + ": cannot open for writing");
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(path + ": cannot open for reading");
    return is;
}

} // namespace

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os = open_out(path);
    write_header(os, TensorDtype::Fp32, t.shape, 0);
    for (float v : t.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        unsigned char b[4] = {static_cast<unsigned char>(bits >> 24),
                              static_cast<unsigned char>(bits >> 16),
                              static_cast<unsigned char>(bits >> 8),
                              static_cast<unsigned char>(bits)};
        os.write(reinterpret_cast<const char*>(b), 4);
    }
    if (!os) throw IoError(path + ": write failed");
}

void save_tensor(const std::string& path, const QuantizedTensor& q) {
    const bool narrow = q.fmt.width() == 8;
    std::ofstream os = open_out(path);
    write_header(os, narrow ? TensorDtype::Fp8Codes : TensorDtype::Fp16Codes,
                 q.shape, mode_tag(q.mode_used));
    for (std::uint16_t c : q.codes) {
        if (narrow) {
            const auto b = static_cast<unsigned char>(c & 0xFFu);
            os.write(reinterpret_cast<const char*>(&b), 1);
        } else {
            unsigned char b[2] = {static_cast<unsigned char>(c >> 8),
                                  static_cast<unsigned char>(c & 0xFFu)};
            os.write(reinterpret_cast<const char*>(b), 2);
        }
    }
    if (!os) throw IoError(path + ": write failed");
}

Tensor load_tensor_fp32(const std::string& path) {
    std::ifstream is = open_in(path);
    const Header h = read_header(is, path);
    if (h.dtype != TensorDtype::Fp32) {
        throw IoError(path + ": expected FP32 payload (dtype 0)");
    }
    Tensor t;
    t.shape = h.shape;
    const std::int64_t n = shape_numel(h.shape);
    t.data.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        const std::uint32_t bits = (std::uint32_t(b[0]) << 24) |
                                   (std::uint32_t(b[1]) << 16) |
                                   (std::uint32_t(b[2]) << 8) | b[3];
        std::memcpy(&t.data[static_cast<std::size_t>(i)], &bits, 4);
    }
    if (!is) throw IoError(path + ": truncated FP32 payload");
    return t;
}

QuantizedTensor load_tensor_codes(const std::string& path) {
    std::ifstream is = open_in(path);
    const Header h = read_header(is, path);
    if (h.dtype == TensorDtype::Fp32) {
        throw IoError(path + ": holds FP32 data, not codes");
    }
    QuantizedTensor q;
    q.shape = h.shape;
    q.fmt = h.dtype == TensorDtype::Fp8Codes ? kFp8 : kFp16;
    q.mode_used = mode_from_tag(h.mode, path);
    const std::int64_t n = shape_numel(h.shape);
    q.codes.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        if (h.dtype == TensorDtype::Fp8Codes) {
            unsigned char b;
            is.read(reinterpret_cast<char*>(&b), 1);
            q.codes[static_cast<std::size_t>(i)] = b;
        } else {
            unsigned char b[2];
            is.read(reinterpret_cast<char*>(b), 2);
            q.codes[static_cast<std::size_t>(i)] =
                static_cast<std::uint16_t>((b[0] << 8) | b[1]);
        }
    }
    if (!is) throw IoError(path + ": truncated code payload");
    return q;
}

TensorDtype peek_tensor_dtype(const std::string& path) {
    std::ifstream is = open_in(path);
    return read_header(is, path).dtype;
}

Tensor load_tensor_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError(path + ": cannot open for reading");
    std::string line;
    if (!std::getline(is, line)) throw IoError(path + ": empty tensor file");

    Tensor t;
    std::stringstream header(line);
    std::string field;
    while (std::getline(header, field, ',')) {
        try {
            t.shape.push_back(std::stoll(field));
        } catch (const std::exception&) {
            throw IoError(path + ": bad shape entry '" + field + "'");
        }
    }
    const std::int64_t n = shape_numel(t.shape);
    t.data.reserve(static_cast<std::size_t>(n));
    while (std::getline(is, line)) {
        std::stringstream row(line);
        while (std::getline(row, field, ',')) {
            if (field.empty()) continue;
            try {
                t.data.push_back(std::stof(field));
            } catch (const std::exception&) {
                throw IoError(path + ": bad value '" + field + "'");
            }
        }
    }
    if (static_cast<std::int64_t>(t.data.size()) != n) {
        throw IoError(path + ": expected " + std::to_string(n) + " values, got " +
                      std::to_string(t.data.size()));
    }
    return t;
}

void save_tensor_csv(const std::string& path, const Tensor& t) {
    std::ofstream os(path);
    if (!os) throw IoError(path + ": cannot open for writing");
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        os << (i ? "," : "") << t.shape[i];
    }
    os << "\n";
    char buf[48];
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(t.data[i]));
        os << buf << ((i + 1) % 16 == 0 || i + 1 == t.data.size() ? "\n" : ",");
    }
    if (!os) throw IoError(path + ": write failed");
}

Tensor load_fp32_any(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) {
        return load_tensor_csv(path);
    }
    return load_tensor_fp32(path);
}

} // namespace fp8emu
