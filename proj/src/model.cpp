#include "fp8emu/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fp8emu/kernels.hpp"
#include "fp8emu/rand.hpp"
#include "fp8emu/tensor_io.hpp"

namespace fp8emu::nn {

const char* to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Tanh: return "tanh";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::SoftmaxCrossEntropy: return "softmax_xent";
    }
    return "?";
}

void assign_precision(ModelSpec& spec) {
    std::int64_t first_param = -1, last_dense = -1;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].has_params()) {
            if (first_param < 0) first_param = static_cast<std::int64_t>(i);
            if (spec.layers[i].kind == LayerKind::Dense)
                last_dense = static_cast<std::int64_t>(i);
        }
    }
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        auto& l = spec.layers[i];
        if (!l.has_params()) continue;
        const auto idx = static_cast<std::int64_t>(i);
        l.precision = (idx == first_param || idx == last_dense)
                          ? PrecisionClass::Fp16Boundary
                          : PrecisionClass::Fp8;
    }
}

void validate(const ModelSpec& spec) {
    if (spec.layers.empty())
        throw std::invalid_argument("model has no layers");
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const bool is_loss = spec.layers[i].kind == LayerKind::SoftmaxCrossEntropy;
        const bool is_last = i + 1 == spec.layers.size();
        if (is_loss != is_last)
            throw std::invalid_argument("exactly one loss layer, at the end");
    }
    if (spec.input_shape.empty())
        throw std::invalid_argument("model input shape is empty");

    // Walk the shape chain with a unit batch.
    std::vector<std::int64_t> shape;
    shape.push_back(1);
    shape.insert(shape.end(), spec.input_shape.begin(), spec.input_shape.end());
    for (const LayerSpec& l : spec.layers) {
        switch (l.kind) {
        case LayerKind::Dense: {
            const std::int64_t k = shape_numel(shape);
            if (l.in_features <= 0 || l.out_features <= 0 || k != l.in_features)
                throw std::invalid_argument("dense dims do not chain");
            shape = {1, l.out_features};
            break;
        }
        case LayerKind::Conv2d: {
            if (shape.size() != 4 || shape[1] != l.in_channels || l.kernel < 1 ||
                l.out_channels < 1)
                throw std::invalid_argument("conv dims do not chain");
            const std::int64_t oh = conv_out_dim(shape[2], l.kernel, l.stride, l.pad);
            const std::int64_t ow = conv_out_dim(shape[3], l.kernel, l.stride, l.pad);
            shape = {1, l.out_channels, oh, ow};
            break;
        }
        case LayerKind::Dropout:
            if (!(l.drop_p >= 0.0 && l.drop_p < 1.0))
                throw std::invalid_argument("dropout probability outside [0, 1)");
            break;
        case LayerKind::SoftmaxCrossEntropy:
            if (shape_numel(shape) != spec.num_classes)
                throw std::invalid_argument("loss input width != num_classes");
            break;
        default:
            break;
        }
    }

    ModelSpec expected = spec;
    assign_precision(expected);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].has_params() &&
            spec.layers[i].precision != expected.layers[i].precision)
            throw std::invalid_argument("precision placement violates the "
                                        "first/last boundary rule");
    }
}

namespace {

LayerSpec dense(std::int64_t in, std::int64_t out) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.in_features = in;
    l.out_features = out;
    return l;
}

LayerSpec conv(std::int64_t cin, std::int64_t cout, std::int64_t k,
               std::int64_t stride, std::int64_t pad) {
    LayerSpec l;
    l.kind = LayerKind::Conv2d;
    l.in_channels = cin;
    l.out_channels = cout;
    l.kernel = k;
    l.stride = stride;
    l.pad = pad;
    return l;
}

LayerSpec act(LayerKind kind) {
    LayerSpec l;
    l.kind = kind;
    return l;
}

LayerSpec dropout(double p) {
    LayerSpec l;
    l.kind = LayerKind::Dropout;
    l.drop_p = p;
    return l;
}

} // namespace

ModelSpec make_model(const std::string& preset, const Regularizer& reg) {
    const bool drop = reg.kind == Regularizer::Kind::Dropout;
    ModelSpec spec;
    spec.name = preset;
    spec.regularizer = reg;
    spec.num_classes = 2;

    if (preset == "rings-mlp") {
        spec.input_shape = {2};
        spec.layers.push_back(dense(2, 32));
        spec.layers.push_back(act(LayerKind::Tanh));
        if (drop) spec.layers.push_back(dropout(reg.p));
        spec.layers.push_back(dense(32, 32));
        spec.layers.push_back(act(LayerKind::Tanh));
        if (drop) spec.layers.push_back(dropout(reg.p));
        spec.layers.push_back(dense(32, 2));
    } else if (preset == "deep-mlp") {
        spec.input_shape = {2};
        spec.layers.push_back(dense(2, 16));
        spec.layers.push_back(act(LayerKind::Tanh));
        // Eight fp8 hops: each one attenuates the backward error signal, so
        // an unscaled loss drops interior gradients below the fp8 subnormal
        // floor while the fp16 boundary layers stay healthy.
        for (int i = 0; i < 8; ++i) {
            spec.layers.push_back(dense(16, 16));
            spec.layers.push_back(act(LayerKind::Tanh));
            if (drop) spec.layers.push_back(dropout(reg.p));
        }
        spec.layers.push_back(dense(16, 2));
    } else if (preset == "convnet") {
        spec.input_shape = {1, 8, 8};
        spec.layers.push_back(conv(1, 4, 3, 1, 1));
        spec.layers.push_back(act(LayerKind::ReLU));
        spec.layers.push_back(conv(4, 4, 3, 2, 1));
        spec.layers.push_back(act(LayerKind::ReLU));
        if (drop) spec.layers.push_back(dropout(reg.p));
        spec.layers.push_back(dense(64, 2));
    } else {
        throw std::invalid_argument("unknown model preset: " + preset);
    }
    spec.layers.push_back(act(LayerKind::SoftmaxCrossEntropy));
    assign_precision(spec);
    validate(spec);
    return spec;
}

const std::vector<std::string>& model_preset_names() {
    static const std::vector<std::string> names = {"rings-mlp", "deep-mlp",
                                                   "convnet"};
    return names;
}

std::vector<std::int64_t> Dataset::sample_shape() const {
    return {x.shape.begin() + 1, x.shape.end()};
}

Dataset make_rings(std::int64_t n, double noise, std::uint64_t seed) {
    Rand rng{mix64(seed ^ 0x72696e6773ull)};
    Dataset ds;
    ds.x = Tensor({n, 2});
    ds.labels.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i & 1);
        const double base = label ? 1.0 : 0.5;
        const double angle = rng.uniform() * 2.0 * 3.14159265358979323846;
        const double radius = base + rng.normal() * noise;
        ds.x.at(i * 2 + 0) = static_cast<float>(radius * std::cos(angle));
        ds.x.at(i * 2 + 1) = static_cast<float>(radius * std::sin(angle));
        ds.labels[static_cast<std::size_t>(i)] = label;
    }
    return ds;
}

Dataset make_blobs(std::int64_t n, double noise, std::uint64_t seed) {
    Rand rng{mix64(seed ^ 0x626c6f6273ull)};
    Dataset ds;
    ds.x = Tensor({n, 2});
    ds.labels.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i & 1);
        const double cx = label ? 1.0 : -1.0;
        ds.x.at(i * 2 + 0) = static_cast<float>(cx + rng.normal() * noise);
        ds.x.at(i * 2 + 1) = static_cast<float>(cx + rng.normal() * noise);
        ds.labels[static_cast<std::size_t>(i)] = label;
    }
    return ds;
}

Dataset make_bars(std::int64_t n, double noise, std::uint64_t seed) {
    Rand rng{mix64(seed ^ 0x62617273ull)};
    const std::int64_t hw = 8;
    Dataset ds;
    ds.x = Tensor({n, 1, hw, hw});
    ds.labels.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i & 1);
        float* img = ds.x.data.data() + i * hw * hw;
        for (std::int64_t p = 0; p < hw * hw; ++p)
            img[p] = static_cast<float>(rng.normal() * noise);
        const auto line = static_cast<std::int64_t>(rng.uniform() * hw);
        for (std::int64_t p = 0; p < hw; ++p) {
            if (label == 0)
                img[line * hw + p] += 1.0f;
            else
                img[p * hw + line] += 1.0f;
        }
        ds.labels[static_cast<std::size_t>(i)] = label;
    }
    return ds;
}

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803u;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801u;

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw IoError(path + ": truncated IDX header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IoError(images_path + ": cannot open");
    if (read_u32_be(imgs, images_path) != kIdxImagesMagic)
        throw IoError(images_path + ": not an IDX u8 image file");
    const std::int64_t n = read_u32_be(imgs, images_path);
    const std::int64_t h = read_u32_be(imgs, images_path);
    const std::int64_t w = read_u32_be(imgs, images_path);

    Dataset ds;
    ds.x = Tensor({n, 1, h, w});
    std::vector<unsigned char> raw(static_cast<std::size_t>(n * h * w));
    if (!imgs.read(reinterpret_cast<char*>(raw.data()),
                   static_cast<std::streamsize>(raw.size())))
        throw IoError(images_path + ": truncated pixel data");
    for (std::size_t i = 0; i < raw.size(); ++i)
        ds.x.data[i] = static_cast<float>(raw[i]) / 255.0f;

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw IoError(labels_path + ": cannot open");
    if (read_u32_be(labs, labels_path) != kIdxLabelsMagic)
        throw IoError(labels_path + ": not an IDX u8 label file");
    if (static_cast<std::int64_t>(read_u32_be(labs, labels_path)) != n)
        throw IoError(labels_path + ": label count differs from image count");
    std::vector<unsigned char> lraw(static_cast<std::size_t>(n));
    if (!labs.read(reinterpret_cast<char*>(lraw.data()),
                   static_cast<std::streamsize>(lraw.size())))
        throw IoError(labels_path + ": truncated label data");
    ds.labels.assign(lraw.begin(), lraw.end());
    return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path) {
    if (ds.x.shape.size() != 4 || ds.x.shape[1] != 1)
        throw IoError("IDX export expects [N, 1, H, W] images");
    std::ofstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IoError(images_path + ": cannot open for writing");
    write_u32_be(imgs, kIdxImagesMagic);
    write_u32_be(imgs, static_cast<std::uint32_t>(ds.x.shape[0]));
    write_u32_be(imgs, static_cast<std::uint32_t>(ds.x.shape[2]));
    write_u32_be(imgs, static_cast<std::uint32_t>(ds.x.shape[3]));
    for (const float v : ds.x.data) {
        const float clamped = std::min(1.0f, std::max(0.0f, v));
        imgs.put(static_cast<char>(
            static_cast<unsigned char>(std::lround(clamped * 255.0f))));
    }
    if (!imgs) throw IoError(images_path + ": write failed");

    std::ofstream labs(labels_path, std::ios::binary);
    if (!labs) throw IoError(labels_path + ": cannot open for writing");
    write_u32_be(labs, kIdxLabelsMagic);
    write_u32_be(labs, static_cast<std::uint32_t>(ds.labels.size()));
    for (const int l : ds.labels)
        labs.put(static_cast<char>(static_cast<unsigned char>(l)));
    if (!labs) throw IoError(labels_path + ": write failed");
}

Dataset load_csv_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path + ": cannot open");
    Dataset ds;
    std::vector<float> values;
    std::int64_t dim = -1;
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<float> row;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stof(cell));
            } catch (const std::exception&) {
                throw IoError(path + ":" + std::to_string(lineno) +
                              ": not a number: " + cell);
            }
        }
        if (row.size() < 2)
            throw IoError(path + ":" + std::to_string(lineno) +
                          ": expected label plus at least one feature");
        const auto row_dim = static_cast<std::int64_t>(row.size()) - 1;
        if (dim < 0) dim = row_dim;
        if (row_dim != dim)
            throw IoError(path + ":" + std::to_string(lineno) +
                          ": inconsistent feature count");
        const int label = static_cast<int>(row[0]);
        if (static_cast<float>(label) != row[0] || label < 0)
            throw IoError(path + ":" + std::to_string(lineno) +
                          ": label must be a non-negative integer");
        ds.labels.push_back(label);
        values.insert(values.end(), row.begin() + 1, row.end());
    }
    if (ds.labels.empty()) throw IoError(path + ": empty dataset");
    ds.x = Tensor({static_cast<std::int64_t>(ds.labels.size()), dim},
                  std::move(values));
    return ds;
}

void save_csv_dataset(const Dataset& ds, const std::string& path) {
    if (ds.x.shape.size() != 2)
        throw IoError("CSV export expects [N, D] features");
    std::ofstream out(path);
    if (!out) throw IoError(path + ": cannot open for writing");
    char buf[48];
    const std::int64_t d = ds.x.shape[1];
    for (std::int64_t i = 0; i < ds.size(); ++i) {
        out << ds.labels[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < d; ++j) {
            std::snprintf(buf, sizeof(buf), ",%.9g",
                          static_cast<double>(ds.x.at(i * d + j)));
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError(path + ": write failed");
}

} // namespace fp8emu::nn
