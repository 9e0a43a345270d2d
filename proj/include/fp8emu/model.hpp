#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fp8emu/tensor.hpp"

namespace fp8emu::nn {

enum class LayerKind { Dense, Conv2d, ReLU, Tanh, Sigmoid, Dropout, SoftmaxCrossEntropy };

/// FP16-boundary layers quantize weights/activations/errors to FP16; all
/// other parametric layers use FP8. Non-parametric layers ignore the field.
enum class PrecisionClass { Fp8, Fp16Boundary };

const char* to_string(LayerKind kind);

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;

    // Dense
    std::int64_t in_features = 0;
    std::int64_t out_features = 0;

    // Conv2d
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
    std::int64_t kernel = 0;
    std::int64_t stride = 1;
    std::int64_t pad = 0;

    // Dropout
    double drop_p = 0.0;

    PrecisionClass precision = PrecisionClass::Fp8;

    bool has_params() const {
        return kind == LayerKind::Dense || kind == LayerKind::Conv2d;
    }
};

struct Regularizer {
    enum class Kind { None, L2, Dropout };
    Kind kind = Kind::None;
    double lambda = 0.0; // L2 weight-decay coefficient
    double p = 0.0;      // dropout probability
};

struct ModelSpec {
    std::string name;
    std::vector<std::int64_t> input_shape; // per sample, e.g. {2} or {1, 8, 8}
    std::vector<LayerSpec> layers;         // last layer is the loss
    Regularizer regularizer;
    std::int64_t num_classes = 2;
};

/// Mark the first Dense/Conv2d and the last Dense as FP16-boundary and every
/// other parametric layer as FP8.
void assign_precision(ModelSpec& spec);

/// Reject malformed specs: the loss layer must be unique and last, parameter
/// dims must chain from input_shape, and the precision placement must match
/// what assign_precision produces.
void validate(const ModelSpec& spec);

/// Model presets: "rings-mlp" (3 dense layers, tanh), "deep-mlp" (6 dense
/// layers, tanh) and "convnet" (two 3x3 convs plus a classifier head). The
/// regularizer's Dropout kind inserts dropout layers after each hidden
/// activation.
ModelSpec make_model(const std::string& preset, const Regularizer& reg);

const std::vector<std::string>& model_preset_names();

struct Dataset {
    Tensor x;                // [N, ...] row-major, one sample per leading index
    std::vector<int> labels; // size N, values in [0, num_classes)

    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
    std::vector<std::int64_t> sample_shape() const;
};

/// Two concentric rings (class 0 inner, class 1 outer) with radial noise.
Dataset make_rings(std::int64_t n, double noise, std::uint64_t seed);
/// Two Gaussian blobs centered at (-1,-1) and (1,1).
Dataset make_blobs(std::int64_t n, double noise, std::uint64_t seed);
/// 8x8 grayscale images: class 0 one horizontal bar, class 1 one vertical
/// bar, plus additive noise.
Dataset make_bars(std::int64_t n, double noise, std::uint64_t seed);

/// IDX image/label files (the common u8 image-set container). Images load as
/// [N, 1, H, W] scaled to [0, 1]; save quantizes to u8 by round-to-nearest.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path);

/// Text feature format: one sample per line, "label,f0,f1,...", no header.
Dataset load_csv_dataset(const std::string& path);
void save_csv_dataset(const Dataset& ds, const std::string& path);

} // namespace fp8emu::nn
