#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fp8emu/loss_scaling.hpp"
#include "fp8emu/model.hpp"
#include "fp8emu/ref_net.hpp"

namespace fp8emu::nn {

struct QuantOptions {
    bool enabled = true;
    RoundingMode mode = RoundingMode::NearestEven;
    std::uint64_t seed = 0x51; // root of all rounding streams; must be nonzero
    bool saturate = false;
};

struct TrainOptions {
    std::int64_t epochs = 20;
    std::int64_t batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 1; // weight init, shuffling, dropout masks
    QuantOptions quant;
    LossScaler::Options scaler;
    std::int64_t divergence_limit = 50; // consecutive non-finite losses
};

struct StepReport {
    std::int64_t iteration = 0;
    float loss = 0.0f;    // data loss plus the L2 term, unscaled
    float l2_loss = 0.0f; // lambda * sum of squared weights
    double grad_underflow_fraction = 0.0;
    std::int64_t grad_overflow_count = 0;
    ScaleEvent scale_event;
};

/// CSV columns: iteration, loss, l2_loss, scale, underflow_fraction,
/// overflow_count. The scale column is the value after the step's scaler
/// action (scale_event.scale_after).
std::string step_reports_csv(const std::vector<StepReport>& steps);

struct EvalRow {
    std::int64_t epoch = 0;
    double train_loss = 0.0, train_accuracy = 0.0;
    double val_loss = 0.0, val_accuracy = 0.0;
};

std::string eval_rows_csv(const std::vector<EvalRow>& rows);

/// One parameter tensor. `value` is the FP32 working view; in mixed-precision
/// mode it is always the exact decode of `master` (the persistent FP16 copy).
struct ParamTensor {
    std::vector<std::int64_t> shape;
    std::vector<float> value;
    std::vector<std::uint16_t> master;
    std::vector<float> momentum;
};

struct LayerParams {
    ParamTensor w, b;
};

/// Deterministic weight init: normal with std 1/sqrt(fan_in), zero biases.
std::vector<LayerParams> init_params(const ModelSpec& spec, std::uint64_t seed);

/// Mixed-precision network. With quantization enabled, every Dense/Conv2d
/// consumes quantized weights and activations in its precision class (FP8, or
/// FP16 at the first/last boundary layers), accumulates in FP32, and requantizes
/// its output; tanh/sigmoid outputs are held in FP16; softmax/cross-entropy and
/// all optimizer arithmetic stay in FP32. With quantization disabled the same
/// graph runs as plain FP32 (and master weights are plain FP32 storage).
class Network {
public:
    Network(const ModelSpec& spec, const TrainOptions& opts);

    const ModelSpec& spec() const { return spec_; }
    const TrainOptions& options() const { return opts_; }
    std::vector<LayerParams>& params() { return params_; }
    const std::vector<LayerParams>& params() const { return params_; }

    /// Runs the batch and returns the mean data loss (cross-entropy only; the
    /// L2 term is reported separately). Training mode draws dropout masks and
    /// uses the configured rounding mode; eval mode disables dropout and
    /// rounds to nearest even.
    float forward(const Tensor& x, const std::vector<int>& labels, bool training);

    /// Softmax probabilities of the last forward call, row-major [B, C].
    const std::vector<float>& probs() const { return probs_; }

    struct BackwardStats {
        double underflow_fraction = 0.0; // weight-grad elements zeroed by the Q node
        std::int64_t overflow_count = 0; // overflow flags across all backward Q nodes
        bool grads_finite = true;        // finite FP32 views and no overflow flags
    };

    /// Backpropagates from the scaled loss (upstream gradient = loss_scale).
    /// Error tensors and weight gradients pass through Q nodes in each layer's
    /// precision class; results are stashed for apply_update.
    BackwardStats backward(double loss_scale);

    /// Optimizer step on the stashed gradients: dequantize, divide by
    /// scale_used in FP32, add the 2*lambda*w L2 term (weights only), momentum
    /// v = mu*v + g, then w32 = value - lr*v re-encoded to FP16 master storage.
    /// Callers must skip this entirely when backward reported non-finite grads.
    void apply_update(double scale_used);

    /// lambda * sum w^2 over weight matrices/kernels (biases excluded);
    /// zero when the model's regularizer is not L2.
    float l2_loss() const;

private:
    struct LayerCache {
        QuantizedTensor qin, qw;
        Tensor out;
        std::vector<std::int64_t> out_shape;
    };
    struct LayerGrads {
        QuantizedTensor qdw;
        std::vector<float> db;
        bool present = false;
    };

    QuantizedTensor qnode(const Tensor& t, const FloatFormat& fmt, bool training);
    ParamsT<float> float_params() const;
    DropoutMasks draw_masks(std::int64_t batch);

    ModelSpec spec_;
    TrainOptions opts_;
    std::vector<LayerParams> params_;
    std::uint64_t qnode_counter_ = 0;
    std::int64_t step_counter_ = 0; // dropout stream index

    // forward/backward scratch
    Tensor batch_;
    std::vector<int> labels_;
    std::vector<float> probs_;
    std::vector<LayerCache> caches_;
    std::vector<LayerGrads> grads_;
    RefCache<float> ref_cache_;
    DropoutMasks masks_;
    ParamsT<float> ref_grads_;
};

struct TrainResult {
    std::vector<StepReport> steps;
    std::vector<ScaleEvent> events; // scaler actions only (action != none)
    std::vector<EvalRow> evals;
    bool diverged = false;
    std::int64_t total_iterations = 0;
};

/// Mean loss and accuracy over a dataset, forward-only in eval mode.
std::pair<double, double> evaluate(Network& net, const Dataset& ds,
                                   std::int64_t batch_size);

/// Epoch/batch loop: shuffles per epoch, scales the loss, updates weights on
/// finite gradients, advances the scaler once per step, and evaluates train
/// and validation sets after each epoch. Aborts once divergence_limit
/// consecutive steps see a non-finite loss.
TrainResult train(Network& net, const Dataset& train_set, const Dataset& val_set,
                  LossScaler& scaler, const TrainOptions& opts);

/// Central finite differences against the analytic backward pass, run in
/// double precision with quantization and dropout disabled. Returns the max
/// over parameters of |analytic - fd| / max(|analytic|, |fd|, 1e-3); the
/// floor keeps near-zero gradients from amplifying finite-difference noise.
/// The step must stay well below the smallest |pre-activation| feeding a
/// ReLU, or the perturbation flips the kink and the difference quotient no
/// longer estimates the derivative.
double gradient_check(const ModelSpec& spec, const Dataset& batch,
                      std::uint64_t seed, double h = 1e-6);

/// Model checkpoint: one tensor file per parameter (FP16 master codes, or
/// FP32 when quantization is disabled) plus a plain-text manifest.
void save_checkpoint(const Network& net, const std::string& dir);
void load_checkpoint(Network& net, const std::string& dir);

} // namespace fp8emu::nn
