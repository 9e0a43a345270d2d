#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fp8emu/tensor.hpp"

namespace fp8emu {

enum class ScaleAction { None, Backoff, Growth, ClampedToMin };

const char* to_string(ScaleAction action);

struct ScaleEvent {
    std::int64_t iteration = 0;
    ScaleAction action = ScaleAction::None;
    double scale_after = 1.0;
};

/// Loss-scale manager. Constant mode never moves; DynamicBackoff halves the
/// scale on non-finite gradients (the harness skips that weight update),
/// doubles it after growth_interval clean steps, and never lets it fall below
/// an iteration-indexed minimum threshold. All factors are powers of two so
/// scaling and unscaling are exact.
class LossScaler {
public:
    enum class Kind { Constant, DynamicBackoff };

    struct Options {
        Kind kind = Kind::Constant;
        double scale = 1.0;       // initial (Constant: permanent) scale
        double backoff_factor = 0.5;
        double growth_factor = 2.0;
        std::int64_t growth_interval = 2000;
        // (iteration, min_scale) pairs, iterations strictly increasing.
        std::vector<std::pair<std::int64_t, double>> min_threshold_schedule;
    };

    LossScaler() : LossScaler(Options{}) {}
    explicit LossScaler(const Options& opts);

    Kind kind() const { return opts_.kind; }
    double scale() const { return scale_; }
    std::int64_t steps_since_overflow() const { return steps_since_overflow_; }
    const Options& options() const { return opts_; }

    /// Active minimum threshold at `iteration`: the last schedule entry at or
    /// before it, 1 before the first entry (and with no schedule at all).
    double min_threshold(std::int64_t iteration) const;

    /// Advance the state machine once per optimizer step, after gradient
    /// inspection. Returns the event describing what happened.
    ScaleEvent step(bool grads_finite, std::int64_t iteration);

    float scale_loss(float loss) const;

    /// Element-wise division by the current scale, entirely in FP32, applied
    /// to the dequantized gradient view before any optimizer logic. Non-finite
    /// entries pass through unchanged (Inf / scale = Inf).
    Tensor unscale_gradients(const Tensor& g) const;
    void unscale_gradients_inplace(Tensor& g) const;

private:
    Options opts_;
    double scale_;
    std::int64_t steps_since_overflow_ = 0;
};

/// Serialize an event log as CSV: iteration, action, scale_after.
std::string scale_events_csv(const std::vector<ScaleEvent>& events);

} // namespace fp8emu
