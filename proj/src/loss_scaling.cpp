#include "fp8emu/loss_scaling.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace fp8emu {

const char* to_string(ScaleAction action) {
    switch (action) {
    case ScaleAction::None: return "none";
    case ScaleAction::Backoff: return "backoff";
    case ScaleAction::Growth: return "growth";
    case ScaleAction::ClampedToMin: return "clamped_to_min";
    }
    return "none";
}

LossScaler::LossScaler(const Options& opts) : opts_(opts), scale_(opts.scale) {
    if (!(opts_.scale > 0.0) || !std::isfinite(opts_.scale))
        throw std::invalid_argument("loss scale must be finite and positive");
    if (opts_.kind == Kind::DynamicBackoff) {
        if (!(opts_.backoff_factor > 0.0) || !(opts_.backoff_factor < 1.0))
            throw std::invalid_argument("backoff factor must lie in (0, 1)");
        if (!(opts_.growth_factor > 1.0))
            throw std::invalid_argument("growth factor must exceed 1");
        if (opts_.growth_interval <= 0)
            throw std::invalid_argument("growth interval must be positive");
        std::int64_t prev = -1;
        for (const auto& [iter, min_scale] : opts_.min_threshold_schedule) {
            if (iter <= prev)
                throw std::invalid_argument("min threshold schedule iterations must increase");
            if (!(min_scale > 0.0))
                throw std::invalid_argument("min threshold must be positive");
            prev = iter;
        }
    }
}

double LossScaler::min_threshold(std::int64_t iteration) const {
    double thr = 1.0;
    for (const auto& [iter, min_scale] : opts_.min_threshold_schedule) {
        if (iter > iteration) break;
        thr = min_scale;
    }
    return thr;
}

ScaleEvent LossScaler::step(bool grads_finite, std::int64_t iteration) {
    ScaleEvent ev;
    ev.iteration = iteration;
    if (opts_.kind == Kind::Constant) {
        ev.scale_after = scale_;
        return ev;
    }
    const double thr = min_threshold(iteration);
    if (!grads_finite) {
        const double candidate = scale_ * opts_.backoff_factor;
        if (candidate < thr) {
            scale_ = thr;
            ev.action = ScaleAction::ClampedToMin;
        } else {
            scale_ = candidate;
            ev.action = ScaleAction::Backoff;
        }
        steps_since_overflow_ = 0;
    } else {
        ++steps_since_overflow_;
        if (steps_since_overflow_ >= opts_.growth_interval) {
            scale_ *= opts_.growth_factor;
            steps_since_overflow_ = 0;
            ev.action = ScaleAction::Growth;
        }
        // A threshold step may raise the floor above the current scale even
        // without an overflow; honor it immediately.
        if (scale_ < thr) {
            scale_ = thr;
            ev.action = ScaleAction::ClampedToMin;
        }
    }
    ev.scale_after = scale_;
    return ev;
}

float LossScaler::scale_loss(float loss) const {
    return static_cast<float>(static_cast<double>(loss) * scale_);
}

void LossScaler::unscale_gradients_inplace(Tensor& g) const {
    const float s = static_cast<float>(scale_);
    for (float& v : g.data) v /= s;
}

Tensor LossScaler::unscale_gradients(const Tensor& g) const {
    Tensor out = g;
    unscale_gradients_inplace(out);
    return out;
}

std::string scale_events_csv(const std::vector<ScaleEvent>& events) {
    std::string out = "iteration,action,scale_after\n";
    char buf[96];
    for (const ScaleEvent& ev : events) {
        std::snprintf(buf, sizeof(buf), "%lld,%s,%.9g\n",
                      static_cast<long long>(ev.iteration), to_string(ev.action), ev.scale_after);
        out += buf;
    }
    return out;
}

} // namespace fp8emu
