#pragma once

#include <stdexcept>
#include <vector>

#include "fp8emu/model.hpp"
#include "fp8emu/nn_kernels.hpp"

// Unquantized network pipeline templated on the scalar type. The float
// instantiation is the training path with quantization disabled; the double
// instantiation backs the finite-difference gradient check.
namespace fp8emu::nn {

template <typename T>
struct ParamsT {
    // Indexed by layer; empty vectors for layers without parameters.
    std::vector<std::vector<T>> w, b;
};

template <typename T>
struct RefCache {
    std::vector<std::vector<T>> outs;          // per-layer outputs
    std::vector<std::vector<std::int64_t>> shapes;
    std::vector<T> probs;                      // softmax output [B, C]
};

// Per-layer dropout keep masks; an empty mask means the layer acts as the
// identity (evaluation, or dropout disabled).
using DropoutMasks = std::vector<std::vector<std::uint8_t>>;

template <typename T>
T ref_forward(const ModelSpec& spec, const ParamsT<T>& params, const T* x,
              const std::vector<std::int64_t>& batch_shape,
              const std::vector<int>& labels, const DropoutMasks& masks,
              RefCache<T>& cache) {
    const std::size_t nl = spec.layers.size();
    cache.outs.assign(nl, {});
    cache.shapes.assign(nl, {});

    const std::int64_t batch = batch_shape[0];
    T loss = 0;
    for (std::size_t i = 0; i < nl; ++i) {
        const LayerSpec& l = spec.layers[i];
        const T* in = (i == 0) ? x : cache.outs[i - 1].data();
        const auto& in_shape = (i == 0) ? batch_shape : cache.shapes[i - 1];
        const std::int64_t in_numel = shape_numel(in_shape);

        switch (l.kind) {
        case LayerKind::Dense: {
            const std::int64_t k = in_numel / batch;
            if (k != l.in_features)
                throw std::invalid_argument("dense input width mismatch");
            cache.shapes[i] = {batch, l.out_features};
            cache.outs[i].assign(static_cast<std::size_t>(batch * l.out_features), T(0));
            dense_forward(in, batch, k, params.w[i].data(), params.b[i].data(),
                          l.out_features, cache.outs[i].data());
            break;
        }
        case LayerKind::Conv2d: {
            if (in_shape.size() != 4 || in_shape[1] != l.in_channels)
                throw std::invalid_argument("conv input shape mismatch");
            const std::int64_t h = in_shape[2], w = in_shape[3];
            const ConvGeometry geom{l.stride, l.pad};
            const std::int64_t oh = conv_out_dim(h, l.kernel, l.stride, l.pad);
            const std::int64_t ow = conv_out_dim(w, l.kernel, l.stride, l.pad);
            cache.shapes[i] = {batch, l.out_channels, oh, ow};
            cache.outs[i].assign(
                static_cast<std::size_t>(batch * l.out_channels * oh * ow), T(0));
            conv2d_forward(in, batch, l.in_channels, h, w, params.w[i].data(),
                           l.out_channels, l.kernel, l.kernel, params.b[i].data(),
                           geom, cache.outs[i].data());
            break;
        }
        case LayerKind::ReLU:
        case LayerKind::Tanh:
        case LayerKind::Sigmoid: {
            cache.shapes[i] = in_shape;
            cache.outs[i].assign(static_cast<std::size_t>(in_numel), T(0));
            if (l.kind == LayerKind::ReLU)
                relu_forward(in, in_numel, cache.outs[i].data());
            else if (l.kind == LayerKind::Tanh)
                tanh_forward(in, in_numel, cache.outs[i].data());
            else
                sigmoid_forward(in, in_numel, cache.outs[i].data());
            break;
        }
        case LayerKind::Dropout: {
            cache.shapes[i] = in_shape;
            cache.outs[i].assign(in, in + in_numel);
            if (i < masks.size() && !masks[i].empty()) {
                const T keep_inv = T(1) / (T(1) - static_cast<T>(l.drop_p));
                dropout_forward(in, masks[i].data(), in_numel, keep_inv,
                                cache.outs[i].data());
            }
            break;
        }
        case LayerKind::SoftmaxCrossEntropy: {
            const std::int64_t c = in_numel / batch;
            cache.shapes[i] = {batch, c};
            cache.probs.assign(static_cast<std::size_t>(batch * c), T(0));
            loss = softmax_xent_forward(in, batch, c, labels.data(),
                                        cache.probs.data());
            cache.outs[i] = cache.probs;
            break;
        }
        }
    }
    return loss;
}

template <typename T>
void ref_backward(const ModelSpec& spec, const ParamsT<T>& params, const T* x,
                  const std::vector<std::int64_t>& batch_shape,
                  const std::vector<int>& labels, const DropoutMasks& masks,
                  const RefCache<T>& cache, T upstream, ParamsT<T>& grads) {
    const std::size_t nl = spec.layers.size();
    grads.w.assign(nl, {});
    grads.b.assign(nl, {});

    const std::int64_t batch = batch_shape[0];
    const std::int64_t c = cache.shapes[nl - 1][1];
    std::vector<T> e(static_cast<std::size_t>(batch * c), T(0));
    softmax_xent_backward(cache.probs.data(), batch, c, labels.data(), upstream,
                          e.data());

    for (std::size_t i = nl - 1; i-- > 0;) {
        const LayerSpec& l = spec.layers[i];
        const T* in = (i == 0) ? x : cache.outs[i - 1].data();
        const auto& in_shape = (i == 0) ? batch_shape : cache.shapes[i - 1];
        const std::int64_t in_numel = shape_numel(in_shape);
        std::vector<T> dx;

        switch (l.kind) {
        case LayerKind::Dense: {
            const std::int64_t k = l.in_features, m = l.out_features;
            grads.w[i].assign(static_cast<std::size_t>(k * m), T(0));
            grads.b[i].assign(static_cast<std::size_t>(m), T(0));
            dense_backward_params(in, e.data(), batch, k, m, grads.w[i].data(),
                                  grads.b[i].data());
            if (i > 0) {
                dx.assign(static_cast<std::size_t>(in_numel), T(0));
                dense_backward_data(e.data(), batch, m, params.w[i].data(), k,
                                    dx.data());
            }
            break;
        }
        case LayerKind::Conv2d: {
            const std::int64_t h = in_shape[2], w = in_shape[3];
            const auto& os = cache.shapes[i];
            const ConvGeometry geom{l.stride, l.pad};
            grads.w[i].assign(params.w[i].size(), T(0));
            grads.b[i].assign(params.b[i].size(), T(0));
            conv2d_backward_params(in, batch, l.in_channels, h, w, e.data(),
                                   l.out_channels, os[2], os[3], l.kernel, l.kernel,
                                   geom, grads.w[i].data(), grads.b[i].data());
            if (i > 0) {
                dx.assign(static_cast<std::size_t>(in_numel), T(0));
                conv2d_backward_data(e.data(), batch, l.out_channels, os[2], os[3],
                                     params.w[i].data(), l.in_channels, l.kernel,
                                     l.kernel, geom, h, w, dx.data());
            }
            break;
        }
        case LayerKind::ReLU:
        case LayerKind::Tanh:
        case LayerKind::Sigmoid: {
            dx.assign(static_cast<std::size_t>(in_numel), T(0));
            if (l.kind == LayerKind::ReLU)
                relu_backward(cache.outs[i].data(), e.data(), in_numel, dx.data());
            else if (l.kind == LayerKind::Tanh)
                tanh_backward(cache.outs[i].data(), e.data(), in_numel, dx.data());
            else
                sigmoid_backward(cache.outs[i].data(), e.data(), in_numel, dx.data());
            break;
        }
        case LayerKind::Dropout: {
            dx = e;
            if (i < masks.size() && !masks[i].empty()) {
                const T keep_inv = T(1) / (T(1) - static_cast<T>(l.drop_p));
                dropout_backward(e.data(), masks[i].data(), in_numel, keep_inv,
                                 dx.data());
            }
            break;
        }
        case LayerKind::SoftmaxCrossEntropy:
            break; // handled above
        }

        if (i == 0) break;
        e = std::move(dx);
    }
}

} // namespace fp8emu::nn
