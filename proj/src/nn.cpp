#include "fp8emu/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <stdexcept>

#include "fp8emu/kernels.hpp"
#include "fp8emu/rand.hpp"
#include "fp8emu/tensor_io.hpp"

namespace fp8emu::nn {

std::string step_reports_csv(const std::vector<StepReport>& steps) {
    std::string out = "iteration,loss,l2_loss,scale,underflow_fraction,overflow_count\n";
    char buf[160];
    for (const StepReport& s : steps) {
        std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%lld\n",
                      static_cast<long long>(s.iteration),
                      static_cast<double>(s.loss), static_cast<double>(s.l2_loss),
                      s.scale_event.scale_after, s.grad_underflow_fraction,
                      static_cast<long long>(s.grad_overflow_count));
        out += buf;
    }
    return out;
}

std::string eval_rows_csv(const std::vector<EvalRow>& rows) {
    std::string out = "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
    char buf[160];
    for (const EvalRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g\n",
                      static_cast<long long>(r.epoch), r.train_loss,
                      r.train_accuracy, r.val_loss, r.val_accuracy);
        out += buf;
    }
    return out;
}

std::vector<LayerParams> init_params(const ModelSpec& spec, std::uint64_t seed) {
    std::vector<LayerParams> params(spec.layers.size());
    Rand rng{mix_seed(seed, 0xA11)};
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (!l.has_params()) continue;
        LayerParams& p = params[i];
        if (l.kind == LayerKind::Dense) {
            p.w.shape = {l.in_features, l.out_features};
            p.b.shape = {l.out_features};
        } else {
            p.w.shape = {l.out_channels, l.in_channels, l.kernel, l.kernel};
            p.b.shape = {l.out_channels};
        }
        const std::int64_t fan_in = (l.kind == LayerKind::Dense)
                                        ? l.in_features
                                        : l.in_channels * l.kernel * l.kernel;
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
        p.w.value.resize(static_cast<std::size_t>(shape_numel(p.w.shape)));
        for (float& v : p.w.value)
            v = static_cast<float>(rng.normal() * std_dev);
        p.b.value.assign(static_cast<std::size_t>(shape_numel(p.b.shape)), 0.0f);
        p.w.momentum.assign(p.w.value.size(), 0.0f);
        p.b.momentum.assign(p.b.value.size(), 0.0f);
    }
    return params;
}

Network::Network(const ModelSpec& spec, const TrainOptions& opts)
    : spec_(spec), opts_(opts) {
    validate(spec_);
    if (opts_.quant.enabled && opts_.quant.seed == 0)
        throw std::invalid_argument("quantization seed must be nonzero");
    params_ = init_params(spec_, opts_.seed);
    if (opts_.quant.enabled) {
        for (LayerParams& p : params_) {
            for (ParamTensor* t : {&p.w, &p.b}) {
                t->master.resize(t->value.size());
                for (std::size_t j = 0; j < t->value.size(); ++j) {
                    const EncodeResult r = encode(t->value[j], kFp16,
                                                  RoundingMode::NearestEven);
                    t->master[j] = static_cast<std::uint16_t>(r.code);
                    t->value[j] = static_cast<float>(decode(r.code, kFp16));
                }
            }
        }
    }
}

QuantizedTensor Network::qnode(const Tensor& t, const FloatFormat& fmt,
                               bool training) {
    QuantConfig cfg;
    cfg.saturate_on_overflow = opts_.quant.saturate;
    if (training && opts_.quant.mode == RoundingMode::Stochastic) {
        cfg.mode = RoundingMode::Stochastic;
        const std::uint64_t s = mix_seed(opts_.quant.seed, ++qnode_counter_);
        cfg.seed = s ? s : 1;
    } else {
        cfg.mode = RoundingMode::NearestEven;
        cfg.seed = 1;
    }
    return quantize(t, fmt, cfg);
}

ParamsT<float> Network::float_params() const {
    ParamsT<float> p;
    p.w.resize(params_.size());
    p.b.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        p.w[i] = params_[i].w.value;
        p.b[i] = params_[i].b.value;
    }
    return p;
}

DropoutMasks Network::draw_masks(std::int64_t batch) {
    DropoutMasks masks(spec_.layers.size());
    // Mask element counts depend on each dropout layer's input size; walk the
    // shape chain.
    std::vector<std::int64_t> shape;
    shape.push_back(batch);
    shape.insert(shape.end(), spec_.input_shape.begin(), spec_.input_shape.end());
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        switch (l.kind) {
        case LayerKind::Dense:
            shape = {batch, l.out_features};
            break;
        case LayerKind::Conv2d: {
            const std::int64_t oh = conv_out_dim(shape[2], l.kernel, l.stride, l.pad);
            const std::int64_t ow = conv_out_dim(shape[3], l.kernel, l.stride, l.pad);
            shape = {batch, l.out_channels, oh, ow};
            break;
        }
        case LayerKind::Dropout: {
            const std::int64_t n = shape_numel(shape);
            LfsrStream stream = LfsrStream::split(
                mix_seed(opts_.seed, 0xD0),
                static_cast<std::uint64_t>(step_counter_) * 131u + i);
            const double keep = 1.0 - l.drop_p;
            masks[i].resize(static_cast<std::size_t>(n));
            for (std::int64_t j = 0; j < n; ++j)
                masks[i][static_cast<std::size_t>(j)] =
                    stream.next_fraction() < keep ? 1 : 0;
            break;
        }
        default:
            break;
        }
    }
    return masks;
}

float Network::forward(const Tensor& x, const std::vector<int>& labels,
                       bool training) {
    if (x.shape.empty() || x.shape[0] != static_cast<std::int64_t>(labels.size()))
        throw std::invalid_argument("batch and label sizes disagree");
    const std::int64_t bsz = x.shape[0];
    std::vector<std::int64_t> bshape{bsz};
    bshape.insert(bshape.end(), spec_.input_shape.begin(), spec_.input_shape.end());
    if (x.numel() != shape_numel(bshape))
        throw std::invalid_argument("batch feature count does not match the model input shape");
    batch_ = x;
    batch_.shape = bshape; // row-major reshape
    labels_ = labels;
    masks_ = (training && spec_.regularizer.kind == Regularizer::Kind::Dropout)
                 ? draw_masks(bsz)
                 : DropoutMasks(spec_.layers.size());
    if (training) ++step_counter_;

    if (!opts_.quant.enabled) {
        const ParamsT<float> p = float_params();
        const float loss = ref_forward(spec_, p, batch_.data.data(), batch_.shape,
                                       labels_, masks_, ref_cache_);
        probs_ = ref_cache_.probs;
        return loss;
    }

    caches_.assign(spec_.layers.size(), {});
    Tensor cur = batch_;
    float loss = 0.0f;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        LayerCache& cache = caches_[i];
        switch (l.kind) {
        case LayerKind::Dense: {
            const FloatFormat& fmt =
                l.precision == PrecisionClass::Fp16Boundary ? kFp16 : kFp8;
            cur.shape = {bsz, l.in_features};
            cache.qin = qnode(cur, fmt, training);
            cache.qw = qnode(Tensor(params_[i].w.shape, params_[i].w.value), fmt,
                             training);
            Tensor y = gemm_fp8(cache.qin, cache.qw);
            const std::vector<float>& bias = params_[i].b.value;
            for (std::int64_t r = 0; r < bsz; ++r)
                for (std::int64_t j = 0; j < l.out_features; ++j)
                    y.at(r * l.out_features + j) += bias[static_cast<std::size_t>(j)];
            const QuantizedTensor qy = qnode(y, fmt, training);
            cur = dequantize(qy);
            cache.out_shape = cur.shape;
            break;
        }
        case LayerKind::Conv2d: {
            const FloatFormat& fmt =
                l.precision == PrecisionClass::Fp16Boundary ? kFp16 : kFp8;
            cache.qin = qnode(cur, fmt, training);
            cache.qw = qnode(Tensor(params_[i].w.shape, params_[i].w.value), fmt,
                             training);
            const ConvGeometry geom{l.stride, l.pad};
            Tensor y = conv2d_fp8(cache.qin, cache.qw, geom);
            const std::vector<float>& bias = params_[i].b.value;
            const std::int64_t plane = y.shape[2] * y.shape[3];
            for (std::int64_t ni = 0; ni < bsz; ++ni)
                for (std::int64_t f = 0; f < l.out_channels; ++f)
                    for (std::int64_t p = 0; p < plane; ++p)
                        y.at((ni * l.out_channels + f) * plane + p) +=
                            bias[static_cast<std::size_t>(f)];
            const QuantizedTensor qy = qnode(y, fmt, training);
            cur = dequantize(qy);
            cache.out_shape = cur.shape;
            break;
        }
        case LayerKind::ReLU: {
            Tensor y(cur.shape);
            relu_forward(cur.data.data(), cur.numel(), y.data.data());
            cur = std::move(y);
            cache.out = cur;
            break;
        }
        case LayerKind::Tanh:
        case LayerKind::Sigmoid: {
            Tensor y(cur.shape);
            if (l.kind == LayerKind::Tanh)
                tanh_forward(cur.data.data(), cur.numel(), y.data.data());
            else
                sigmoid_forward(cur.data.data(), cur.numel(), y.data.data());
            const QuantizedTensor qy = qnode(y, kFp16, training);
            cur = dequantize(qy);
            cache.out = cur;
            break;
        }
        case LayerKind::Dropout: {
            if (i < masks_.size() && !masks_[i].empty()) {
                Tensor y(cur.shape);
                const float keep_inv = 1.0f / (1.0f - static_cast<float>(l.drop_p));
                dropout_forward(cur.data.data(), masks_[i].data(), cur.numel(),
                                keep_inv, y.data.data());
                cur = std::move(y);
            }
            break;
        }
        case LayerKind::SoftmaxCrossEntropy: {
            const std::int64_t c = spec_.num_classes;
            probs_.assign(static_cast<std::size_t>(bsz * c), 0.0f);
            loss = softmax_xent_forward(cur.data.data(), bsz, c, labels_.data(),
                                        probs_.data());
            break;
        }
        }
    }
    return loss;
}

Network::BackwardStats Network::backward(double loss_scale) {
    BackwardStats st;
    const std::size_t nl = spec_.layers.size();
    const std::int64_t bsz = batch_.shape[0];
    const std::int64_t c = spec_.num_classes;

    if (!opts_.quant.enabled) {
        const ParamsT<float> p = float_params();
        ref_backward(spec_, p, batch_.data.data(), batch_.shape, labels_, masks_,
                     ref_cache_, static_cast<float>(loss_scale), ref_grads_);
        for (std::size_t i = 0; i < nl; ++i) {
            for (const auto* g : {&ref_grads_.w[i], &ref_grads_.b[i]})
                for (const float v : *g)
                    if (!std::isfinite(v)) st.grads_finite = false;
        }
        return st;
    }

    grads_.assign(nl, {});
    std::int64_t zeroed = 0, total = 0;

    Tensor e({bsz, c});
    softmax_xent_backward(probs_.data(), bsz, c, labels_.data(),
                          static_cast<float>(loss_scale), e.data.data());

    for (std::size_t i = nl - 1; i-- > 0;) {
        const LayerSpec& l = spec_.layers[i];
        LayerCache& cache = caches_[i];
        switch (l.kind) {
        case LayerKind::Dense: {
            const FloatFormat& fmt =
                l.precision == PrecisionClass::Fp16Boundary ? kFp16 : kFp8;
            e.shape = {bsz, l.out_features};
            const QuantizedTensor qe = qnode(e, fmt, true);
            st.overflow_count += qe.overflow_count;
            const Tensor eq = dequantize(qe);

            Tensor dw = gemm_fp8(transpose(cache.qin), qe);
            QuantizedTensor qdw = qnode(dw, fmt, true);
            st.overflow_count += qdw.overflow_count;
            zeroed += qdw.underflow_count;
            total += qdw.numel();

            std::vector<float> db(static_cast<std::size_t>(l.out_features), 0.0f);
            for (std::int64_t j = 0; j < l.out_features; ++j) {
                float acc = 0.0f;
                for (std::int64_t r = 0; r < bsz; ++r)
                    acc += eq.at(r * l.out_features + j);
                db[static_cast<std::size_t>(j)] = acc;
            }
            grads_[i].qdw = std::move(qdw);
            grads_[i].db = std::move(db);
            grads_[i].present = true;

            if (i > 0) {
                Tensor dx = gemm_fp8(qe, transpose(cache.qw));
                const QuantizedTensor qdx = qnode(dx, fmt, true);
                st.overflow_count += qdx.overflow_count;
                e = dequantize(qdx);
            }
            break;
        }
        case LayerKind::Conv2d: {
            const FloatFormat& fmt =
                l.precision == PrecisionClass::Fp16Boundary ? kFp16 : kFp8;
            e.shape = cache.out_shape;
            const QuantizedTensor qe = qnode(e, fmt, true);
            st.overflow_count += qe.overflow_count;
            const Tensor eq = dequantize(qe);
            const ConvGeometry geom{l.stride, l.pad};

            Tensor dw = conv2d_backward_weights_fp8(cache.qin, qe, l.kernel,
                                                    l.kernel, geom);
            QuantizedTensor qdw = qnode(dw, fmt, true);
            st.overflow_count += qdw.overflow_count;
            zeroed += qdw.underflow_count;
            total += qdw.numel();

            const std::int64_t plane = cache.out_shape[2] * cache.out_shape[3];
            std::vector<float> db(static_cast<std::size_t>(l.out_channels), 0.0f);
            for (std::int64_t f = 0; f < l.out_channels; ++f) {
                float acc = 0.0f;
                for (std::int64_t ni = 0; ni < bsz; ++ni)
                    for (std::int64_t p = 0; p < plane; ++p)
                        acc += eq.at((ni * l.out_channels + f) * plane + p);
                db[static_cast<std::size_t>(f)] = acc;
            }
            grads_[i].qdw = std::move(qdw);
            grads_[i].db = std::move(db);
            grads_[i].present = true;

            if (i > 0) {
                Tensor dx = conv2d_backward_data_fp8(qe, cache.qw, geom,
                                                     cache.qin.shape[2],
                                                     cache.qin.shape[3]);
                const QuantizedTensor qdx = qnode(dx, fmt, true);
                st.overflow_count += qdx.overflow_count;
                e = dequantize(qdx);
            }
            break;
        }
        case LayerKind::ReLU: {
            Tensor dx(cache.out.shape);
            relu_backward(cache.out.data.data(), e.data.data(), e.numel(),
                          dx.data.data());
            e = std::move(dx);
            break;
        }
        case LayerKind::Tanh:
        case LayerKind::Sigmoid: {
            Tensor dx(cache.out.shape);
            if (l.kind == LayerKind::Tanh)
                tanh_backward(cache.out.data.data(), e.data.data(), e.numel(),
                              dx.data.data());
            else
                sigmoid_backward(cache.out.data.data(), e.data.data(), e.numel(),
                                 dx.data.data());
            e = std::move(dx);
            break;
        }
        case LayerKind::Dropout: {
            if (i < masks_.size() && !masks_[i].empty()) {
                Tensor dx(e.shape);
                const float keep_inv = 1.0f / (1.0f - static_cast<float>(l.drop_p));
                dropout_backward(e.data.data(), masks_[i].data(), e.numel(),
                                 keep_inv, dx.data.data());
                e = std::move(dx);
            }
            break;
        }
        case LayerKind::SoftmaxCrossEntropy:
            break; // seed gradient already formed
        }
        if (i == 0) break;
    }

    for (std::size_t i = 0; i < nl; ++i) {
        if (!grads_[i].present) continue;
        const Tensor gw = dequantize(grads_[i].qdw);
        for (const float v : gw.data)
            if (!std::isfinite(v)) st.grads_finite = false;
        for (const float v : grads_[i].db)
            if (!std::isfinite(v)) st.grads_finite = false;
    }
    if (st.overflow_count > 0) st.grads_finite = false;
    st.underflow_fraction =
        total > 0 ? static_cast<double>(zeroed) / static_cast<double>(total) : 0.0;
    return st;
}

namespace {

void update_tensor(ParamTensor& p, const std::vector<float>& g, float scale,
                   float lr, float mu, float two_lambda) {
    for (std::size_t j = 0; j < p.value.size(); ++j) {
        float gv = g[j] / scale;
        if (two_lambda != 0.0f) gv += two_lambda * p.value[j];
        p.momentum[j] = mu * p.momentum[j] + gv;
        const float w32 = p.value[j] - lr * p.momentum[j];
        if (!p.master.empty()) {
            const EncodeResult r = encode(w32, kFp16, RoundingMode::NearestEven);
            p.master[j] = static_cast<std::uint16_t>(r.code);
            p.value[j] = static_cast<float>(decode(r.code, kFp16));
        } else {
            p.value[j] = w32;
        }
    }
}

} // namespace

void Network::apply_update(double scale_used) {
    const float s = static_cast<float>(scale_used);
    const float lr = static_cast<float>(opts_.learning_rate);
    const float mu = static_cast<float>(opts_.momentum);
    const float two_lambda =
        spec_.regularizer.kind == Regularizer::Kind::L2
            ? static_cast<float>(2.0 * spec_.regularizer.lambda)
            : 0.0f;

    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        if (!spec_.layers[i].has_params()) continue;
        if (!opts_.quant.enabled) {
            update_tensor(params_[i].w, ref_grads_.w[i], s, lr, mu, two_lambda);
            update_tensor(params_[i].b, ref_grads_.b[i], s, lr, mu, 0.0f);
        } else {
            if (!grads_[i].present)
                throw std::logic_error("apply_update without a backward pass");
            const Tensor gw = dequantize(grads_[i].qdw);
            update_tensor(params_[i].w, gw.data, s, lr, mu, two_lambda);
            update_tensor(params_[i].b, grads_[i].db, s, lr, mu, 0.0f);
        }
    }
}

float Network::l2_loss() const {
    if (spec_.regularizer.kind != Regularizer::Kind::L2) return 0.0f;
    double acc = 0.0;
    for (const LayerParams& p : params_)
        for (const float v : p.w.value) acc += static_cast<double>(v) * v;
    return static_cast<float>(spec_.regularizer.lambda * acc);
}

namespace {

Tensor gather(const Dataset& ds, const std::vector<std::int64_t>& order,
              std::int64_t lo, std::int64_t hi, std::vector<int>& labels) {
    const std::int64_t stride = shape_numel(ds.sample_shape());
    std::vector<std::int64_t> shape = ds.x.shape;
    shape[0] = hi - lo;
    Tensor out(shape);
    labels.resize(static_cast<std::size_t>(hi - lo));
    for (std::int64_t i = lo; i < hi; ++i) {
        const std::int64_t src = order[static_cast<std::size_t>(i)];
        std::copy_n(ds.x.data.begin() + src * stride, stride,
                    out.data.begin() + (i - lo) * stride);
        labels[static_cast<std::size_t>(i - lo)] =
            ds.labels[static_cast<std::size_t>(src)];
    }
    return out;
}

} // namespace

std::pair<double, double> evaluate(Network& net, const Dataset& ds,
                                   std::int64_t batch_size) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(ds.size()));
    std::iota(order.begin(), order.end(), 0);
    const std::int64_t c = net.spec().num_classes;
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    std::vector<int> labels;
    for (std::int64_t lo = 0; lo < ds.size(); lo += batch_size) {
        const std::int64_t hi = std::min(ds.size(), lo + batch_size);
        const Tensor bx = gather(ds, order, lo, hi, labels);
        const float loss = net.forward(bx, labels, /*training=*/false);
        loss_sum += static_cast<double>(loss) * static_cast<double>(hi - lo);
        const std::vector<float>& probs = net.probs();
        for (std::int64_t r = 0; r < hi - lo; ++r) {
            std::int64_t best = 0;
            for (std::int64_t j = 1; j < c; ++j)
                if (probs[static_cast<std::size_t>(r * c + j)] >
                    probs[static_cast<std::size_t>(r * c + best)])
                    best = j;
            if (best == labels[static_cast<std::size_t>(r)]) ++correct;
        }
    }
    return {loss_sum / static_cast<double>(ds.size()),
            static_cast<double>(correct) / static_cast<double>(ds.size())};
}

TrainResult train(Network& net, const Dataset& train_set, const Dataset& val_set,
                  LossScaler& scaler, const TrainOptions& opts) {
    if (train_set.size() == 0) throw std::invalid_argument("empty training set");
    TrainResult res;
    std::vector<std::int64_t> order(static_cast<std::size_t>(train_set.size()));
    std::int64_t iter = 0;
    std::int64_t nonfinite_run = 0;
    std::vector<int> labels;

    for (std::int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rand shuffle_rng{mix_seed(opts.seed, 0xE000 + static_cast<std::uint64_t>(epoch))};
        for (std::int64_t i = train_set.size() - 1; i > 0; --i) {
            auto j = static_cast<std::int64_t>(shuffle_rng.uniform() *
                                               static_cast<double>(i + 1));
            if (j > i) j = i;
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(j)]);
        }

        for (std::int64_t lo = 0; lo < train_set.size(); lo += opts.batch_size) {
            const std::int64_t hi = std::min(train_set.size(), lo + opts.batch_size);
            const Tensor bx = gather(train_set, order, lo, hi, labels);

            const double scale_used = scaler.scale();
            const float data_loss = net.forward(bx, labels, /*training=*/true);
            const float l2 = net.l2_loss();
            const float total = data_loss + l2;

            const Network::BackwardStats stats = net.backward(scale_used);
            if (stats.grads_finite) net.apply_update(scale_used);
            const ScaleEvent ev = scaler.step(stats.grads_finite, iter);
            if (ev.action != ScaleAction::None) res.events.push_back(ev);

            StepReport report;
            report.iteration = iter;
            report.loss = total;
            report.l2_loss = l2;
            report.grad_underflow_fraction = stats.underflow_fraction;
            report.grad_overflow_count = stats.overflow_count;
            report.scale_event = ev;
            res.steps.push_back(report);

            if (!std::isfinite(total)) {
                if (++nonfinite_run >= opts.divergence_limit) {
                    res.diverged = true;
                    res.total_iterations = iter + 1;
                    return res;
                }
            } else {
                nonfinite_run = 0;
            }
            ++iter;
        }

        EvalRow row;
        row.epoch = epoch;
        std::tie(row.train_loss, row.train_accuracy) =
            evaluate(net, train_set, opts.batch_size);
        std::tie(row.val_loss, row.val_accuracy) =
            evaluate(net, val_set, opts.batch_size);
        res.evals.push_back(row);
    }
    res.total_iterations = iter;
    return res;
}

double gradient_check(const ModelSpec& spec, const Dataset& batch,
                      std::uint64_t seed, double h) {
    validate(spec);
    const std::vector<LayerParams> fparams = init_params(spec, seed);
    ParamsT<double> pd;
    pd.w.resize(fparams.size());
    pd.b.resize(fparams.size());
    for (std::size_t i = 0; i < fparams.size(); ++i) {
        pd.w[i].assign(fparams[i].w.value.begin(), fparams[i].w.value.end());
        pd.b[i].assign(fparams[i].b.value.begin(), fparams[i].b.value.end());
    }
    const std::vector<double> x(batch.x.data.begin(), batch.x.data.end());
    const DropoutMasks masks(spec.layers.size()); // all identity

    RefCache<double> cache;
    ref_forward(spec, pd, x.data(), batch.x.shape, batch.labels, masks, cache);
    ParamsT<double> grads;
    ref_backward(spec, pd, x.data(), batch.x.shape, batch.labels, masks, cache,
                 1.0, grads);

    const auto loss_at = [&]() {
        RefCache<double> c2;
        return ref_forward(spec, pd, x.data(), batch.x.shape, batch.labels, masks,
                           c2);
    };

    double max_dev = 0.0;
    for (std::size_t i = 0; i < fparams.size(); ++i) {
        const std::pair<std::vector<double>*, std::vector<double>*> tensors[2] = {
            {&pd.w[i], &grads.w[i]}, {&pd.b[i], &grads.b[i]}};
        for (const auto& [vals, anas] : tensors) {
            for (std::size_t j = 0; j < vals->size(); ++j) {
                const double orig = (*vals)[j];
                (*vals)[j] = orig + h;
                const double lp = loss_at();
                (*vals)[j] = orig - h;
                const double lm = loss_at();
                (*vals)[j] = orig;
                const double fd = (lp - lm) / (2.0 * h);
                const double a = (*anas)[j];
                const double dev = std::abs(a - fd) /
                                   std::max({std::abs(a), std::abs(fd), 1e-3});
                max_dev = std::max(max_dev, dev);
            }
        }
    }
    return max_dev;
}

void save_checkpoint(const Network& net, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError(dir + ": cannot create checkpoint directory");

    std::string manifest;
    const auto& layers = net.spec().layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].has_params()) continue;
        const LayerParams& p = net.params()[i];
        char line[256];
        std::snprintf(line, sizeof(line),
                      "layer %zu kind=%s precision=%s w=layer%zu_w.fp8t "
                      "b=layer%zu_b.fp8t\n",
                      i, to_string(layers[i].kind),
                      layers[i].precision == PrecisionClass::Fp16Boundary ? "fp16"
                                                                          : "fp8",
                      i, i);
        manifest += line;
        const std::string wpath = dir + "/layer" + std::to_string(i) + "_w.fp8t";
        const std::string bpath = dir + "/layer" + std::to_string(i) + "_b.fp8t";
        if (!p.w.master.empty()) {
            QuantizedTensor qw;
            qw.shape = p.w.shape;
            qw.codes = p.w.master;
            qw.fmt = kFp16;
            save_tensor(wpath, qw);
            QuantizedTensor qb;
            qb.shape = p.b.shape;
            qb.codes = p.b.master;
            qb.fmt = kFp16;
            save_tensor(bpath, qb);
        } else {
            save_tensor(wpath, Tensor(p.w.shape, p.w.value));
            save_tensor(bpath, Tensor(p.b.shape, p.b.value));
        }
    }
    std::FILE* f = std::fopen((dir + "/manifest.txt").c_str(), "wb");
    if (!f) throw IoError(dir + "/manifest.txt: cannot open for writing");
    std::fwrite(manifest.data(), 1, manifest.size(), f);
    std::fclose(f);
}

void load_checkpoint(Network& net, const std::string& dir) {
    const auto& layers = net.spec().layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].has_params()) continue;
        LayerParams& p = net.params()[i];
        const std::string wpath = dir + "/layer" + std::to_string(i) + "_w.fp8t";
        const std::string bpath = dir + "/layer" + std::to_string(i) + "_b.fp8t";
        for (const auto& [path, t] :
             {std::make_pair(wpath, &p.w), std::make_pair(bpath, &p.b)}) {
            if (peek_tensor_dtype(path) == TensorDtype::Fp32) {
                const Tensor loaded = load_tensor_fp32(path);
                if (loaded.shape != t->shape)
                    throw IoError(path + ": checkpoint shape mismatch");
                t->value = loaded.data;
                t->master.clear();
            } else {
                const QuantizedTensor q = load_tensor_codes(path);
                if (q.shape != t->shape || !(q.fmt == kFp16))
                    throw IoError(path + ": checkpoint shape/format mismatch");
                t->master = q.codes;
                t->value.resize(q.codes.size());
                for (std::size_t j = 0; j < q.codes.size(); ++j)
                    t->value[j] = static_cast<float>(decode(q.codes[j], kFp16));
            }
        }
    }
}

} // namespace fp8emu::nn
