#pragma once

#include <cmath>
#include <cstdint>

#include "fp8emu/kernels.hpp"

// Scalar network kernels templated on the accumulator type. The float
// instantiation is the reference the quantized kernels are checked against
// (identical loop nests and accumulation order); the double instantiation
// drives the finite-difference gradient check.
namespace fp8emu::nn {

using std::int64_t;

template <typename T>
void dense_forward(const T* x, int64_t n, int64_t k, const T* w, const T* b,
                   int64_t m, T* y) {
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < m; ++j) {
            T acc = 0;
            for (int64_t kk = 0; kk < k; ++kk) acc += x[i * k + kk] * w[kk * m + j];
            y[i * m + j] = acc + b[j];
        }
    }
}

// dx = e * w^T, accumulated over the output dimension in ascending order.
template <typename T>
void dense_backward_data(const T* e, int64_t n, int64_t m, const T* w, int64_t k,
                         T* dx) {
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t kk = 0; kk < k; ++kk) {
            T acc = 0;
            for (int64_t j = 0; j < m; ++j) acc += e[i * m + j] * w[kk * m + j];
            dx[i * k + kk] = acc;
        }
    }
}

// dw = x^T * e (batch-ascending accumulation); db = column sums of e.
template <typename T>
void dense_backward_params(const T* x, const T* e, int64_t n, int64_t k, int64_t m,
                           T* dw, T* db) {
    for (int64_t kk = 0; kk < k; ++kk) {
        for (int64_t j = 0; j < m; ++j) {
            T acc = 0;
            for (int64_t i = 0; i < n; ++i) acc += x[i * k + kk] * e[i * m + j];
            dw[kk * m + j] = acc;
        }
    }
    for (int64_t j = 0; j < m; ++j) {
        T acc = 0;
        for (int64_t i = 0; i < n; ++i) acc += e[i * m + j];
        db[j] = acc;
    }
}

// x [N,C,H,W], w [F,C,kh,kw], y [N,F,OH,OW]. Taps run (c, ki, kj) ascending
// with explicit zero products for padding, mirroring conv2d_fp8 exactly.
template <typename T>
void conv2d_forward(const T* x, int64_t n, int64_t c, int64_t h, int64_t w_dim,
                    const T* w, int64_t f, int64_t kh, int64_t kw, const T* b,
                    const ConvGeometry& geom, T* y) {
    const int64_t oh = conv_out_dim(h, kh, geom.stride, geom.pad);
    const int64_t ow = conv_out_dim(w_dim, kw, geom.stride, geom.pad);
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t fi = 0; fi < f; ++fi)
            for (int64_t oi = 0; oi < oh; ++oi)
                for (int64_t oj = 0; oj < ow; ++oj) {
                    T acc = 0;
                    for (int64_t ci = 0; ci < c; ++ci)
                        for (int64_t ki = 0; ki < kh; ++ki)
                            for (int64_t kj = 0; kj < kw; ++kj) {
                                const int64_t ii = oi * geom.stride - geom.pad + ki;
                                const int64_t jj = oj * geom.stride - geom.pad + kj;
                                const T xv =
                                    (ii >= 0 && ii < h && jj >= 0 && jj < w_dim)
                                        ? x[((ni * c + ci) * h + ii) * w_dim + jj]
                                        : T(0);
                                acc += xv * w[((fi * c + ci) * kh + ki) * kw + kj];
                            }
                    y[((ni * f + fi) * oh + oi) * ow + oj] =
                        acc + (b ? b[fi] : T(0));
                }
}

// dx[n,c,i,j] = sum over (f, ki, kj) of w[f,c,ki,kj] * e[n,f,oi,oj] where
// (oi, oj) is the output position whose tap (ki, kj) covers (i, j).
template <typename T>
void conv2d_backward_data(const T* e, int64_t n, int64_t f, int64_t oh, int64_t ow,
                          const T* w, int64_t c, int64_t kh, int64_t kw,
                          const ConvGeometry& geom, int64_t h, int64_t w_dim,
                          T* dx) {
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t i = 0; i < h; ++i)
                for (int64_t j = 0; j < w_dim; ++j) {
                    T acc = 0;
                    for (int64_t fi = 0; fi < f; ++fi)
                        for (int64_t ki = 0; ki < kh; ++ki)
                            for (int64_t kj = 0; kj < kw; ++kj) {
                                const int64_t oi_num = i + geom.pad - ki;
                                const int64_t oj_num = j + geom.pad - kj;
                                if (oi_num % geom.stride || oj_num % geom.stride)
                                    continue;
                                const int64_t oi = oi_num / geom.stride;
                                const int64_t oj = oj_num / geom.stride;
                                if (oi < 0 || oi >= oh || oj < 0 || oj >= ow)
                                    continue;
                                acc += w[((fi * c + ci) * kh + ki) * kw + kj] *
                                       e[((ni * f + fi) * oh + oi) * ow + oj];
                            }
                    dx[((ni * c + ci) * h + i) * w_dim + j] = acc;
                }
}

// dw[f,c,ki,kj] = sum over (n, oi, oj) of x * e; db[f] = sum of e.
template <typename T>
void conv2d_backward_params(const T* x, int64_t n, int64_t c, int64_t h,
                            int64_t w_dim, const T* e, int64_t f, int64_t oh,
                            int64_t ow, int64_t kh, int64_t kw,
                            const ConvGeometry& geom, T* dw, T* db) {
    for (int64_t fi = 0; fi < f; ++fi)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t ki = 0; ki < kh; ++ki)
                for (int64_t kj = 0; kj < kw; ++kj) {
                    T acc = 0;
                    for (int64_t ni = 0; ni < n; ++ni)
                        for (int64_t oi = 0; oi < oh; ++oi)
                            for (int64_t oj = 0; oj < ow; ++oj) {
                                const int64_t ii = oi * geom.stride - geom.pad + ki;
                                const int64_t jj = oj * geom.stride - geom.pad + kj;
                                if (ii < 0 || ii >= h || jj < 0 || jj >= w_dim)
                                    continue;
                                acc += x[((ni * c + ci) * h + ii) * w_dim + jj] *
                                       e[((ni * f + fi) * oh + oi) * ow + oj];
                            }
                    dw[((fi * c + ci) * kh + ki) * kw + kj] = acc;
                }
    for (int64_t fi = 0; fi < f; ++fi) {
        T acc = 0;
        for (int64_t ni = 0; ni < n; ++ni)
            for (int64_t oi = 0; oi < oh; ++oi)
                for (int64_t oj = 0; oj < ow; ++oj)
                    acc += e[((ni * f + fi) * oh + oi) * ow + oj];
        db[fi] = acc;
    }
}

template <typename T>
void relu_forward(const T* x, int64_t n, T* y) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

// Uses the forward output; the subgradient at 0 is 0.
template <typename T>
void relu_backward(const T* y, const T* e, int64_t n, T* dx) {
    for (int64_t i = 0; i < n; ++i) dx[i] = y[i] > T(0) ? e[i] : T(0);
}

template <typename T>
void tanh_forward(const T* x, int64_t n, T* y) {
    for (int64_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

template <typename T>
void tanh_backward(const T* y, const T* e, int64_t n, T* dx) {
    for (int64_t i = 0; i < n; ++i) dx[i] = e[i] * (T(1) - y[i] * y[i]);
}

template <typename T>
void sigmoid_forward(const T* x, int64_t n, T* y) {
    for (int64_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
}

template <typename T>
void sigmoid_backward(const T* y, const T* e, int64_t n, T* dx) {
    for (int64_t i = 0; i < n; ++i) dx[i] = e[i] * y[i] * (T(1) - y[i]);
}

// Inverted dropout: kept elements are rescaled by 1/(1-p) so the expected
// activation is unchanged; evaluation skips the layer entirely.
template <typename T>
void dropout_forward(const T* x, const std::uint8_t* mask, int64_t n, T keep_inv,
                     T* y) {
    for (int64_t i = 0; i < n; ++i) y[i] = mask[i] ? x[i] * keep_inv : T(0);
}

template <typename T>
void dropout_backward(const T* e, const std::uint8_t* mask, int64_t n, T keep_inv,
                      T* dx) {
    for (int64_t i = 0; i < n; ++i) dx[i] = mask[i] ? e[i] * keep_inv : T(0);
}

// Row-wise softmax with max-shift; returns the mean negative log-likelihood.
template <typename T>
T softmax_xent_forward(const T* logits, int64_t n, int64_t c, const int* labels,
                       T* probs) {
    T loss = 0;
    for (int64_t i = 0; i < n; ++i) {
        const T* z = logits + i * c;
        T mx = z[0];
        for (int64_t j = 1; j < c; ++j) mx = z[j] > mx ? z[j] : mx;
        T denom = 0;
        for (int64_t j = 0; j < c; ++j) denom += std::exp(z[j] - mx);
        const T log_denom = std::log(denom);
        for (int64_t j = 0; j < c; ++j)
            probs[i * c + j] = std::exp(z[j] - mx) / denom;
        loss += -(z[labels[i]] - mx - log_denom);
    }
    return loss / static_cast<T>(n);
}

// d(mean NLL)/d(logits) scaled by `upstream` (the loss scale during training).
template <typename T>
void softmax_xent_backward(const T* probs, int64_t n, int64_t c, const int* labels,
                           T upstream, T* dlogits) {
    const T inv_n = upstream / static_cast<T>(n);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) {
            const T ind = (j == labels[i]) ? T(1) : T(0);
            dlogits[i * c + j] = (probs[i * c + j] - ind) * inv_n;
        }
}

} // namespace fp8emu::nn
