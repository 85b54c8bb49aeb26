#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "p3d/common.hpp"
#include "p3d/nn/tensor.hpp"

namespace p3d::nn {

namespace detail {

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            T av = a[static_cast<size_t>(i) * k + p];
            const T* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,K] += A[M,N] * B[K,N]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T* brow = b + static_cast<size_t>(p) * n;
            T s = T(0);
            for (int j = 0; j < n; ++j) s += arow[j] * brow[j];
            c[static_cast<size_t>(i) * k + p] += s;
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* brow = b + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            T av = a[static_cast<size_t>(i) * k + p];
            T* crow = c + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// Unrolls conv windows of one image into a [C*kh*kw, oh*ow] matrix.
template <typename T>
void im2col(const T* img, int c, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, T* col) {
    const size_t out_plane = static_cast<size_t>(oh) * ow;
    size_t row = 0;
    for (int ch = 0; ch < c; ++ch) {
        const T* plane = img + static_cast<size_t>(ch) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++row) {
                T* dst = col + row * out_plane;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = T(0);
                        continue;
                    }
                    const T* src = plane + static_cast<size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride - pad + kx;
                        dst[oy * ow + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

// Scatters a column matrix back into image gradients (accumulating).
template <typename T>
void col2im_acc(const T* col, int c, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, T* img) {
    const size_t out_plane = static_cast<size_t>(oh) * ow;
    size_t row = 0;
    for (int ch = 0; ch < c; ++ch) {
        T* plane = img + static_cast<size_t>(ch) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++row) {
                const T* src = col + row * out_plane;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = plane + static_cast<size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: x[B,C,H,W] * w[F,C,kh,kw] + b[F] -> [B,F,H',W']
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad) {
    if (x.rank() != 4) throw ConfigError("conv2d: input must be rank 4");
    if (w.rank() != 4) throw ConfigError("conv2d: weights must be rank 4");
    const int bs = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int f = w.dim(0), wc = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    if (wc != c)
        throw ConfigError(strf("conv2d: input channels %d != weight channels %d", c, wc));
    if (b.rank() != 1 || b.dim(0) != f)
        throw ConfigError(strf("conv2d: bias size must be %d", f));
    if (stride <= 0) throw ConfigError("conv2d: stride must be positive");
    if (pad < 0) throw ConfigError("conv2d: pad must be non-negative");
    if (h + 2 * pad < kh || wd + 2 * pad < kw)
        throw ConfigError(strf("conv2d: kernel %dx%d exceeds padded input %dx%d",
                               kh, kw, h + 2 * pad, wd + 2 * pad));
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    const int k = c * kh * kw;
    const size_t out_plane = static_cast<size_t>(oh) * ow;

    auto out = make_op_node<T>({bs, f, oh, ow}, {x.node(), w.node(), b.node()});
    {
        std::vector<T> col(static_cast<size_t>(k) * out_plane);
        const T* xs = x.values().data();
        const T* ws = w.values().data();
        const T* bsv = b.values().data();
        T* os = out->values.data();
        for (int n = 0; n < bs; ++n) {
            detail::im2col(xs + static_cast<size_t>(n) * c * h * wd, c, h, wd, kh, kw,
                           stride, pad, oh, ow, col.data());
            T* obase = os + static_cast<size_t>(n) * f * out_plane;
            for (int ff = 0; ff < f; ++ff)
                std::fill(obase + ff * out_plane, obase + (ff + 1) * out_plane, bsv[ff]);
            detail::gemm_nn(ws, col.data(), obase, f, k, static_cast<int>(out_plane));
        }
    }

    Node<T>* on = out.get();
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.node();
    on->backward_op = [on, xn, wn, bn, bs, c, h, wd, f, kh, kw, stride, pad, oh, ow, k]() {
        const size_t out_plane = static_cast<size_t>(oh) * ow;
        std::vector<T> col(static_cast<size_t>(k) * out_plane);
        std::vector<T> dcol;
        if (xn->requires_grad) dcol.resize(col.size());
        const T* g = on->grad.data();
        for (int n = 0; n < bs; ++n) {
            const T* gbase = g + static_cast<size_t>(n) * f * out_plane;
            // re-derive the column matrix instead of caching it from forward
            if (wn->requires_grad || xn->requires_grad)
                detail::im2col(xn->values.data() + static_cast<size_t>(n) * c * h * wd,
                               c, h, wd, kh, kw, stride, pad, oh, ow, col.data());
            if (wn->requires_grad)
                detail::gemm_nt(gbase, col.data(), wn->grad.data(), f,
                                static_cast<int>(out_plane), k);
            if (bn->requires_grad) {
                for (int ff = 0; ff < f; ++ff) {
                    T s = T(0);
                    const T* row = gbase + ff * out_plane;
                    for (size_t i = 0; i < out_plane; ++i) s += row[i];
                    bn->grad[ff] += s;
                }
            }
            if (xn->requires_grad) {
                std::fill(dcol.begin(), dcol.end(), T(0));
                detail::gemm_tn(wn->values.data(), gbase, dcol.data(), f, k,
                                static_cast<int>(out_plane));
                detail::col2im_acc(dcol.data(), c, h, wd, kh, kw, stride, pad, oh, ow,
                                   xn->grad.data() + static_cast<size_t>(n) * c * h * wd);
            }
        }
    };
    return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// maxpool: ties routed to the first element of the window in row-major order
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> maxpool(const Tensor<T>& x, int k, int stride) {
    if (x.rank() != 4) throw ConfigError("maxpool: input must be rank 4");
    const int bs = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (k <= 0 || stride <= 0) throw ConfigError("maxpool: window and stride must be positive");
    if (h < k || w < k)
        throw ConfigError(strf("maxpool: window %d exceeds input %dx%d", k, h, w));
    const int oh = (h - k) / stride + 1;
    const int ow = (w - k) / stride + 1;

    auto out = make_op_node<T>({bs, c, oh, ow}, {x.node()});
    auto argmax = std::make_shared<std::vector<int>>(out->values.size());
    {
        const T* xs = x.values().data();
        T* os = out->values.data();
        size_t oi = 0;
        for (int n = 0; n < bs; ++n) {
            for (int ch = 0; ch < c; ++ch) {
                const T* plane = xs + (static_cast<size_t>(n) * c + ch) * h * w;
                const int plane_off = (n * c + ch) * h * w;
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox, ++oi) {
                        int iy0 = oy * stride, ix0 = ox * stride;
                        T best = plane[iy0 * w + ix0];
                        int besti = iy0 * w + ix0;
                        for (int ky = 0; ky < k; ++ky) {
                            for (int kx = 0; kx < k; ++kx) {
                                int idx = (iy0 + ky) * w + (ix0 + kx);
                                if (plane[idx] > best) {
                                    best = plane[idx];
                                    besti = idx;
                                }
                            }
                        }
                        os[oi] = best;
                        (*argmax)[oi] = plane_off + besti;
                    }
                }
            }
        }
    }

    Node<T>* on = out.get();
    auto xn = x.node();
    if (on->requires_grad) {
        on->backward_op = [on, xn, argmax]() {
            const T* g = on->grad.data();
            T* xg = xn->grad.data();
            for (size_t i = 0; i < on->values.size(); ++i) xg[(*argmax)[i]] += g[i];
        };
    }
    return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// linear: x[B,D] * w[D,E] + b[E]
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() != 2 || w.rank() != 2)
        throw ConfigError("linear: input and weights must be rank 2");
    const int bs = x.dim(0), d = x.dim(1), e = w.dim(1);
    if (w.dim(0) != d)
        throw ConfigError(strf("linear: input width %d != weight rows %d", d, w.dim(0)));
    if (b.rank() != 1 || b.dim(0) != e)
        throw ConfigError(strf("linear: bias size must be %d", e));

    auto out = make_op_node<T>({bs, e}, {x.node(), w.node(), b.node()});
    {
        T* os = out->values.data();
        const T* bsv = b.values().data();
        for (int n = 0; n < bs; ++n)
            std::copy(bsv, bsv + e, os + static_cast<size_t>(n) * e);
        detail::gemm_nn(x.values().data(), w.values().data(), os, bs, d, e);
    }

    Node<T>* on = out.get();
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.node();
    on->backward_op = [on, xn, wn, bn, bs, d, e]() {
        const T* g = on->grad.data();
        if (xn->requires_grad)
            detail::gemm_nt(g, wn->values.data(), xn->grad.data(), bs, e, d);
        if (wn->requires_grad)
            detail::gemm_tn(xn->values.data(), g, wn->grad.data(), bs, d, e);
        if (bn->requires_grad) {
            for (int n = 0; n < bs; ++n)
                for (int j = 0; j < e; ++j) bn->grad[j] += g[static_cast<size_t>(n) * e + j];
        }
    };
    return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// relu (subgradient 0 at exactly 0)
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    auto out = make_op_node<T>(x.shape(), {x.node()});
    const T* xs = x.values().data();
    T* os = out->values.data();
    for (size_t i = 0; i < out->values.size(); ++i) os[i] = xs[i] > T(0) ? xs[i] : T(0);

    Node<T>* on = out.get();
    auto xn = x.node();
    if (on->requires_grad) {
        on->backward_op = [on, xn]() {
            const T* g = on->grad.data();
            const T* xs = xn->values.data();
            T* xg = xn->grad.data();
            for (size_t i = 0; i < on->values.size(); ++i)
                if (xs[i] > T(0)) xg[i] += g[i];
        };
    }
    return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// softmax over rows of [B,K], max-subtracted
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
    if (x.rank() != 2) throw ConfigError("softmax: input must be rank 2");
    const int bs = x.dim(0), k = x.dim(1);
    auto out = make_op_node<T>(x.shape(), {x.node()});
    {
        const T* xs = x.values().data();
        T* os = out->values.data();
        for (int n = 0; n < bs; ++n) {
            const T* row = xs + static_cast<size_t>(n) * k;
            T* orow = os + static_cast<size_t>(n) * k;
            T mx = row[0];
            for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
            T sum = T(0);
            for (int j = 0; j < k; ++j) {
                orow[j] = std::exp(row[j] - mx);
                sum += orow[j];
            }
            for (int j = 0; j < k; ++j) orow[j] /= sum;
        }
    }

    Node<T>* on = out.get();
    auto xn = x.node();
    if (on->requires_grad) {
        on->backward_op = [on, xn, bs, k]() {
            const T* g = on->grad.data();
            const T* y = on->values.data();
            T* xg = xn->grad.data();
            for (int n = 0; n < bs; ++n) {
                const size_t off = static_cast<size_t>(n) * k;
                T dot = T(0);
                for (int j = 0; j < k; ++j) dot += g[off + j] * y[off + j];
                for (int j = 0; j < k; ++j) xg[off + j] += y[off + j] * (g[off + j] - dot);
            }
        };
    }
    return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// batchnorm over [B,D] (per feature) or [B,C,H,W] (per channel)
// ---------------------------------------------------------------------------
template <typename T>
struct BatchNormState {
    std::vector<T> running_mean;
    std::vector<T> running_var;

    explicit BatchNormState(int channels = 0)
        : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift,
                    BatchNormState<T>& state, Phase phase, T eps = T(1e-5),
                    T momentum = T(0.1)) {
    if (x.rank() != 2 && x.rank() != 4)
        throw ConfigError("batchnorm: input must be rank 2 or 4");
    const int bs = x.dim(0);
    const int c = x.dim(1);
    const size_t spatial = x.size() / (static_cast<size_t>(bs) * c);
    if (scale.size() != static_cast<size_t>(c) || shift.size() != static_cast<size_t>(c))
        throw ConfigError(strf("batchnorm: scale/shift size must be %d", c));
    if (state.running_mean.size() != static_cast<size_t>(c))
        throw ConfigError("batchnorm: running stats size mismatch");
    if (phase == Phase::train && bs < 2)
        throw ConfigError("batchnorm: train phase requires batch size >= 2");

    const size_t cnt = static_cast<size_t>(bs) * spatial;
    auto out = make_op_node<T>(x.shape(), {x.node(), scale.node(), shift.node()});
    auto xhat = std::make_shared<std::vector<T>>(x.size());
    auto inv_std = std::make_shared<std::vector<T>>(c);

    const T* xs = x.values().data();
    T* os = out->values.data();
    const T* gam = scale.values().data();
    const T* bet = shift.values().data();

    auto index = [&](int n, int ch, size_t s) {
        return (static_cast<size_t>(n) * c + ch) * spatial + s;
    };

    for (int ch = 0; ch < c; ++ch) {
        T mean, var;
        if (phase == Phase::train) {
            T sum = T(0);
            for (int n = 0; n < bs; ++n)
                for (size_t s = 0; s < spatial; ++s) sum += xs[index(n, ch, s)];
            mean = sum / static_cast<T>(cnt);
            T sq = T(0);
            for (int n = 0; n < bs; ++n)
                for (size_t s = 0; s < spatial; ++s) {
                    T d = xs[index(n, ch, s)] - mean;
                    sq += d * d;
                }
            var = sq / static_cast<T>(cnt);
            state.running_mean[ch] = (T(1) - momentum) * state.running_mean[ch] + momentum * mean;
            state.running_var[ch] = (T(1) - momentum) * state.running_var[ch] + momentum * var;
        } else {
            mean = state.running_mean[ch];
            var = state.running_var[ch];
        }
        const T inv = T(1) / std::sqrt(var + eps);
        (*inv_std)[ch] = inv;
        for (int n = 0; n < bs; ++n)
            for (size_t s = 0; s < spatial; ++s) {
                size_t i = index(n, ch, s);
                (*xhat)[i] = (xs[i] - mean) * inv;
                os[i] = gam[ch] * (*xhat)[i] + bet[ch];
            }
    }

    Node<T>* on = out.get();
    auto xn = x.node();
    auto gn = scale.node();
    auto bn = shift.node();
    const bool train_stats = (phase == Phase::train);
    on->backward_op = [on, xn, gn, bn, xhat, inv_std, bs, c, spatial, cnt, train_stats]() {
        const T* g = on->grad.data();
        auto index = [&](int n, int ch, size_t s) {
            return (static_cast<size_t>(n) * c + ch) * spatial + s;
        };
        for (int ch = 0; ch < c; ++ch) {
            T sum_g = T(0), sum_gx = T(0);
            for (int n = 0; n < bs; ++n)
                for (size_t s = 0; s < spatial; ++s) {
                    size_t i = index(n, ch, s);
                    sum_g += g[i];
                    sum_gx += g[i] * (*xhat)[i];
                }
            if (gn->requires_grad) gn->grad[ch] += sum_gx;
            if (bn->requires_grad) bn->grad[ch] += sum_g;
            if (xn->requires_grad) {
                const T gam = gn->values[ch];
                const T inv = (*inv_std)[ch];
                if (train_stats) {
                    const T inv_cnt = T(1) / static_cast<T>(cnt);
                    for (int n = 0; n < bs; ++n)
                        for (size_t s = 0; s < spatial; ++s) {
                            size_t i = index(n, ch, s);
                            xn->grad[i] += gam * inv *
                                (g[i] - sum_g * inv_cnt - (*xhat)[i] * sum_gx * inv_cnt);
                        }
                } else {
                    for (int n = 0; n < bs; ++n)
                        for (size_t s = 0; s < spatial; ++s) {
                            size_t i = index(n, ch, s);
                            xn->grad[i] += gam * inv * g[i];
                        }
                }
            }
        }
    };
    return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// dropout (inverted: survivors scaled by 1/(1-p) at train time, eval is identity)
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Phase phase, Rng& rng) {
    if (p < 0.0 || p >= 1.0)
        throw ConfigError(strf("dropout: probability %g outside [0,1)", p));
    auto out = make_op_node<T>(x.shape(), {x.node()});
    Node<T>* on = out.get();
    auto xn = x.node();

    if (phase == Phase::eval || p == 0.0) {
        std::copy(x.values().begin(), x.values().end(), out->values.begin());
        if (on->requires_grad) {
            on->backward_op = [on, xn]() {
                const T* g = on->grad.data();
                T* xg = xn->grad.data();
                for (size_t i = 0; i < on->values.size(); ++i) xg[i] += g[i];
            };
        }
        return Tensor<T>(out);
    }

    auto mask = std::make_shared<std::vector<uint8_t>>(x.size());
    const T inv_keep = T(1.0 / (1.0 - p));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const T* xs = x.values().data();
    T* os = out->values.data();
    for (size_t i = 0; i < out->values.size(); ++i) {
        bool keep = uni(rng) >= p;
        (*mask)[i] = keep;
        os[i] = keep ? xs[i] * inv_keep : T(0);
    }
    if (on->requires_grad) {
        on->backward_op = [on, xn, mask, inv_keep]() {
            const T* g = on->grad.data();
            T* xg = xn->grad.data();
            for (size_t i = 0; i < on->values.size(); ++i)
                if ((*mask)[i]) xg[i] += g[i] * inv_keep;
        };
    }
    return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// concat along dim 1 of rank-2 tensors
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ConfigError("concat: empty input list");
    const int bs = xs[0].dim(0);
    int total = 0;
    std::vector<std::shared_ptr<Node<T>>> parents;
    for (const auto& x : xs) {
        if (x.rank() != 2) throw ConfigError("concat: inputs must be rank 2");
        if (x.dim(0) != bs)
            throw ConfigError(strf("concat: batch mismatch %d vs %d", x.dim(0), bs));
        total += x.dim(1);
        parents.push_back(x.node());
    }
    auto out = make_op_node<T>({bs, total}, std::move(parents));
    {
        T* os = out->values.data();
        int off = 0;
        for (const auto& x : xs) {
            const int d = x.dim(1);
            const T* src = x.values().data();
            for (int n = 0; n < bs; ++n)
                std::copy(src + static_cast<size_t>(n) * d, src + static_cast<size_t>(n + 1) * d,
                          os + static_cast<size_t>(n) * total + off);
            off += d;
        }
    }
    Node<T>* on = out.get();
    if (on->requires_grad) {
        on->backward_op = [on, bs, total]() {
            const T* g = on->grad.data();
            int off = 0;
            for (auto& p : on->parents) {
                const int d = p->shape[1];
                if (p->requires_grad) {
                    for (int n = 0; n < bs; ++n) {
                        const T* src = g + static_cast<size_t>(n) * total + off;
                        T* dst = p->grad.data() + static_cast<size_t>(n) * d;
                        for (int j = 0; j < d; ++j) dst[j] += src[j];
                    }
                }
                off += d;
            }
        };
    }
    return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// stop_gradient: forward identity, detached from the graph
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& x) {
    std::vector<T> vals(x.values().begin(), x.values().end());
    return Tensor<T>::from_values(x.shape(), std::move(vals), false);
}

// ---------------------------------------------------------------------------
// reshape (copy) — used to flatten conv features into fc inputs
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> shape) {
    if (numel_of(shape) != x.size())
        throw ConfigError("reshape: element count mismatch");
    auto out = make_op_node<T>(std::move(shape), {x.node()});
    std::copy(x.values().begin(), x.values().end(), out->values.begin());
    Node<T>* on = out.get();
    auto xn = x.node();
    if (on->requires_grad) {
        on->backward_op = [on, xn]() {
            const T* g = on->grad.data();
            T* xg = xn->grad.data();
            for (size_t i = 0; i < on->values.size(); ++i) xg[i] += g[i];
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
    return reshape(x, {x.dim(0), static_cast<int>(x.size()) / x.dim(0)});
}

// ---------------------------------------------------------------------------
// slice_cols: columns [start, start+len) of a rank-2 tensor
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, int start, int len) {
    if (x.rank() != 2) throw ConfigError("slice_cols: input must be rank 2");
    const int bs = x.dim(0), d = x.dim(1);
    if (start < 0 || len <= 0 || start + len > d)
        throw ConfigError(strf("slice_cols: [%d,%d) outside width %d", start, start + len, d));
    auto out = make_op_node<T>({bs, len}, {x.node()});
    const T* xs = x.values().data();
    T* os = out->values.data();
    for (int n = 0; n < bs; ++n)
        std::copy(xs + static_cast<size_t>(n) * d + start,
                  xs + static_cast<size_t>(n) * d + start + len,
                  os + static_cast<size_t>(n) * len);
    Node<T>* on = out.get();
    auto xn = x.node();
    if (on->requires_grad) {
        on->backward_op = [on, xn, bs, d, start, len]() {
            const T* g = on->grad.data();
            T* xg = xn->grad.data();
            for (int n = 0; n < bs; ++n)
                for (int j = 0; j < len; ++j)
                    xg[static_cast<size_t>(n) * d + start + j] +=
                        g[static_cast<size_t>(n) * len + j];
        };
    }
    return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// scalar graph arithmetic for assembling weighted losses
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> add_n(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ConfigError("add_n: empty input list");
    std::vector<std::shared_ptr<Node<T>>> parents;
    for (const auto& x : xs) {
        if (x.shape() != xs[0].shape()) throw ConfigError("add_n: shape mismatch");
        parents.push_back(x.node());
    }
    auto out = make_op_node<T>(xs[0].shape(), std::move(parents));
    std::fill(out->values.begin(), out->values.end(), T(0));
    for (const auto& x : xs) {
        const T* src = x.values().data();
        for (size_t i = 0; i < out->values.size(); ++i) out->values[i] += src[i];
    }
    Node<T>* on = out.get();
    if (on->requires_grad) {
        on->backward_op = [on]() {
            const T* g = on->grad.data();
            for (auto& p : on->parents)
                if (p->requires_grad)
                    for (size_t i = 0; i < on->values.size(); ++i) p->grad[i] += g[i];
        };
    }
    return Tensor<T>(out);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    auto out = make_op_node<T>(x.shape(), {x.node()});
    const T* xs = x.values().data();
    for (size_t i = 0; i < out->values.size(); ++i) out->values[i] = xs[i] * factor;
    Node<T>* on = out.get();
    auto xn = x.node();
    if (on->requires_grad) {
        on->backward_op = [on, xn, factor]() {
            const T* g = on->grad.data();
            T* xg = xn->grad.data();
            for (size_t i = 0; i < on->values.size(); ++i) xg[i] += g[i] * factor;
        };
    }
    return Tensor<T>(out);
}

// ---------------------------------------------------------------------------
// loss nodes. Both average over the batch dimension and sum within a row.
// ---------------------------------------------------------------------------

// -(1/B) sum_b sum_k t[b,k] * log(max(p[b,k], clip))
template <typename T>
Tensor<T> cross_entropy_rows(const Tensor<T>& pred, const Tensor<T>& target,
                             T clip = T(1e-12)) {
    if (pred.rank() != 2 || target.rank() != 2 || pred.shape() != target.shape())
        throw ConfigError("cross_entropy_rows: pred/target must be rank 2 with equal shapes");
    const int bs = pred.dim(0), k = pred.dim(1);
    auto out = make_op_node<T>({1}, {pred.node(), target.node()});
    {
        const T* p = pred.values().data();
        const T* t = target.values().data();
        double acc = 0.0;
        for (size_t i = 0; i < pred.size(); ++i)
            if (t[i] != T(0)) acc -= static_cast<double>(t[i]) *
                std::log(std::max(static_cast<double>(p[i]), static_cast<double>(clip)));
        out->values[0] = static_cast<T>(acc / bs);
    }
    Node<T>* on = out.get();
    auto pn = pred.node();
    auto tn = target.node();
    if (on->requires_grad) {
        on->backward_op = [on, pn, tn, bs, k, clip]() {
            if (!pn->requires_grad) return;
            const T g = on->grad[0];
            const T inv_b = T(1) / static_cast<T>(bs);
            for (size_t i = 0; i < pn->values.size(); ++i) {
                // derivative of log(max(p, clip)) is zero below the clip
                if (tn->values[i] != T(0) && pn->values[i] >= clip)
                    pn->grad[i] -= g * inv_b * tn->values[i] / pn->values[i];
            }
            (void)k;
        };
    }
    return Tensor<T>(out);
}

// (1/B) sum_b sum_k (pred[b,k] - target[b,k])^2
template <typename T>
Tensor<T> sum_squared_error(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape())
        throw ConfigError("sum_squared_error: shape mismatch");
    const int bs = pred.dim(0);
    auto out = make_op_node<T>({1}, {pred.node(), target.node()});
    {
        const T* p = pred.values().data();
        const T* t = target.values().data();
        double acc = 0.0;
        for (size_t i = 0; i < pred.size(); ++i) {
            double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
            acc += d * d;
        }
        out->values[0] = static_cast<T>(acc / bs);
    }
    Node<T>* on = out.get();
    auto pn = pred.node();
    auto tn = target.node();
    if (on->requires_grad) {
        on->backward_op = [on, pn, tn, bs]() {
            const T g = on->grad[0];
            const T inv_b = T(1) / static_cast<T>(bs);
            for (size_t i = 0; i < pn->values.size(); ++i) {
                T d = T(2) * (pn->values[i] - tn->values[i]) * inv_b * g;
                if (pn->requires_grad) pn->grad[i] += d;
                if (tn->requires_grad) tn->grad[i] -= d;
            }
        };
    }
    return Tensor<T>(out);
}

}  // namespace p3d::nn
