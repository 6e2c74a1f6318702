#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "facekit/errors.hpp"
#include "facekit/gemm.hpp"
#include "facekit/tensor.hpp"

namespace facekit {

struct Pad4 {
    int left = 0, right = 0, top = 0, bottom = 0;
};

enum class Mode { kTrain, kInfer };

namespace detail {

// Accepts [C,H,W] or [N,C,H,W]; returns (n, c, h, w) with n=1 for 3-d input.
struct Dims4 {
    int n, c, h, w;
};

inline Dims4 as_nchw(const Tensor& x, const char* what) {
    if (x.shape.size() == 3) return {1, x.shape[0], x.shape[1], x.shape[2]};
    if (x.shape.size() == 4) return {x.shape[0], x.shape[1], x.shape[2], x.shape[3]};
    throw DimensionError(std::string(what) + ": expected a 3-d or 4-d tensor");
}

inline int reflect(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reflection padding. Border values mirror the interior without repeating the
// edge pixel, so the pad must be strictly smaller than the padded dimension.
// ---------------------------------------------------------------------------

inline Tensor reflection_pad2d(const Tensor& x, Pad4 p) {
    const auto d = detail::as_nchw(x, "reflection_pad2d");
    if (p.left < 0 || p.right < 0 || p.top < 0 || p.bottom < 0)
        throw DimensionError("reflection_pad2d: negative pad");
    if (p.left >= d.w || p.right >= d.w || p.top >= d.h || p.bottom >= d.h)
        throw DimensionError("reflection_pad2d: pad too large for input " +
                             std::to_string(d.h) + "x" + std::to_string(d.w));
    const int ho = d.h + p.top + p.bottom;
    const int wo = d.w + p.left + p.right;
    std::vector<int> out_shape = x.shape;
    out_shape[out_shape.size() - 2] = ho;
    out_shape[out_shape.size() - 1] = wo;
    Tensor y(out_shape);
    const int planes = d.n * d.c;
#pragma omp parallel for schedule(static)
    for (int pc = 0; pc < planes; ++pc) {
        const float* src = x.data.data() + static_cast<std::size_t>(pc) * d.h * d.w;
        float* dst = y.data.data() + static_cast<std::size_t>(pc) * ho * wo;
        for (int i = 0; i < ho; ++i) {
            const int si = detail::reflect(i - p.top, d.h);
            const float* srow = src + static_cast<std::size_t>(si) * d.w;
            float* drow = dst + static_cast<std::size_t>(i) * wo;
            for (int j = 0; j < wo; ++j) drow[j] = srow[detail::reflect(j - p.left, d.w)];
        }
    }
    return y;
}

inline Tensor reflection_pad2d_backward(const Tensor& dy, Pad4 p,
                                        const std::vector<int>& x_shape) {
    Tensor dx(x_shape);
    const auto d = detail::as_nchw(dx, "reflection_pad2d_backward");
    const auto dd = detail::as_nchw(dy, "reflection_pad2d_backward");
    if (dd.h != d.h + p.top + p.bottom || dd.w != d.w + p.left + p.right || dd.c != d.c ||
        dd.n != d.n)
        throw DimensionError("reflection_pad2d_backward: gradient shape mismatch");
    const int planes = d.n * d.c;
#pragma omp parallel for schedule(static)
    for (int pc = 0; pc < planes; ++pc) {
        const float* gsrc = dy.data.data() + static_cast<std::size_t>(pc) * dd.h * dd.w;
        float* gdst = dx.data.data() + static_cast<std::size_t>(pc) * d.h * d.w;
        for (int i = 0; i < dd.h; ++i) {
            const int si = detail::reflect(i - p.top, d.h);
            const float* grow = gsrc + static_cast<std::size_t>(i) * dd.w;
            float* drow = gdst + static_cast<std::size_t>(si) * d.w;
            for (int j = 0; j < dd.w; ++j) drow[detail::reflect(j - p.left, d.w)] += grow[j];
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// 3x3 stride-1 valid cross-correlation with per-channel bias. Channel counts
// in this network are small, so a direct sweep beats im2col and keeps the
// channel-major layout.
// ---------------------------------------------------------------------------

inline void check_conv_args(const detail::Dims4& d, const Tensor& w, const Tensor& b) {
    if (w.shape.size() != 4 || w.shape[2] != 3 || w.shape[3] != 3)
        throw DimensionError("conv2d: weight must be [Cout,Cin,3,3]");
    if (w.shape[1] != d.c)
        throw DimensionError("conv2d: input has " + std::to_string(d.c) +
                             " channels, weight expects " + std::to_string(w.shape[1]));
    if (b.shape.size() != 1 || b.shape[0] != w.shape[0])
        throw DimensionError("conv2d: bias must be [Cout]");
    if (d.h < 3 || d.w < 3) throw DimensionError("conv2d: kernel larger than input");
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    const auto d = detail::as_nchw(x, "conv2d");
    check_conv_args(d, w, b);
    const int cout = w.shape[0], cin = d.c;
    const int ho = d.h - 2, wo = d.w - 2;
    std::vector<int> out_shape =
        x.shape.size() == 3 ? std::vector<int>{cout, ho, wo} : std::vector<int>{d.n, cout, ho, wo};
    Tensor y(out_shape);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.n; ++n) {
        for (int co = 0; co < cout; ++co) {
            float* out_plane = y.data.data() + (static_cast<std::size_t>(n) * cout + co) * ho * wo;
            std::fill(out_plane, out_plane + static_cast<std::size_t>(ho) * wo,
                      b.data[static_cast<std::size_t>(co)]);
            for (int ci = 0; ci < cin; ++ci) {
                const float* in_plane =
                    x.data.data() + (static_cast<std::size_t>(n) * cin + ci) * d.h * d.w;
                const float* wk = w.data.data() + ((static_cast<std::size_t>(co) * cin + ci) * 9);
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        const float wv = wk[ky * 3 + kx];
                        for (int i = 0; i < ho; ++i) {
                            const float* irow =
                                in_plane + static_cast<std::size_t>(i + ky) * d.w + kx;
                            float* orow = out_plane + static_cast<std::size_t>(i) * wo;
                            for (int j = 0; j < wo; ++j) orow[j] += wv * irow[j];
                        }
                    }
                }
            }
        }
    }
    return y;
}

// Returns dx; accumulates into w.grad / b.grad.
inline Tensor conv2d_backward(const Tensor& x, Tensor& w, Tensor& b, const Tensor& dy) {
    const auto d = detail::as_nchw(x, "conv2d_backward");
    check_conv_args(d, w, b);
    const auto g = detail::as_nchw(dy, "conv2d_backward");
    const int cout = w.shape[0], cin = d.c;
    const int ho = d.h - 2, wo = d.w - 2;
    if (g.n != d.n || g.c != cout || g.h != ho || g.w != wo)
        throw DimensionError("conv2d_backward: gradient shape mismatch");
    w.ensure_grad();
    b.ensure_grad();
    Tensor dx(x.shape);

    // weight gradient: one (co,ci,ky,kx) cell per task, batch summed in order
    const int cells = cout * cin * 9;
#pragma omp parallel for schedule(static)
    for (int cell = 0; cell < cells; ++cell) {
        const int co = cell / (cin * 9);
        const int ci = (cell / 9) % cin;
        const int ky = (cell % 9) / 3;
        const int kx = cell % 3;
        float acc = 0.0f;
        for (int n = 0; n < d.n; ++n) {
            const float* gp = dy.data.data() + (static_cast<std::size_t>(n) * cout + co) * ho * wo;
            const float* ip = x.data.data() + (static_cast<std::size_t>(n) * cin + ci) * d.h * d.w;
            for (int i = 0; i < ho; ++i)
                acc += dot(gp + static_cast<std::size_t>(i) * wo,
                           ip + static_cast<std::size_t>(i + ky) * d.w + kx, wo);
        }
        w.grad[static_cast<std::size_t>(cell)] += acc;
    }

#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
        float acc = 0.0f;
        for (int n = 0; n < d.n; ++n) {
            const float* gp = dy.data.data() + (static_cast<std::size_t>(n) * cout + co) * ho * wo;
            for (std::size_t i = 0; i < static_cast<std::size_t>(ho) * wo; ++i) acc += gp[i];
        }
        b.grad[static_cast<std::size_t>(co)] += acc;
    }

    // data gradient: scatter each dy cell through the kernel
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.n; ++n) {
        for (int ci = 0; ci < cin; ++ci) {
            float* dxp = dx.data.data() + (static_cast<std::size_t>(n) * cin + ci) * d.h * d.w;
            for (int co = 0; co < cout; ++co) {
                const float* gp =
                    dy.data.data() + (static_cast<std::size_t>(n) * cout + co) * ho * wo;
                const float* wk = w.data.data() + ((static_cast<std::size_t>(co) * cin + ci) * 9);
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        const float wv = wk[ky * 3 + kx];
                        for (int i = 0; i < ho; ++i) {
                            const float* grow = gp + static_cast<std::size_t>(i) * wo;
                            float* drow = dxp + static_cast<std::size_t>(i + ky) * d.w + kx;
                            for (int j = 0; j < wo; ++j) drow[j] += wv * grow[j];
                        }
                    }
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// ReLU. Subgradient at 0 is 0, so masking on the output is exact.
// ---------------------------------------------------------------------------

inline Tensor relu(const Tensor& x) {
    Tensor y = x;
    y.grad.clear();
    const std::size_t n = y.data.size();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        if (y.data[i] < 0.0f) y.data[i] = 0.0f;
    return y;
}

inline Tensor relu_backward(const Tensor& y, const Tensor& dy) {
    if (y.shape != dy.shape) throw DimensionError("relu_backward: shape mismatch");
    Tensor dx(dy.shape);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(dy.data.size()); ++i)
        dx.data[i] = y.data[i] > 0.0f ? dy.data[i] : 0.0f;
    return dx;
}

// ---------------------------------------------------------------------------
// Per-channel batch normalization over [N,C,H,W].
//
// Train mode normalizes with biased batch statistics and folds the unbiased
// batch variance into the running estimate:
//     running <- (1 - momentum) * running + momentum * batch
// Infer mode normalizes with the running estimates and needs no cache.
// ---------------------------------------------------------------------------

struct BatchNormState {
    Tensor gamma, beta;
    std::vector<float> running_mean, running_var;
    float eps = 1e-5f;
    float momentum = 0.1f;
    Mode mode = Mode::kTrain;

    explicit BatchNormState(int channels)
        : gamma(Tensor({channels}, 1.0f)),
          beta(Tensor({channels}, 0.0f)),
          running_mean(static_cast<std::size_t>(channels), 0.0f),
          running_var(static_cast<std::size_t>(channels), 1.0f) {}

    int channels() const { return gamma.shape[0]; }

    void validate() const {
        if (!(eps > 0.0f)) throw DimensionError("batchnorm: eps must be > 0");
        if (!(momentum > 0.0f && momentum < 1.0f))
            throw DimensionError("batchnorm: momentum must be in (0,1)");
        for (float v : running_var)
            if (v < 0.0f) throw DimensionError("batchnorm: running_var must be >= 0");
    }
};

struct BatchNormCache {
    std::vector<float> xhat;    // normalized activations, same layout as input
    std::vector<float> invstd;  // per channel
};

// Inference-mode normalization with the running estimates; touches nothing
// in the state, so it is safe to share across threads.
inline Tensor batchnorm2d_infer(const Tensor& x, const BatchNormState& st) {
    if (x.shape.size() != 4) throw DimensionError("batchnorm2d: expected [N,C,H,W]");
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    if (c != st.channels())
        throw DimensionError("batchnorm2d: input has " + std::to_string(c) +
                             " channels, state has " + std::to_string(st.channels()));
    st.validate();
    const std::size_t spatial = static_cast<std::size_t>(h) * w;
    Tensor y(x.shape);
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            const float scale = st.gamma.data[ci] / std::sqrt(st.running_var[ci] + st.eps);
            const float shift = st.beta.data[ci] - scale * st.running_mean[ci];
            const float* src = x.data.data() + (static_cast<std::size_t>(ni) * c + ci) * spatial;
            float* dst = y.data.data() + (static_cast<std::size_t>(ni) * c + ci) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) dst[i] = scale * src[i] + shift;
        }
    }
    return y;
}

inline Tensor batchnorm2d(const Tensor& x, BatchNormState& st, BatchNormCache* cache = nullptr) {
    if (st.mode == Mode::kInfer) return batchnorm2d_infer(x, st);
    if (x.shape.size() != 4) throw DimensionError("batchnorm2d: expected [N,C,H,W]");
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    if (c != st.channels())
        throw DimensionError("batchnorm2d: input has " + std::to_string(c) +
                             " channels, state has " + std::to_string(st.channels()));
    st.validate();
    const std::size_t spatial = static_cast<std::size_t>(h) * w;
    const std::size_t per_channel = static_cast<std::size_t>(n) * spatial;
    Tensor y(x.shape);

    if (per_channel < 2)
        throw DimensionError("batchnorm2d: train mode needs at least 2 values per channel");
    if (cache) {
        cache->xhat.resize(x.data.size());
        cache->invstd.resize(static_cast<std::size_t>(c));
    }
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < c; ++ci) {
        float sum = 0.0f;
        for (int ni = 0; ni < n; ++ni) {
            const float* src = x.data.data() + (static_cast<std::size_t>(ni) * c + ci) * spatial;
            float s = 0.0f;
#pragma omp simd reduction(+ : s)
            for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(spatial); ++i) s += src[i];
            sum += s;
        }
        const float mean = sum / static_cast<float>(per_channel);
        float vsum = 0.0f;
        for (int ni = 0; ni < n; ++ni) {
            const float* src = x.data.data() + (static_cast<std::size_t>(ni) * c + ci) * spatial;
            float s = 0.0f;
#pragma omp simd reduction(+ : s)
            for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(spatial); ++i) {
                const float d = src[i] - mean;
                s += d * d;
            }
            vsum += s;
        }
        const float var_biased = vsum / static_cast<float>(per_channel);
        const float var_unbiased = vsum / static_cast<float>(per_channel - 1);
        const float invstd = 1.0f / std::sqrt(var_biased + st.eps);
        const float g = st.gamma.data[ci], bshift = st.beta.data[ci];
        for (int ni = 0; ni < n; ++ni) {
            const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * spatial;
            const float* src = x.data.data() + off;
            float* dst = y.data.data() + off;
            if (cache) {
                float* xh = cache->xhat.data() + off;
                for (std::size_t i = 0; i < spatial; ++i) {
                    xh[i] = (src[i] - mean) * invstd;
                    dst[i] = g * xh[i] + bshift;
                }
            } else {
                for (std::size_t i = 0; i < spatial; ++i)
                    dst[i] = g * (src[i] - mean) * invstd + bshift;
            }
        }
        if (cache) cache->invstd[ci] = invstd;
        st.running_mean[ci] = (1.0f - st.momentum) * st.running_mean[ci] + st.momentum * mean;
        st.running_var[ci] = (1.0f - st.momentum) * st.running_var[ci] + st.momentum * var_unbiased;
    }
    return y;
}

// Train-mode backward. Accumulates into st.gamma.grad / st.beta.grad.
inline Tensor batchnorm2d_backward(const Tensor& dy, BatchNormState& st,
                                   const BatchNormCache& cache) {
    if (dy.shape.size() != 4) throw DimensionError("batchnorm2d_backward: expected [N,C,H,W]");
    const int n = dy.shape[0], c = dy.shape[1], h = dy.shape[2], w = dy.shape[3];
    if (c != st.channels() || cache.xhat.size() != dy.data.size())
        throw DimensionError("batchnorm2d_backward: cache/state mismatch");
    st.gamma.ensure_grad();
    st.beta.ensure_grad();
    Tensor dx(dy.shape);
    const std::size_t spatial = static_cast<std::size_t>(h) * w;
    const float count = static_cast<float>(static_cast<std::size_t>(n) * spatial);
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < c; ++ci) {
        float sum_dy = 0.0f, sum_dy_xhat = 0.0f;
        for (int ni = 0; ni < n; ++ni) {
            const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * spatial;
            const float* g = dy.data.data() + off;
            const float* xh = cache.xhat.data() + off;
            float s0 = 0.0f, s1 = 0.0f;
#pragma omp simd reduction(+ : s0, s1)
            for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(spatial); ++i) {
                s0 += g[i];
                s1 += g[i] * xh[i];
            }
            sum_dy += s0;
            sum_dy_xhat += s1;
        }
        st.beta.grad[ci] += sum_dy;
        st.gamma.grad[ci] += sum_dy_xhat;
        const float mean_dy = sum_dy / count;
        const float mean_dy_xhat = sum_dy_xhat / count;
        const float scale = st.gamma.data[ci] * cache.invstd[ci];
        for (int ni = 0; ni < n; ++ni) {
            const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * spatial;
            const float* g = dy.data.data() + off;
            const float* xh = cache.xhat.data() + off;
            float* d = dx.data.data() + off;
            for (std::size_t i = 0; i < spatial; ++i)
                d[i] = scale * (g[i] - mean_dy - xh[i] * mean_dy_xhat);
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Fully connected layer: y = x * W^T + b with x [N,Din], W [Dout,Din].
// ---------------------------------------------------------------------------

inline void check_linear_args(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape.size() != 2) throw DimensionError("linear: input must be [N,Din]");
    if (w.shape.size() != 2) throw DimensionError("linear: weight must be [Dout,Din]");
    if (x.shape[1] != w.shape[1])
        throw DimensionError("linear: input dim " + std::to_string(x.shape[1]) +
                             " does not match weight dim " + std::to_string(w.shape[1]));
    if (b.shape.size() != 1 || b.shape[0] != w.shape[0])
        throw DimensionError("linear: bias must be [Dout]");
}

inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    check_linear_args(x, w, b);
    const int n = x.shape[0], din = x.shape[1], dout = w.shape[0];
    Tensor y({n, dout});
    if (n <= 4) {
        // small batches: plain dot products, weights streamed once
#pragma omp parallel for collapse(2) schedule(static)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < dout; ++j)
                y.data[static_cast<std::size_t>(i) * dout + j] =
                    dot(x.data.data() + static_cast<std::size_t>(i) * din,
                        w.data.data() + static_cast<std::size_t>(j) * din, din) +
                    b.data[j];
        return y;
    }
    std::vector<float> xt(static_cast<std::size_t>(din) * n);
    transpose(x.data.data(), xt.data(), n, din);
    std::vector<float> yt(static_cast<std::size_t>(dout) * n);
    gemm(w.data.data(), xt.data(), yt.data(), dout, n, din);
    for (int j = 0; j < dout; ++j) {
        const float bj = b.data[j];
        for (int i = 0; i < n; ++i) yt[static_cast<std::size_t>(j) * n + i] += bj;
    }
    transpose(yt.data(), y.data.data(), dout, n);
    return y;
}

// Returns dx; accumulates into w.grad / b.grad.
inline Tensor linear_backward(const Tensor& x, Tensor& w, Tensor& b, const Tensor& dy) {
    check_linear_args(x, w, b);
    const int n = x.shape[0], din = x.shape[1], dout = w.shape[0];
    require_shape(dy, {n, dout}, "linear_backward gradient");
    w.ensure_grad();
    b.ensure_grad();
    Tensor dx({n, din});
    gemm(dy.data.data(), w.data.data(), dx.data.data(), n, din, dout);
    std::vector<float> dyt(static_cast<std::size_t>(dout) * n);
    transpose(dy.data.data(), dyt.data(), n, dout);
    gemm(dyt.data(), x.data.data(), w.grad.data(), dout, din, n, /*accumulate=*/true);
    for (int i = 0; i < n; ++i) {
        const float* row = dy.data.data() + static_cast<std::size_t>(i) * dout;
        for (int j = 0; j < dout; ++j) b.grad[j] += row[j];
    }
    return dx;
}

}  // namespace facekit
