#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "triview/errors.hpp"
#include "triview/rng.hpp"
#include "triview/tensor.hpp"

namespace triview {

template <class T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;  // col-major
template <class T>
using EMap = Eigen::Map<EMat<T>>;
template <class T>
using ECMap = Eigen::Map<const EMat<T>>;

// Scratch buffers reused across layer calls; bounds im2col memory.
template <class T>
struct Workspace {
    std::vector<T> cols;
    std::vector<T> gcols;

    static constexpr index_t kMaxTileElems = index_t{1} << 23;  // 8M scalars

    T* cols_buf(index_t n) {
        if (static_cast<index_t>(cols.size()) < n) cols.resize(static_cast<std::size_t>(n));
        return cols.data();
    }
    T* gcols_buf(index_t n) {
        if (static_cast<index_t>(gcols.size()) < n) gcols.resize(static_cast<std::size_t>(n));
        return gcols.data();
    }
};

namespace nn {

// ---------------------------------------------------------------------------
// 2D convolution, stride 1, same padding (odd kernel). Weights are stored
// (out_ch, in_ch, k, k) row-major, which doubles as a col-major
// (K = in_ch*k*k, out_ch) matrix view for the GEMM.
// ---------------------------------------------------------------------------
template <class T>
struct Conv2d {
    int in_ch = 0, out_ch = 0, ksize = 1;
    tensor<T> w, b;
    tensor<T> gw, gb;

    void init(int in_c, int out_c, int k, rng_t& rng) {
        in_ch = in_c;
        out_ch = out_c;
        ksize = k;
        w = tensor<T>({out_c, in_c, k, k});
        b = tensor<T>({out_c});
        gw = tensor<T>({out_c, in_c, k, k});
        gb = tensor<T>({out_c});
        // Fan-in scaled normal (He); biases zero.
        const double fan_in = static_cast<double>(in_c) * k * k;
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (index_t i = 0; i < w.size(); ++i) w(i) = static_cast<T>(dist(rng));
    }

    index_t cols_k() const { return static_cast<index_t>(in_ch) * ksize * ksize; }

    index_t param_count() const { return w.size() + b.size(); }

    void zero_grad() {
        gw.zero();
        gb.zero();
    }

    // Fill col-major (rows, K) im2col tile for output rows [y0, y1).
    void im2col_tile(const T* x, index_t h, index_t wd, index_t y0, index_t y1,
                     T* cols) const {
        const index_t pad = ksize / 2;
        const index_t rows = (y1 - y0) * wd;
        for (int ci = 0; ci < in_ch; ++ci) {
            const T* plane = x + static_cast<index_t>(ci) * h * wd;
            for (int ky = 0; ky < ksize; ++ky) {
                for (int kx = 0; kx < ksize; ++kx) {
                    const index_t k = (static_cast<index_t>(ci) * ksize + ky) * ksize + kx;
                    T* col = cols + k * rows;
                    const index_t dx = kx - pad;
                    const index_t x0 = std::max<index_t>(0, -dx);
                    const index_t x1 = std::min<index_t>(wd, wd - dx);
                    for (index_t oy = y0; oy < y1; ++oy) {
                        T* dst = col + (oy - y0) * wd;
                        const index_t iy = oy + ky - pad;
                        if (iy < 0 || iy >= h || x0 >= x1) {
                            std::memset(dst, 0, static_cast<std::size_t>(wd) * sizeof(T));
                            continue;
                        }
                        if (x0 > 0) std::memset(dst, 0, static_cast<std::size_t>(x0) * sizeof(T));
                        std::memcpy(dst + x0, plane + iy * wd + x0 + dx,
                                    static_cast<std::size_t>(x1 - x0) * sizeof(T));
                        if (x1 < wd)
                            std::memset(dst + x1, 0,
                                        static_cast<std::size_t>(wd - x1) * sizeof(T));
                    }
                }
            }
        }
    }

    // Scatter-add of a (rows, K) gradient tile back onto the input image.
    void col2im_tile_add(const T* gcols, index_t h, index_t wd, index_t y0, index_t y1,
                         T* gx) const {
        const index_t pad = ksize / 2;
        const index_t rows = (y1 - y0) * wd;
        for (int ci = 0; ci < in_ch; ++ci) {
            T* plane = gx + static_cast<index_t>(ci) * h * wd;
            for (int ky = 0; ky < ksize; ++ky) {
                for (int kx = 0; kx < ksize; ++kx) {
                    const index_t k = (static_cast<index_t>(ci) * ksize + ky) * ksize + kx;
                    const T* col = gcols + k * rows;
                    const index_t dx = kx - pad;
                    const index_t x0 = std::max<index_t>(0, -dx);
                    const index_t x1 = std::min<index_t>(wd, wd - dx);
                    if (x0 >= x1) continue;
                    for (index_t oy = y0; oy < y1; ++oy) {
                        const index_t iy = oy + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const T* srow = col + (oy - y0) * wd + x0;
                        T* drow = plane + iy * wd + x0 + dx;
                        for (index_t i = 0; i < x1 - x0; ++i) drow[i] += srow[i];
                    }
                }
            }
        }
    }

    index_t tile_rows(index_t h, index_t wd) const {
        const index_t k = std::max<index_t>(1, cols_k());
        index_t rows = std::max<index_t>(1, Workspace<T>::kMaxTileElems / (k * wd));
        return std::min(rows, h) * wd;  // whole output rows
    }

    void forward(const tensor<T>& x, tensor<T>& y, Workspace<T>& ws) const {
        const index_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
        if (x.dim(1) != in_ch) throw ArgumentError("conv: channel mismatch");
        if (!(y.rank() == 4 && y.dim(0) == n && y.dim(1) == out_ch && y.dim(2) == h &&
              y.dim(3) == wd))
            y = tensor<T>({n, out_ch, h, wd});
        const index_t hw = h * wd, k = cols_k();
        ECMap<T> wt(w.data(), k, out_ch);

        for (index_t s = 0; s < n; ++s) {
            const T* xs = x.data() + s * in_ch * hw;
            EMap<T> ym(y.data() + s * out_ch * hw, hw, out_ch);
            if (ksize == 1) {
                ECMap<T> xm(xs, hw, in_ch);
                ym.noalias() = xm * wt;
            } else {
                const index_t step = tile_rows(h, wd) / wd;
                T* cols = ws.cols_buf(step * wd * k);
                for (index_t y0 = 0; y0 < h; y0 += step) {
                    const index_t y1 = std::min(h, y0 + step);
                    const index_t rows = (y1 - y0) * wd;
                    im2col_tile(xs, h, wd, y0, y1, cols);
                    ECMap<T> cm(cols, rows, k);
                    ym.middleRows(y0 * wd, rows).noalias() = cm * wt;
                }
            }
            for (int c = 0; c < out_ch; ++c) ym.col(c).array() += b(c);
        }
    }

    // Accumulates gw/gb; writes gx (overwrites) when non-null.
    void backward(const tensor<T>& x, const tensor<T>& gy, tensor<T>* gx,
                  Workspace<T>& ws) {
        const index_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
        const index_t hw = h * wd, k = cols_k();
        if (gx && !gx->same_shape(x)) *gx = tensor<T>(x.shape());
        if (gx) gx->zero();
        ECMap<T> wt(w.data(), k, out_ch);
        EMap<T> gwm(gw.data(), k, out_ch);

        for (index_t s = 0; s < n; ++s) {
            const T* xs = x.data() + s * in_ch * hw;
            ECMap<T> gym(gy.data() + s * out_ch * hw, hw, out_ch);
            if (ksize == 1) {
                ECMap<T> xm(xs, hw, in_ch);
                gwm.noalias() += xm.transpose() * gym;
                if (gx) {
                    EMap<T> gxm(gx->data() + s * in_ch * hw, hw, in_ch);
                    gxm.noalias() = gym * wt.transpose();
                }
            } else {
                const index_t step = tile_rows(h, wd) / wd;
                T* cols = ws.cols_buf(step * wd * k);
                T* gcols = ws.gcols_buf(step * wd * k);
                for (index_t y0 = 0; y0 < h; y0 += step) {
                    const index_t y1 = std::min(h, y0 + step);
                    const index_t rows = (y1 - y0) * wd;
                    im2col_tile(xs, h, wd, y0, y1, cols);
                    ECMap<T> cm(cols, rows, k);
                    auto gyb = gym.middleRows(y0 * wd, rows);
                    gwm.noalias() += cm.transpose() * gyb;
                    if (gx) {
                        EMap<T> gcm(gcols, rows, k);
                        gcm.noalias() = gyb * wt.transpose();
                        col2im_tile_add(gcols, h, wd, y0, y1,
                                        gx->data() + s * in_ch * hw);
                    }
                }
            }
            for (int c = 0; c < out_ch; ++c) gb(c) += gym.col(c).sum();
        }
    }
};

// ---------------------------------------------------------------------------
// Batch normalization over (N, H, W) per channel. Normalization uses biased
// batch variance; running variance keeps the unbiased estimate.
// ---------------------------------------------------------------------------
template <class T>
struct BatchNorm2d {
    int ch = 0;
    double momentum = 0.1;
    double eps = 1e-5;
    tensor<T> gamma, beta, g_gamma, g_beta;
    tensor<T> run_mean, run_var;

    void init(int c) {
        ch = c;
        gamma = tensor<T>({c});
        beta = tensor<T>({c});
        g_gamma = tensor<T>({c});
        g_beta = tensor<T>({c});
        run_mean = tensor<T>({c});
        run_var = tensor<T>({c});
        gamma.fill(T{1});
        run_var.fill(T{1});
    }

    index_t param_count() const { return gamma.size() + beta.size(); }

    void zero_grad() {
        g_gamma.zero();
        g_beta.zero();
    }

    void forward_train(const tensor<T>& x, tensor<T>& y, std::vector<double>& save_mean,
                       std::vector<double>& save_invstd) {
        const index_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
        const index_t m = n * hw;
        if (!y.same_shape(x)) y = tensor<T>(x.shape());
        save_mean.assign(static_cast<std::size_t>(ch), 0.0);
        save_invstd.assign(static_cast<std::size_t>(ch), 0.0);
        for (int c = 0; c < ch; ++c) {
            double sum = 0.0, sq = 0.0;
            for (index_t s = 0; s < n; ++s) {
                const T* p = x.data() + (s * ch + c) * hw;
                for (index_t i = 0; i < hw; ++i) {
                    const double v = static_cast<double>(p[i]);
                    sum += v;
                    sq += v * v;
                }
            }
            const double mean = sum / static_cast<double>(m);
            double var = sq / static_cast<double>(m) - mean * mean;
            if (var < 0.0) var = 0.0;
            const double invstd = 1.0 / std::sqrt(var + eps);
            save_mean[static_cast<std::size_t>(c)] = mean;
            save_invstd[static_cast<std::size_t>(c)] = invstd;

            const double unbiased = m > 1 ? var * static_cast<double>(m) /
                                                static_cast<double>(m - 1)
                                          : var;
            run_mean(c) = static_cast<T>((1.0 - momentum) *
                                             static_cast<double>(run_mean(c)) +
                                         momentum * mean);
            run_var(c) = static_cast<T>(
                (1.0 - momentum) * static_cast<double>(run_var(c)) + momentum * unbiased);

            const T a = static_cast<T>(static_cast<double>(gamma(c)) * invstd);
            const T bb = static_cast<T>(static_cast<double>(beta(c)) -
                                        static_cast<double>(gamma(c)) * invstd * mean);
            for (index_t s = 0; s < n; ++s) {
                const T* p = x.data() + (s * ch + c) * hw;
                T* q = y.data() + (s * ch + c) * hw;
                for (index_t i = 0; i < hw; ++i) q[i] = a * p[i] + bb;
            }
        }
    }

    void forward_infer(const tensor<T>& x, tensor<T>& y) const {
        const index_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
        if (!y.same_shape(x)) y = tensor<T>(x.shape());
        for (int c = 0; c < ch; ++c) {
            const double invstd = 1.0 / std::sqrt(static_cast<double>(run_var(c)) + eps);
            const T a = static_cast<T>(static_cast<double>(gamma(c)) * invstd);
            const T bb = static_cast<T>(static_cast<double>(beta(c)) -
                                        static_cast<double>(gamma(c)) * invstd *
                                            static_cast<double>(run_mean(c)));
            for (index_t s = 0; s < n; ++s) {
                const T* p = x.data() + (s * ch + c) * hw;
                T* q = y.data() + (s * ch + c) * hw;
                for (index_t i = 0; i < hw; ++i) q[i] = a * p[i] + bb;
            }
        }
    }

    void backward(const tensor<T>& x, const std::vector<double>& mean,
                  const std::vector<double>& invstd, const tensor<T>& gy, tensor<T>* gx) {
        const index_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
        const index_t m = n * hw;
        if (gx && !gx->same_shape(x)) *gx = tensor<T>(x.shape());
        for (int c = 0; c < ch; ++c) {
            const double mu = mean[static_cast<std::size_t>(c)];
            const double is = invstd[static_cast<std::size_t>(c)];
            double sum_g = 0.0, sum_gx = 0.0;
            for (index_t s = 0; s < n; ++s) {
                const T* px = x.data() + (s * ch + c) * hw;
                const T* pg = gy.data() + (s * ch + c) * hw;
                for (index_t i = 0; i < hw; ++i) {
                    const double g = static_cast<double>(pg[i]);
                    sum_g += g;
                    sum_gx += g * (static_cast<double>(px[i]) - mu) * is;
                }
            }
            g_beta(c) += static_cast<T>(sum_g);
            g_gamma(c) += static_cast<T>(sum_gx);
            if (!gx) continue;
            const double gsc = static_cast<double>(gamma(c)) * is;
            const double mg = sum_g / static_cast<double>(m);
            const double mgx = sum_gx / static_cast<double>(m);
            for (index_t s = 0; s < n; ++s) {
                const T* px = x.data() + (s * ch + c) * hw;
                const T* pg = gy.data() + (s * ch + c) * hw;
                T* pq = gx->data() + (s * ch + c) * hw;
                for (index_t i = 0; i < hw; ++i) {
                    const double xh = (static_cast<double>(px[i]) - mu) * is;
                    pq[i] = static_cast<T>(gsc * (static_cast<double>(pg[i]) - mg -
                                                  xh * mgx));
                }
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Elementwise / structural ops.
// ---------------------------------------------------------------------------
template <class T>
void relu_inplace(tensor<T>& x) {
    T* p = x.data();
    for (index_t i = 0; i < x.size(); ++i)
        if (p[i] < T{}) p[i] = T{};
}

// Uses the forward output: out > 0 marks the pass-through positions.
template <class T>
void relu_backward_inplace(const tensor<T>& out, tensor<T>& g) {
    const T* o = out.data();
    T* p = g.data();
    for (index_t i = 0; i < g.size(); ++i)
        if (!(o[i] > T{})) p[i] = T{};
}

// 2x2 max pooling, stride 2. Ties keep the first maximum in scan order so
// forward and backward stay deterministic.
template <class T>
void maxpool2_forward(const tensor<T>& x, tensor<T>& y, tensor<std::uint8_t>& idx) {
    const index_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0) throw ArgumentError("maxpool: odd spatial size");
    y = tensor<T>({n, c, h / 2, w / 2});
    idx = tensor<std::uint8_t>({n, c, h / 2, w / 2});
    const index_t planes = n * c;
    for (index_t pl = 0; pl < planes; ++pl) {
        const T* xs = x.data() + pl * h * w;
        T* ys = y.data() + pl * (h / 2) * (w / 2);
        std::uint8_t* is = idx.data() + pl * (h / 2) * (w / 2);
        for (index_t oy = 0; oy < h / 2; ++oy) {
            const T* r0 = xs + 2 * oy * w;
            const T* r1 = r0 + w;
            for (index_t ox = 0; ox < w / 2; ++ox) {
                const T v[4] = {r0[2 * ox], r0[2 * ox + 1], r1[2 * ox], r1[2 * ox + 1]};
                int best = 0;
                for (int i = 1; i < 4; ++i)
                    if (v[i] > v[best]) best = i;
                ys[oy * (w / 2) + ox] = v[best];
                is[oy * (w / 2) + ox] = static_cast<std::uint8_t>(best);
            }
        }
    }
}

template <class T>
void maxpool2_backward(const tensor<std::uint8_t>& idx, const tensor<T>& gy,
                       tensor<T>& gx, index_t h, index_t w) {
    const index_t n = gy.dim(0), c = gy.dim(1);
    gx = tensor<T>({n, c, h, w});
    const index_t planes = n * c;
    for (index_t pl = 0; pl < planes; ++pl) {
        const T* gs = gy.data() + pl * (h / 2) * (w / 2);
        const std::uint8_t* is = idx.data() + pl * (h / 2) * (w / 2);
        T* xs = gx.data() + pl * h * w;
        for (index_t oy = 0; oy < h / 2; ++oy) {
            for (index_t ox = 0; ox < w / 2; ++ox) {
                const int b = is[oy * (w / 2) + ox];
                const index_t iy = 2 * oy + b / 2;
                const index_t ix = 2 * ox + b % 2;
                xs[iy * w + ix] += gs[oy * (w / 2) + ox];
            }
        }
    }
}

// Nearest-neighbor 2x upsampling.
template <class T>
void upsample2_forward(const tensor<T>& x, tensor<T>& y) {
    const index_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    y = tensor<T>({n, c, 2 * h, 2 * w});
    const index_t planes = n * c;
    for (index_t pl = 0; pl < planes; ++pl) {
        const T* xs = x.data() + pl * h * w;
        T* ys = y.data() + pl * 4 * h * w;
        for (index_t iy = 0; iy < h; ++iy) {
            T* r0 = ys + 2 * iy * 2 * w;
            T* r1 = r0 + 2 * w;
            for (index_t ix = 0; ix < w; ++ix) {
                const T v = xs[iy * w + ix];
                r0[2 * ix] = v;
                r0[2 * ix + 1] = v;
                r1[2 * ix] = v;
                r1[2 * ix + 1] = v;
            }
        }
    }
}

template <class T>
void upsample2_backward(const tensor<T>& gy, tensor<T>& gx) {
    const index_t n = gy.dim(0), c = gy.dim(1), h2 = gy.dim(2), w2 = gy.dim(3);
    const index_t h = h2 / 2, w = w2 / 2;
    gx = tensor<T>({n, c, h, w});
    const index_t planes = n * c;
    for (index_t pl = 0; pl < planes; ++pl) {
        const T* gs = gy.data() + pl * h2 * w2;
        T* xs = gx.data() + pl * h * w;
        for (index_t iy = 0; iy < h; ++iy) {
            const T* r0 = gs + 2 * iy * w2;
            const T* r1 = r0 + w2;
            for (index_t ix = 0; ix < w; ++ix)
                xs[iy * w + ix] =
                    r0[2 * ix] + r0[2 * ix + 1] + r1[2 * ix] + r1[2 * ix + 1];
        }
    }
}

// Channel concatenation [a; b] and the matching gradient split.
template <class T>
void concat_channels(const tensor<T>& a, const tensor<T>& b, tensor<T>& y) {
    const index_t n = a.dim(0), hw = a.dim(2) * a.dim(3);
    const index_t ca = a.dim(1), cb = b.dim(1);
    if (b.dim(0) != n || b.dim(2) != a.dim(2) || b.dim(3) != a.dim(3))
        throw ArgumentError("concat: spatial/batch mismatch");
    y = tensor<T>({n, ca + cb, a.dim(2), a.dim(3)});
    for (index_t s = 0; s < n; ++s) {
        std::copy_n(a.data() + s * ca * hw, ca * hw, y.data() + s * (ca + cb) * hw);
        std::copy_n(b.data() + s * cb * hw, cb * hw,
                    y.data() + s * (ca + cb) * hw + ca * hw);
    }
}

template <class T>
void split_channels(const tensor<T>& gy, tensor<T>& ga, tensor<T>& gb, index_t ca,
                    index_t cb) {
    const index_t n = gy.dim(0), hw = gy.dim(2) * gy.dim(3);
    ga = tensor<T>({n, ca, gy.dim(2), gy.dim(3)});
    gb = tensor<T>({n, cb, gy.dim(2), gy.dim(3)});
    for (index_t s = 0; s < n; ++s) {
        std::copy_n(gy.data() + s * (ca + cb) * hw, ca * hw, ga.data() + s * ca * hw);
        std::copy_n(gy.data() + s * (ca + cb) * hw + ca * hw, cb * hw,
                    gb.data() + s * cb * hw);
    }
}

// Per-pixel softmax over the channel axis of (N, C, H, W).
template <class T>
void softmax_channels(const tensor<T>& logits, tensor<T>& probs) {
    const index_t n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
    if (!probs.same_shape(logits)) probs = tensor<T>(logits.shape());
    for (index_t s = 0; s < n; ++s) {
        const T* xs = logits.data() + s * c * hw;
        T* ps = probs.data() + s * c * hw;
        for (index_t i = 0; i < hw; ++i) {
            T mx = xs[i];
            for (index_t k = 1; k < c; ++k) mx = std::max(mx, xs[k * hw + i]);
            double norm = 0.0;
            for (index_t k = 0; k < c; ++k) {
                const double e = std::exp(static_cast<double>(xs[k * hw + i] - mx));
                ps[k * hw + i] = static_cast<T>(e);
                norm += e;
            }
            const double inv = 1.0 / norm;
            for (index_t k = 0; k < c; ++k)
                ps[k * hw + i] = static_cast<T>(static_cast<double>(ps[k * hw + i]) * inv);
        }
    }
}

template <class T>
void softmax_backward(const tensor<T>& probs, const tensor<T>& gprobs,
                      tensor<T>& glogits) {
    const index_t n = probs.dim(0), c = probs.dim(1), hw = probs.dim(2) * probs.dim(3);
    if (!glogits.same_shape(probs)) glogits = tensor<T>(probs.shape());
    for (index_t s = 0; s < n; ++s) {
        const T* ps = probs.data() + s * c * hw;
        const T* gs = gprobs.data() + s * c * hw;
        T* qs = glogits.data() + s * c * hw;
        for (index_t i = 0; i < hw; ++i) {
            double dot = 0.0;
            for (index_t k = 0; k < c; ++k)
                dot += static_cast<double>(gs[k * hw + i]) *
                       static_cast<double>(ps[k * hw + i]);
            for (index_t k = 0; k < c; ++k)
                qs[k * hw + i] = static_cast<T>(
                    static_cast<double>(ps[k * hw + i]) *
                    (static_cast<double>(gs[k * hw + i]) - dot));
        }
    }
}

}  // namespace nn
}  // namespace triview
