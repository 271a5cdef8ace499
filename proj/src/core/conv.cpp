#include "rpf/core/conv.hpp"

#include <cassert>
#include <cstring>
#include <vector>

#include "rpf/core/parallel.hpp"

namespace rpf::core {

Tensor pad_zero(const Tensor& x, int pad) {
    if (pad == 0) return x;
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor out({n, c, h + 2 * pad, w + 2 * pad});
    parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
        const int in = static_cast<int>(i / c), ic = static_cast<int>(i % c);
        for (int y = 0; y < h; ++y) {
            const double* src = &x.at(in, ic, y, 0);
            double* dst = &out.at(in, ic, y + pad, pad);
            for (int xx = 0; xx < w; ++xx) dst[xx] = src[xx];
        }
    });
    return out;
}

namespace {

// eight-wide double vector; unaligned loads/stores via memcpy
using v8d = double __attribute__((vector_size(64)));

inline v8d loadu(const double* p) {
    v8d v;
    std::memcpy(&v, p, sizeof(v));
    return v;
}
inline void storeu(double* p, v8d v) { std::memcpy(p, &v, sizeof(v)); }
inline v8d broadcast(double s) { return v8d{s, s, s, s, s, s, s, s}; }

inline double hsum(v8d v) {
    return ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]));
}

// 3x3 kernel: all nine taps of one input channel are folded into the
// accumulator row in a single pass over three input rows
inline void accumulate_row_3x3(double* __restrict acc, const double* __restrict r0,
                               const double* __restrict r1, const double* __restrict r2,
                               const double* __restrict w, int dilation, int ow) {
    const int d = dilation, d2 = 2 * dilation;
    const v8d w0 = broadcast(w[0]), w1 = broadcast(w[1]), w2 = broadcast(w[2]);
    const v8d w3 = broadcast(w[3]), w4 = broadcast(w[4]), w5 = broadcast(w[5]);
    const v8d w6 = broadcast(w[6]), w7 = broadcast(w[7]), w8 = broadcast(w[8]);
    int x = 0;
    for (; x + 8 <= ow; x += 8) {
        v8d a = loadu(acc + x);
        a += w0 * loadu(r0 + x) + w1 * loadu(r0 + x + d) + w2 * loadu(r0 + x + d2);
        a += w3 * loadu(r1 + x) + w4 * loadu(r1 + x + d) + w5 * loadu(r1 + x + d2);
        a += w6 * loadu(r2 + x) + w7 * loadu(r2 + x + d) + w8 * loadu(r2 + x + d2);
        storeu(acc + x, a);
    }
    for (; x < ow; ++x) {
        const double top = w[0] * r0[x] + w[1] * r0[x + d] + w[2] * r0[x + d2];
        const double mid = w[3] * r1[x] + w[4] * r1[x + d] + w[5] * r1[x + d2];
        const double bot = w[6] * r2[x] + w[7] * r2[x + d] + w[8] * r2[x + d2];
        acc[x] += top + mid + bot;
    }
}

// ow == 64 fast path: the whole accumulator row lives in eight vector
// registers while every channel's taps stream past it
inline void conv_row64_3x3(double* __restrict out, double bias_v,
                           const double* __restrict xplane_row0, int64_t plane_stride,
                           const double* __restrict wbase, int cin, int d, int64_t row_stride) {
    v8d a0 = broadcast(bias_v), a1 = a0, a2 = a0, a3 = a0, a4 = a0, a5 = a0, a6 = a0, a7 = a0;
    for (int ci = 0; ci < cin; ++ci) {
        const double* r0 = xplane_row0 + ci * plane_stride;
        const double* w = wbase + ci * 9;
        for (int t = 0; t < 9; ++t) {
            const double* src = r0 + (t / 3) * d * row_stride + (t % 3) * d;
            const v8d wv = broadcast(w[t]);
            a0 += wv * loadu(src);
            a1 += wv * loadu(src + 8);
            a2 += wv * loadu(src + 16);
            a3 += wv * loadu(src + 24);
            a4 += wv * loadu(src + 32);
            a5 += wv * loadu(src + 40);
            a6 += wv * loadu(src + 48);
            a7 += wv * loadu(src + 56);
        }
    }
    storeu(out, a0);
    storeu(out + 8, a1);
    storeu(out + 16, a2);
    storeu(out + 24, a3);
    storeu(out + 32, a4);
    storeu(out + 40, a5);
    storeu(out + 48, a6);
    storeu(out + 56, a7);
}

inline void accumulate_row_generic(double* __restrict acc, const double* __restrict iplane,
                                   const double* __restrict wrow, int k, int dilation, int y,
                                   int pw, int ow) {
    for (int ky = 0; ky < k; ++ky) {
        const double* irow = iplane + static_cast<int64_t>(y + ky * dilation) * pw;
        for (int kx = 0; kx < k; ++kx) {
            const double wv = wrow[ky * k + kx];
            const double* src = irow + kx * dilation;
            for (int xx = 0; xx < ow; ++xx) acc[xx] += wv * src[xx];
        }
    }
}

// fixed-order lane dot over strided row pairs, reduced once at the end
inline double dot_rows(const double* __restrict a, int64_t astride,
                       const double* __restrict b, int64_t bstride, int rows, int n) {
    v8d lane = broadcast(0.0);
    double tail = 0.0;
    for (int y = 0; y < rows; ++y) {
        const double* pa = a + y * astride;
        const double* pb = b + y * bstride;
        int x = 0;
        for (; x + 8 <= n; x += 8) lane += loadu(pa + x) * loadu(pb + x);
        for (; x < n; ++x) tail += pa[x] * pb[x];
    }
    return hsum(lane) + tail;
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& bias,
                      int pad, int dilation) {
    assert(x.rank() == 4 && w.rank() == 4);
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), ww = x.dim(3);
    const int cout = w.dim(0), k = w.dim(2);
    assert(w.dim(1) == cin && w.dim(3) == k);
    const int span = dilation * (k - 1);
    const int oh = h + 2 * pad - span;
    const int ow = ww + 2 * pad - span;
    assert(oh >= 1 && ow >= 1);

    const Tensor xp = pad_zero(x, pad);
    const int pw = xp.dim(3);

    Tensor out({n, cout, oh, ow});
    const bool has_bias = bias.numel() > 0;

    const int64_t plane_stride = static_cast<int64_t>(xp.dim(2)) * pw;
    parallel_for(static_cast<int64_t>(n) * cout, [&](int64_t i) {
        const int in = static_cast<int>(i / cout), co = static_cast<int>(i % cout);
        double* oplane = &out.at(in, co, 0, 0);
        const double b = has_bias ? bias[co] : 0.0;
        if (k == 3 && ow == 64) {
            const double* xbase = &xp.at(in, 0, 0, 0);
            const double* wbase = &w.at(co, 0, 0, 0);
            for (int y = 0; y < oh; ++y)
                conv_row64_3x3(oplane + static_cast<int64_t>(y) * ow, b,
                               xbase + static_cast<int64_t>(y) * pw, plane_stride, wbase, cin,
                               dilation, pw);
            return;
        }
        std::vector<double> acc(static_cast<size_t>(ow));
        for (int y = 0; y < oh; ++y) {
            double* pacc = acc.data();
            for (int xx = 0; xx < ow; ++xx) pacc[xx] = b;
            for (int ci = 0; ci < cin; ++ci) {
                const double* iplane = &xp.at(in, ci, 0, 0);
                const double* wrow = &w.at(co, ci, 0, 0);
                if (k == 3) {
                    const double* r0 = iplane + static_cast<int64_t>(y) * pw;
                    accumulate_row_3x3(pacc, r0, r0 + static_cast<int64_t>(dilation) * pw,
                                       r0 + 2 * static_cast<int64_t>(dilation) * pw, wrow,
                                       dilation, ow);
                } else if (k == 1) {
                    const double wv = wrow[0];
                    const double* src = iplane + static_cast<int64_t>(y) * pw;
                    for (int xx = 0; xx < ow; ++xx) pacc[xx] += wv * src[xx];
                } else {
                    accumulate_row_generic(pacc, iplane, wrow, k, dilation, y, pw, ow);
                }
            }
            double* orow = oplane + static_cast<int64_t>(y) * ow;
            for (int xx = 0; xx < ow; ++xx) orow[xx] = pacc[xx];
        }
    });
    return out;
}

Tensor conv2d_grad_input(const Tensor& grad_y, const Tensor& w, int pad, int dilation) {
    const int cout = w.dim(0), cin = w.dim(1), k = w.dim(2);
    // flip the kernel and swap in/out channels; then grad_x is a plain
    // convolution of grad_y with pad' = dilation*(k-1) - pad
    Tensor wt({cin, cout, k, k});
    for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx)
                    wt.at(ci, co, k - 1 - ky, k - 1 - kx) = w.at(co, ci, ky, kx);
    const int tpad = dilation * (k - 1) - pad;
    assert(tpad >= 0);
    return conv2d_forward(grad_y, wt, Tensor(), tpad, dilation);
}

void conv2d_grad_params(const Tensor& x, const Tensor& grad_y, int pad, int dilation,
                        Tensor& grad_w, Tensor& grad_b) {
    const int n = x.dim(0), cin = x.dim(1);
    const int cout = grad_y.dim(1), oh = grad_y.dim(2), ow = grad_y.dim(3);
    const int k = grad_w.dim(2);
    const Tensor xp = pad_zero(x, pad);
    const int pw = xp.dim(3);

    parallel_for(static_cast<int64_t>(cout) * cin, [&](int64_t i) {
        const int ci = static_cast<int>(i % cin);
        const int co = static_cast<int>(i / cin);
        if (k == 3) {
            // one pass over the gradient plane feeds all nine taps
            v8d lane0 = broadcast(0.0), lane1 = lane0, lane2 = lane0, lane3 = lane0,
                lane4 = lane0, lane5 = lane0, lane6 = lane0, lane7 = lane0, lane8 = lane0;
            double tail[9] = {};
            const int d = dilation, d2 = 2 * dilation;
            for (int in = 0; in < n; ++in) {
                const double* gplane = &grad_y.at(in, co, 0, 0);
                const double* iplane = &xp.at(in, ci, 0, 0);
                for (int y = 0; y < oh; ++y) {
                    const double* __restrict g = gplane + static_cast<int64_t>(y) * ow;
                    const double* __restrict r0 = iplane + static_cast<int64_t>(y) * pw;
                    const double* __restrict r1 = r0 + static_cast<int64_t>(d) * pw;
                    const double* __restrict r2 = r1 + static_cast<int64_t>(d) * pw;
                    int x = 0;
                    for (; x + 8 <= ow; x += 8) {
                        const v8d gv = loadu(g + x);
                        lane0 += gv * loadu(r0 + x);
                        lane1 += gv * loadu(r0 + x + d);
                        lane2 += gv * loadu(r0 + x + d2);
                        lane3 += gv * loadu(r1 + x);
                        lane4 += gv * loadu(r1 + x + d);
                        lane5 += gv * loadu(r1 + x + d2);
                        lane6 += gv * loadu(r2 + x);
                        lane7 += gv * loadu(r2 + x + d);
                        lane8 += gv * loadu(r2 + x + d2);
                    }
                    for (; x < ow; ++x) {
                        const double gv = g[x];
                        tail[0] += gv * r0[x];
                        tail[1] += gv * r0[x + d];
                        tail[2] += gv * r0[x + d2];
                        tail[3] += gv * r1[x];
                        tail[4] += gv * r1[x + d];
                        tail[5] += gv * r1[x + d2];
                        tail[6] += gv * r2[x];
                        tail[7] += gv * r2[x + d];
                        tail[8] += gv * r2[x + d2];
                    }
                }
            }
            const v8d* lanes[9] = {&lane0, &lane1, &lane2, &lane3, &lane4,
                                   &lane5, &lane6, &lane7, &lane8};
            for (int t = 0; t < 9; ++t)
                grad_w.at(co, ci, t / 3, t % 3) += hsum(*lanes[t]) + tail[t];
        } else {
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (int in = 0; in < n; ++in)
                        acc += dot_rows(&grad_y.at(in, co, 0, 0), ow,
                                        &xp.at(in, ci, ky * dilation, kx * dilation), pw, oh, ow);
                    grad_w.at(co, ci, ky, kx) += acc;
                }
        }
    });

    if (grad_b.numel() > 0) {
        parallel_for(cout, [&](int64_t co) {
            v8d lane = broadcast(0.0);
            double tail = 0.0;
            for (int in = 0; in < n; ++in) {
                const double* gplane = &grad_y.at(in, static_cast<int>(co), 0, 0);
                const int64_t len = static_cast<int64_t>(oh) * ow;
                int64_t p = 0;
                for (; p + 8 <= len; p += 8) lane += loadu(gplane + p);
                for (; p < len; ++p) tail += gplane[p];
            }
            grad_b[co] += hsum(lane) + tail;
        });
    }
}

}  // namespace rpf::core
