#include "rpf/nn/ops.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

#include "rpf/core/conv.hpp"
#include "rpf/core/fft.hpp"
#include "rpf/core/parallel.hpp"

namespace rpf::nn {

using core::parallel_for;

namespace {

void accumulate(Node& parent, const Tensor& g) {
    if (parent.grad.numel() != parent.value.numel()) {
        parent.grad = g;
        return;
    }
    Tensor& dst = parent.grad;
    parallel_for(g.numel(), [&](int64_t i) { dst[i] += g[i]; });
}

void accumulate(Node& parent, Tensor&& g) {
    if (parent.grad.numel() != parent.value.numel()) {
        parent.grad = std::move(g);
        return;
    }
    Tensor& dst = parent.grad;
    parallel_for(g.numel(), [&](int64_t i) { dst[i] += g[i]; });
}

bool wants_grad(const Node& n, size_t i) { return n.parents[i]->requires_grad; }

}  // namespace

// --------------------------------------------------------------- elementwise

Variable add(const Variable& a, const Variable& b) {
    assert(a.value().same_shape(b.value()));
    Tensor out(a.value().shape());
    const Tensor &av = a.value(), &bv = b.value();
    parallel_for(out.numel(), [&](int64_t i) { out[i] = av[i] + bv[i]; });
    return make_op(std::move(out), {a, b}, [](Node& n) {
        if (wants_grad(n, 0)) accumulate(*n.parents[0], n.grad);
        if (wants_grad(n, 1)) accumulate(*n.parents[1], n.grad);
    });
}

Variable sub(const Variable& a, const Variable& b) {
    assert(a.value().same_shape(b.value()));
    Tensor out(a.value().shape());
    const Tensor &av = a.value(), &bv = b.value();
    parallel_for(out.numel(), [&](int64_t i) { out[i] = av[i] - bv[i]; });
    return make_op(std::move(out), {a, b}, [](Node& n) {
        if (wants_grad(n, 0)) accumulate(*n.parents[0], n.grad);
        if (wants_grad(n, 1)) {
            Tensor& dst = n.parents[1]->ensure_grad();
            const Tensor& g = n.grad;
            parallel_for(g.numel(), [&](int64_t i) { dst[i] -= g[i]; });
        }
    });
}

Variable mul(const Variable& a, const Variable& b) {
    assert(a.value().same_shape(b.value()));
    Tensor out(a.value().shape());
    const Tensor &av = a.value(), &bv = b.value();
    parallel_for(out.numel(), [&](int64_t i) { out[i] = av[i] * bv[i]; });
    return make_op(std::move(out), {a, b}, [](Node& n) {
        const Tensor &av = n.parents[0]->value, &bv = n.parents[1]->value;
        if (wants_grad(n, 0)) {
            Tensor& dst = n.parents[0]->ensure_grad();
            parallel_for(n.grad.numel(), [&](int64_t i) { dst[i] += n.grad[i] * bv[i]; });
        }
        if (wants_grad(n, 1)) {
            Tensor& dst = n.parents[1]->ensure_grad();
            parallel_for(n.grad.numel(), [&](int64_t i) { dst[i] += n.grad[i] * av[i]; });
        }
    });
}

Variable divide(const Variable& a, const Variable& b) {
    assert(a.value().same_shape(b.value()));
    Tensor out(a.value().shape());
    const Tensor &av = a.value(), &bv = b.value();
    parallel_for(out.numel(), [&](int64_t i) { out[i] = av[i] / bv[i]; });
    return make_op(std::move(out), {a, b}, [](Node& n) {
        const Tensor &av = n.parents[0]->value, &bv = n.parents[1]->value;
        if (wants_grad(n, 0)) {
            Tensor& dst = n.parents[0]->ensure_grad();
            parallel_for(n.grad.numel(), [&](int64_t i) { dst[i] += n.grad[i] / bv[i]; });
        }
        if (wants_grad(n, 1)) {
            Tensor& dst = n.parents[1]->ensure_grad();
            parallel_for(n.grad.numel(),
                         [&](int64_t i) { dst[i] -= n.grad[i] * av[i] / (bv[i] * bv[i]); });
        }
    });
}

Variable add_scalar(const Variable& a, double s) {
    Tensor out(a.value().shape());
    const Tensor& av = a.value();
    parallel_for(out.numel(), [&](int64_t i) { out[i] = av[i] + s; });
    return make_op(std::move(out), {a}, [](Node& n) {
        if (wants_grad(n, 0)) accumulate(*n.parents[0], n.grad);
    });
}

Variable mul_scalar(const Variable& a, double s) {
    Tensor out(a.value().shape());
    const Tensor& av = a.value();
    parallel_for(out.numel(), [&](int64_t i) { out[i] = av[i] * s; });
    return make_op(std::move(out), {a}, [s](Node& n) {
        if (!wants_grad(n, 0)) return;
        Tensor& dst = n.parents[0]->ensure_grad();
        parallel_for(n.grad.numel(), [&](int64_t i) { dst[i] += n.grad[i] * s; });
    });
}

Variable relu(const Variable& a) {
    Tensor out(a.value().shape());
    const Tensor& av = a.value();
    parallel_for(out.numel(), [&](int64_t i) { out[i] = av[i] > 0.0 ? av[i] : 0.0; });
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!wants_grad(n, 0)) return;
        Tensor& dst = n.parents[0]->ensure_grad();
        const Tensor& av = n.parents[0]->value;
        parallel_for(n.grad.numel(),
                     [&](int64_t i) { dst[i] += av[i] > 0.0 ? n.grad[i] : 0.0; });
    });
}

Variable sigmoid(const Variable& a) {
    Tensor out(a.value().shape());
    const Tensor& av = a.value();
    parallel_for(out.numel(), [&](int64_t i) {
        const double v = av[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    });
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!wants_grad(n, 0)) return;
        Tensor& dst = n.parents[0]->ensure_grad();
        const Tensor& y = n.value;
        parallel_for(n.grad.numel(),
                     [&](int64_t i) { dst[i] += n.grad[i] * y[i] * (1.0 - y[i]); });
    });
}

Variable tanh_op(const Variable& a) {
    Tensor out(a.value().shape());
    const Tensor& av = a.value();
    parallel_for(out.numel(), [&](int64_t i) { out[i] = std::tanh(av[i]); });
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!wants_grad(n, 0)) return;
        Tensor& dst = n.parents[0]->ensure_grad();
        const Tensor& y = n.value;
        parallel_for(n.grad.numel(),
                     [&](int64_t i) { dst[i] += n.grad[i] * (1.0 - y[i] * y[i]); });
    });
}

Variable square(const Variable& a) { return mul(a, a); }

Variable sqrt_safe(const Variable& a) {
    Tensor out(a.value().shape());
    const Tensor& av = a.value();
    parallel_for(out.numel(), [&](int64_t i) { out[i] = std::sqrt(av[i]); });
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!wants_grad(n, 0)) return;
        Tensor& dst = n.parents[0]->ensure_grad();
        const Tensor& y = n.value;
        parallel_for(n.grad.numel(), [&](int64_t i) {
            if (y[i] > 0.0) dst[i] += n.grad[i] * 0.5 / y[i];
        });
    });
}

// ---------------------------------------------------------------- reductions

Variable sum(const Variable& a) {
    double acc = 0.0;
    const Tensor& av = a.value();
    for (int64_t i = 0; i < av.numel(); ++i) acc += av[i];
    Tensor out({1});
    out[0] = acc;
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!wants_grad(n, 0)) return;
        Tensor& dst = n.parents[0]->ensure_grad();
        const double g = n.grad[0];
        parallel_for(dst.numel(), [&](int64_t i) { dst[i] += g; });
    });
}

Variable mean(const Variable& a) {
    const double inv = 1.0 / static_cast<double>(a.value().numel());
    double acc = 0.0;
    const Tensor& av = a.value();
    for (int64_t i = 0; i < av.numel(); ++i) acc += av[i];
    Tensor out({1});
    out[0] = acc * inv;
    return make_op(std::move(out), {a}, [inv](Node& n) {
        if (!wants_grad(n, 0)) return;
        Tensor& dst = n.parents[0]->ensure_grad();
        const double g = n.grad[0] * inv;
        parallel_for(dst.numel(), [&](int64_t i) { dst[i] += g; });
    });
}

// ----------------------------------------------------------- shape/structure

Variable reshape(const Variable& a, std::vector<int> shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!wants_grad(n, 0)) return;
        Tensor g = n.grad.reshaped(n.parents[0]->value.shape());
        accumulate(*n.parents[0], g);
    });
}

Variable concat_channels(const Variable& a, const Variable& b) {
    const Tensor &av = a.value(), &bv = b.value();
    assert(av.rank() == 4 && bv.rank() == 4);
    const int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), h = av.dim(2), w = av.dim(3);
    Tensor out({n, ca + cb, h, w});
    parallel_for(static_cast<int64_t>(n) * (ca + cb), [&](int64_t i) {
        const int in = static_cast<int>(i / (ca + cb));
        const int c = static_cast<int>(i % (ca + cb));
        const double* src = c < ca ? &av.at(in, c, 0, 0) : &bv.at(in, c - ca, 0, 0);
        double* dst = &out.at(in, c, 0, 0);
        std::copy(src, src + static_cast<int64_t>(h) * w, dst);
    });
    return make_op(std::move(out), {a, b}, [ca, cb, h, w](Node& n2) {
        const int nb = n2.value.dim(0);
        for (int side = 0; side < 2; ++side) {
            if (!wants_grad(n2, side)) continue;
            Tensor& dst = n2.parents[side]->ensure_grad();
            const int off = side == 0 ? 0 : ca;
            const int cc = side == 0 ? ca : cb;
            parallel_for(static_cast<int64_t>(nb) * cc, [&](int64_t i) {
                const int in = static_cast<int>(i / cc);
                const int c = static_cast<int>(i % cc);
                const double* g = &n2.grad.at(in, c + off, 0, 0);
                double* d = &dst.at(in, c, 0, 0);
                for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p) d[p] += g[p];
            });
        }
    });
}

Variable select_sample(const Variable& a, int idx) {
    const Tensor& av = a.value();
    assert(av.rank() == 4 && idx >= 0 && idx < av.dim(0));
    const int c = av.dim(1), h = av.dim(2), w = av.dim(3);
    Tensor out({1, c, h, w});
    const int64_t plane = static_cast<int64_t>(c) * h * w;
    const double* src = av.data() + static_cast<int64_t>(idx) * plane;
    std::copy(src, src + plane, out.data());
    return make_op(std::move(out), {a}, [idx, plane](Node& n) {
        if (!wants_grad(n, 0)) return;
        Tensor& dst = n.parents[0]->ensure_grad();
        double* d = dst.data() + static_cast<int64_t>(idx) * plane;
        parallel_for(plane, [&](int64_t i) { d[i] += n.grad[i]; });
    });
}

Variable stop_gradient(const Variable& a) { return Variable::constant(a.value()); }

// --------------------------------------------------------------- convolution

Variable conv2d(const Variable& x, const Variable& w, const Variable& bias,
                int pad, int dilation) {
    Tensor out = core::conv2d_forward(x.value(), w.value(),
                                      bias.defined() ? bias.value() : Tensor(), pad, dilation);
    std::vector<Variable> parents = {x, w};
    if (bias.defined()) parents.push_back(bias);
    return make_op(std::move(out), std::move(parents), [pad, dilation](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        const Tensor& wv = n.parents[1]->value;
        if (wants_grad(n, 0))
            accumulate(*n.parents[0], core::conv2d_grad_input(n.grad, wv, pad, dilation));
        const bool want_w = wants_grad(n, 1);
        const bool want_b = n.parents.size() > 2 && wants_grad(n, 2);
        if (want_w || want_b) {
            Tensor gw(wv.shape());
            Tensor gb = want_b ? Tensor(n.parents[2]->value.shape()) : Tensor();
            core::conv2d_grad_params(xv, n.grad, pad, dilation, gw, gb);
            if (want_w) accumulate(*n.parents[1], std::move(gw));
            if (want_b) accumulate(*n.parents[2], std::move(gb));
        }
    });
}

Variable pad_replicate(const Variable& x, int pad) {
    const Tensor& xv = x.value();
    assert(xv.rank() == 4);
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    Tensor out({n, c, h + 2 * pad, w + 2 * pad});
    parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
        const int in = static_cast<int>(i / c), ic = static_cast<int>(i % c);
        for (int y = 0; y < h + 2 * pad; ++y) {
            const int sy = std::clamp(y - pad, 0, h - 1);
            for (int xx = 0; xx < w + 2 * pad; ++xx) {
                const int sx = std::clamp(xx - pad, 0, w - 1);
                out.at(in, ic, y, xx) = xv.at(in, ic, sy, sx);
            }
        }
    });
    return make_op(std::move(out), {x}, [pad, h, w](Node& nd) {
        if (!wants_grad(nd, 0)) return;
        Tensor& dst = nd.parents[0]->ensure_grad();
        const int n = dst.dim(0), c = dst.dim(1);
        parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
            const int in = static_cast<int>(i / c), ic = static_cast<int>(i % c);
            for (int y = 0; y < h + 2 * pad; ++y) {
                const int sy = std::clamp(y - pad, 0, h - 1);
                for (int xx = 0; xx < w + 2 * pad; ++xx) {
                    const int sx = std::clamp(xx - pad, 0, w - 1);
                    dst.at(in, ic, sy, sx) += nd.grad.at(in, ic, y, xx);
                }
            }
        });
    });
}

// --------------------------------------------------------------------- batchnorm

Variable batchnorm2d(const Variable& x, const Variable& gamma, const Variable& beta,
                     Tensor& running_mean, Tensor& running_var, BnMode mode,
                     double eps, double momentum) {
    const Tensor& xv = x.value();
    assert(xv.rank() == 4);
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const int64_t m = static_cast<int64_t>(n) * h * w;

    if (mode == BnMode::Identity) {
        // pass-through: unit scale, zero shift, no stats
        Tensor out = xv;
        return make_op(std::move(out), {x}, [](Node& nd) {
            if (wants_grad(nd, 0)) accumulate(*nd.parents[0], nd.grad);
        });
    }

    Tensor mu({c}), var({c});
    if (mode == BnMode::Train) {
        parallel_for(c, [&](int64_t ci) {
            double s = 0.0;
            for (int in = 0; in < n; ++in) {
                const double* p = &xv.at(in, static_cast<int>(ci), 0, 0);
                for (int64_t k = 0; k < static_cast<int64_t>(h) * w; ++k) s += p[k];
            }
            const double mean_c = s / static_cast<double>(m);
            double v = 0.0;
            for (int in = 0; in < n; ++in) {
                const double* p = &xv.at(in, static_cast<int>(ci), 0, 0);
                for (int64_t k = 0; k < static_cast<int64_t>(h) * w; ++k) {
                    const double d = p[k] - mean_c;
                    v += d * d;
                }
            }
            mu[ci] = mean_c;
            var[ci] = v / static_cast<double>(m);
        });
        // running stats track the unbiased variance
        const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
        for (int ci = 0; ci < c; ++ci) {
            running_mean[ci] = (1.0 - momentum) * running_mean[ci] + momentum * mu[ci];
            running_var[ci] = (1.0 - momentum) * running_var[ci] + momentum * var[ci] * unbias;
        }
    } else {
        mu = running_mean;
        var = running_var;
    }

    Tensor xhat({n, c, h, w});
    Tensor out({n, c, h, w});
    const Tensor &gv = gamma.value(), &bv = beta.value();
    parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
        const int in = static_cast<int>(i / c), ci = static_cast<int>(i % c);
        const double inv_std = 1.0 / std::sqrt(var[ci] + eps);
        const double g = gv[ci], b = bv[ci], mc = mu[ci];
        const double* p = &xv.at(in, ci, 0, 0);
        double* ph = &xhat.at(in, ci, 0, 0);
        double* po = &out.at(in, ci, 0, 0);
        for (int64_t k = 0; k < static_cast<int64_t>(h) * w; ++k) {
            ph[k] = (p[k] - mc) * inv_std;
            po[k] = g * ph[k] + b;
        }
    });

    const bool train = mode == BnMode::Train;
    return make_op(std::move(out), {x, gamma, beta},
                   [xhat = std::move(xhat), var = std::move(var), eps, train, m](Node& nd) {
        const int n = nd.value.dim(0), c = nd.value.dim(1), h = nd.value.dim(2),
                  w = nd.value.dim(3);
        const Tensor& gv = nd.parents[1]->value;
        const int64_t hw = static_cast<int64_t>(h) * w;

        Tensor dgamma({c}), dbeta({c});
        parallel_for(c, [&](int64_t ci) {
            double sg = 0.0, sb = 0.0;
            for (int in = 0; in < n; ++in) {
                const double* g = &nd.grad.at(in, static_cast<int>(ci), 0, 0);
                const double* xh = &xhat.at(in, static_cast<int>(ci), 0, 0);
                for (int64_t k = 0; k < hw; ++k) {
                    sg += g[k] * xh[k];
                    sb += g[k];
                }
            }
            dgamma[ci] = sg;
            dbeta[ci] = sb;
        });
        if (wants_grad(nd, 1)) accumulate(*nd.parents[1], dgamma);
        if (wants_grad(nd, 2)) accumulate(*nd.parents[2], dbeta);

        if (!wants_grad(nd, 0)) return;
        Tensor& dx = nd.parents[0]->ensure_grad();
        parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
            const int in = static_cast<int>(i / c), ci = static_cast<int>(i % c);
            const double inv_std = 1.0 / std::sqrt(var[ci] + eps);
            const double g = gv[ci];
            const double* gr = &nd.grad.at(in, ci, 0, 0);
            const double* xh = &xhat.at(in, ci, 0, 0);
            double* d = &dx.at(in, ci, 0, 0);
            if (train) {
                const double inv_m = 1.0 / static_cast<double>(m);
                for (int64_t k = 0; k < hw; ++k)
                    d[k] += g * inv_std * (gr[k] - inv_m * dbeta[ci] - inv_m * xh[k] * dgamma[ci]);
            } else {
                for (int64_t k = 0; k < hw; ++k) d[k] += g * inv_std * gr[k];
            }
        });
    });
}

// ------------------------------------------------------------------- pooling

Variable global_avg_pool(const Variable& x) {
    const Tensor& xv = x.value();
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const int64_t hw = static_cast<int64_t>(h) * w;
    Tensor out({n, c, 1, 1});
    parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
        const double* p = xv.data() + i * hw;
        double s = 0.0;
        for (int64_t k = 0; k < hw; ++k) s += p[k];
        out[i] = s / static_cast<double>(hw);
    });
    return make_op(std::move(out), {x}, [hw](Node& nd) {
        if (!wants_grad(nd, 0)) return;
        Tensor& dst = nd.parents[0]->ensure_grad();
        parallel_for(nd.grad.numel(), [&](int64_t i) {
            const double g = nd.grad[i] / static_cast<double>(hw);
            double* d = dst.data() + i * hw;
            for (int64_t k = 0; k < hw; ++k) d[k] += g;
        });
    });
}

Variable global_max_pool(const Variable& x) {
    const Tensor& xv = x.value();
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const int64_t hw = static_cast<int64_t>(h) * w;
    Tensor out({n, c, 1, 1});
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n) * c);
    parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
        const double* p = xv.data() + i * hw;
        int64_t best = 0;
        for (int64_t k = 1; k < hw; ++k)
            if (p[k] > p[best]) best = k;
        (*argmax)[static_cast<size_t>(i)] = best;
        out[i] = p[best];
    });
    return make_op(std::move(out), {x}, [hw, argmax](Node& nd) {
        if (!wants_grad(nd, 0)) return;
        Tensor& dst = nd.parents[0]->ensure_grad();
        parallel_for(nd.grad.numel(), [&](int64_t i) {
            dst[i * hw + (*argmax)[static_cast<size_t>(i)]] += nd.grad[i];
        });
    });
}

Variable channel_mean(const Variable& x) {
    const Tensor& xv = x.value();
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const int64_t hw = static_cast<int64_t>(h) * w;
    Tensor out({n, 1, h, w});
    parallel_for(static_cast<int64_t>(n) * hw, [&](int64_t i) {
        const int in = static_cast<int>(i / hw);
        const int64_t p = i % hw;
        double s = 0.0;
        for (int ci = 0; ci < c; ++ci) s += xv[(static_cast<int64_t>(in) * c + ci) * hw + p];
        out[i] = s / c;
    });
    return make_op(std::move(out), {x}, [c, hw](Node& nd) {
        if (!wants_grad(nd, 0)) return;
        Tensor& dst = nd.parents[0]->ensure_grad();
        const int n = nd.value.dim(0);
        parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
            const int in = static_cast<int>(i / c);
            double* d = dst.data() + i * hw;
            const double* g = nd.grad.data() + static_cast<int64_t>(in) * hw;
            for (int64_t k = 0; k < hw; ++k) d[k] += g[k] / c;
        });
    });
}

Variable channel_max(const Variable& x) {
    const Tensor& xv = x.value();
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const int64_t hw = static_cast<int64_t>(h) * w;
    Tensor out({n, 1, h, w});
    auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(n) * hw);
    parallel_for(static_cast<int64_t>(n) * hw, [&](int64_t i) {
        const int in = static_cast<int>(i / hw);
        const int64_t p = i % hw;
        int best = 0;
        double bv = xv[static_cast<int64_t>(in) * c * hw + p];
        for (int ci = 1; ci < c; ++ci) {
            const double v = xv[(static_cast<int64_t>(in) * c + ci) * hw + p];
            if (v > bv) {
                bv = v;
                best = ci;
            }
        }
        (*argmax)[static_cast<size_t>(i)] = best;
        out[i] = bv;
    });
    return make_op(std::move(out), {x}, [c, hw, argmax](Node& nd) {
        if (!wants_grad(nd, 0)) return;
        Tensor& dst = nd.parents[0]->ensure_grad();
        const int n = nd.value.dim(0);
        parallel_for(static_cast<int64_t>(n), [&](int64_t in) {
            for (int64_t p = 0; p < hw; ++p) {
                const int ci = (*argmax)[static_cast<size_t>(in * hw + p)];
                dst[(in * c + ci) * hw + p] += nd.grad[in * hw + p];
            }
        });
    });
}

Variable broadcast_mul_channel(const Variable& x, const Variable& s) {
    const Tensor &xv = x.value(), &sv = s.value();
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    assert(sv.dim(0) == n && sv.dim(1) == c && sv.dim(2) == 1 && sv.dim(3) == 1);
    const int64_t hw = static_cast<int64_t>(h) * w;
    Tensor out({n, c, h, w});
    parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
        const double sc = sv[i];
        const double* p = xv.data() + i * hw;
        double* o = out.data() + i * hw;
        for (int64_t k = 0; k < hw; ++k) o[k] = p[k] * sc;
    });
    return make_op(std::move(out), {x, s}, [hw](Node& nd) {
        const Tensor &xv = nd.parents[0]->value, &sv = nd.parents[1]->value;
        if (wants_grad(nd, 0)) {
            Tensor& dx = nd.parents[0]->ensure_grad();
            parallel_for(sv.numel(), [&](int64_t i) {
                const double sc = sv[i];
                const double* g = nd.grad.data() + i * hw;
                double* d = dx.data() + i * hw;
                for (int64_t k = 0; k < hw; ++k) d[k] += g[k] * sc;
            });
        }
        if (wants_grad(nd, 1)) {
            Tensor& ds = nd.parents[1]->ensure_grad();
            parallel_for(sv.numel(), [&](int64_t i) {
                const double* g = nd.grad.data() + i * hw;
                const double* p = xv.data() + i * hw;
                double acc = 0.0;
                for (int64_t k = 0; k < hw; ++k) acc += g[k] * p[k];
                ds[i] += acc;
            });
        }
    });
}

Variable broadcast_mul_spatial(const Variable& x, const Variable& s) {
    const Tensor &xv = x.value(), &sv = s.value();
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    assert(sv.dim(0) == n && sv.dim(1) == 1 && sv.dim(2) == h && sv.dim(3) == w);
    const int64_t hw = static_cast<int64_t>(h) * w;
    Tensor out({n, c, h, w});
    parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
        const int in = static_cast<int>(i / c);
        const double* p = xv.data() + i * hw;
        const double* sc = sv.data() + static_cast<int64_t>(in) * hw;
        double* o = out.data() + i * hw;
        for (int64_t k = 0; k < hw; ++k) o[k] = p[k] * sc[k];
    });
    return make_op(std::move(out), {x, s}, [c, hw](Node& nd) {
        const Tensor &xv = nd.parents[0]->value, &sv = nd.parents[1]->value;
        const int n = xv.dim(0);
        if (wants_grad(nd, 0)) {
            Tensor& dx = nd.parents[0]->ensure_grad();
            parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
                const int in = static_cast<int>(i / c);
                const double* g = nd.grad.data() + i * hw;
                const double* sc = sv.data() + static_cast<int64_t>(in) * hw;
                double* d = dx.data() + i * hw;
                for (int64_t k = 0; k < hw; ++k) d[k] += g[k] * sc[k];
            });
        }
        if (wants_grad(nd, 1)) {
            Tensor& ds = nd.parents[1]->ensure_grad();
            parallel_for(static_cast<int64_t>(n), [&](int64_t in) {
                double* d = ds.data() + in * hw;
                for (int ci = 0; ci < c; ++ci) {
                    const double* g = nd.grad.data() + (in * c + ci) * hw;
                    const double* p = xv.data() + (in * c + ci) * hw;
                    for (int64_t k = 0; k < hw; ++k) d[k] += g[k] * p[k];
                }
            });
        }
    });
}

// -------------------------------------------------------------------- matmul

namespace {

// C(B,M,N) = op_a(A) * op_b(B) with per-batch 2-D operands
Tensor mm_kernel(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    const int batch = a.dim(0);
    const int am = a.dim(1), an = a.dim(2);
    const int bm = b.dim(1), bn = b.dim(2);
    const int M = ta ? an : am;
    const int K = ta ? am : an;
    const int N = tb ? bm : bn;
    assert((tb ? bn : bm) == K);
    (void)bm;
    Tensor out({batch, M, N});
    parallel_for(static_cast<int64_t>(batch) * M, [&](int64_t bi) {
        const int bb = static_cast<int>(bi / M);
        const int i = static_cast<int>(bi % M);
        const double* pa = a.data() + static_cast<int64_t>(bb) * am * an;
        const double* pb = b.data() + static_cast<int64_t>(bb) * b.dim(1) * b.dim(2);
        double* po = out.data() + (static_cast<int64_t>(bb) * M + i) * N;
        for (int j = 0; j < N; ++j) po[j] = 0.0;
        for (int k = 0; k < K; ++k) {
            const double av = ta ? pa[static_cast<int64_t>(k) * an + i]
                                 : pa[static_cast<int64_t>(i) * an + k];
            const double* brow = tb ? nullptr : pb + static_cast<int64_t>(k) * bn;
            if (!tb) {
                for (int j = 0; j < N; ++j) po[j] += av * brow[j];
            } else {
                for (int j = 0; j < N; ++j) po[j] += av * pb[static_cast<int64_t>(j) * bn + k];
            }
        }
    });
    return out;
}

}  // namespace

Variable matmul(const Variable& a, const Variable& b, bool ta, bool tb) {
    Tensor out = mm_kernel(a.value(), b.value(), ta, tb);
    return make_op(std::move(out), {a, b}, [ta, tb](Node& nd) {
        const Tensor &av = nd.parents[0]->value, &bv = nd.parents[1]->value;
        // dA and dB by the usual transpose algebra
        if (wants_grad(nd, 0)) {
            accumulate(*nd.parents[0], ta ? mm_kernel(bv, nd.grad, tb, true)
                                          : mm_kernel(nd.grad, bv, false, !tb));
        }
        if (wants_grad(nd, 1)) {
            accumulate(*nd.parents[1], tb ? mm_kernel(nd.grad, av, true, ta)
                                          : mm_kernel(av, nd.grad, !ta, false));
        }
    });
}

Variable softmax_lastdim(const Variable& a) {
    const Tensor& av = a.value();
    const int n = av.dim(av.rank() - 1);
    const int64_t rows = av.numel() / n;
    Tensor out(av.shape());
    parallel_for(rows, [&](int64_t r) {
        const double* p = av.data() + r * n;
        double* o = out.data() + r * n;
        double mx = p[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, p[j]);
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            o[j] = std::exp(p[j] - mx);
            s += o[j];
        }
        for (int j = 0; j < n; ++j) o[j] /= s;
    });
    return make_op(std::move(out), {a}, [n, rows](Node& nd) {
        if (!wants_grad(nd, 0)) return;
        Tensor& dst = nd.parents[0]->ensure_grad();
        parallel_for(rows, [&](int64_t r) {
            const double* y = nd.value.data() + r * n;
            const double* g = nd.grad.data() + r * n;
            double* d = dst.data() + r * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += g[j] * y[j];
            for (int j = 0; j < n; ++j) d[j] += y[j] * (g[j] - dot);
        });
    });
}

// ----------------------------------------------------------------- Fourier ops

Variable fft2_stack(const Variable& x) {
    const Tensor& xv = x.value();
    assert(xv.rank() == 4);
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const int64_t hw = static_cast<int64_t>(h) * w;
    Tensor out({n, 2 * c, h, w});
    parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
        const int in = static_cast<int>(i / c), ci = static_cast<int>(i % c);
        std::vector<core::cplx> buf(static_cast<size_t>(hw));
        const double* p = xv.data() + i * hw;
        for (int64_t k = 0; k < hw; ++k) buf[static_cast<size_t>(k)] = core::cplx(p[k], 0.0);
        core::fft2_batch(buf.data(), 1, h, w, false);
        double* pre = &out.at(in, ci, 0, 0);
        double* pim = &out.at(in, c + ci, 0, 0);
        for (int64_t k = 0; k < hw; ++k) {
            pre[k] = buf[static_cast<size_t>(k)].real();
            pim[k] = buf[static_cast<size_t>(k)].imag();
        }
    });
    return make_op(std::move(out), {x}, [c, h, w, hw](Node& nd) {
        if (!wants_grad(nd, 0)) return;
        Tensor& dst = nd.parents[0]->ensure_grad();
        const int n = dst.dim(0);
        // grad_x = Re(FFT(G_re - i*G_im))
        parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
            const int in = static_cast<int>(i / c), ci = static_cast<int>(i % c);
            const double* gre = &nd.grad.at(in, ci, 0, 0);
            const double* gim = &nd.grad.at(in, c + ci, 0, 0);
            std::vector<core::cplx> buf(static_cast<size_t>(hw));
            for (int64_t k = 0; k < hw; ++k)
                buf[static_cast<size_t>(k)] = core::cplx(gre[k], -gim[k]);
            core::fft2_batch(buf.data(), 1, h, w, false);
            double* d = dst.data() + i * hw;
            for (int64_t k = 0; k < hw; ++k) d[k] += buf[static_cast<size_t>(k)].real();
        });
    });
}

Variable ifft2_real(const Variable& z) {
    const Tensor& zv = z.value();
    assert(zv.rank() == 4 && zv.dim(1) % 2 == 0);
    const int n = zv.dim(0), c = zv.dim(1) / 2, h = zv.dim(2), w = zv.dim(3);
    const int64_t hw = static_cast<int64_t>(h) * w;
    Tensor out({n, c, h, w});
    parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
        const int in = static_cast<int>(i / c), ci = static_cast<int>(i % c);
        const double* pre = &zv.at(in, ci, 0, 0);
        const double* pim = &zv.at(in, c + ci, 0, 0);
        std::vector<core::cplx> buf(static_cast<size_t>(hw));
        for (int64_t k = 0; k < hw; ++k) buf[static_cast<size_t>(k)] = core::cplx(pre[k], pim[k]);
        core::fft2_batch(buf.data(), 1, h, w, true);
        double* o = out.data() + i * hw;
        for (int64_t k = 0; k < hw; ++k) o[k] = buf[static_cast<size_t>(k)].real();
    });
    return make_op(std::move(out), {z}, [c, h, w, hw](Node& nd) {
        if (!wants_grad(nd, 0)) return;
        Tensor& dst = nd.parents[0]->ensure_grad();
        const int n = dst.dim(0);
        // grad_z = FFT(g) / (HW)
        const double s = 1.0 / static_cast<double>(hw);
        parallel_for(static_cast<int64_t>(n) * c, [&](int64_t i) {
            const int in = static_cast<int>(i / c), ci = static_cast<int>(i % c);
            const double* g = nd.grad.data() + i * hw;
            std::vector<core::cplx> buf(static_cast<size_t>(hw));
            for (int64_t k = 0; k < hw; ++k) buf[static_cast<size_t>(k)] = core::cplx(g[k], 0.0);
            core::fft2_batch(buf.data(), 1, h, w, false);
            double* dre = &dst.at(in, ci, 0, 0);
            double* dim = &dst.at(in, c + ci, 0, 0);
            for (int64_t k = 0; k < hw; ++k) {
                dre[k] += buf[static_cast<size_t>(k)].real() * s;
                dim[k] += buf[static_cast<size_t>(k)].imag() * s;
            }
        });
    });
}

namespace {

void plane_dims(const Tensor& t, int& h, int& w) {
    assert(t.rank() >= 2);
    h = t.dim(t.rank() - 2);
    w = t.dim(t.rank() - 1);
    assert(t.numel() == static_cast<int64_t>(h) * w && "expected a single plane");
}

}  // namespace

Variable freq_l1(const Variable& a, const Variable& b) {
    const Tensor &av = a.value(), &bv = b.value();
    assert(av.same_shape(bv));
    int h, w;
    plane_dims(av, h, w);
    const int64_t hw = static_cast<int64_t>(h) * w;

    std::vector<core::cplx> fa(static_cast<size_t>(hw)), fb(static_cast<size_t>(hw));
    for (int64_t k = 0; k < hw; ++k) {
        fa[static_cast<size_t>(k)] = core::cplx(av[k], 0.0);
        fb[static_cast<size_t>(k)] = core::cplx(bv[k], 0.0);
    }
    core::fft2_batch(fa.data(), 1, h, w, false);
    core::fft2_batch(fb.data(), 1, h, w, false);

    // unit phasors of the spectrum difference, saved for the backward pass
    auto unit = std::make_shared<std::vector<core::cplx>>(static_cast<size_t>(hw));
    double acc = 0.0;
    for (int64_t k = 0; k < hw; ++k) {
        const core::cplx d = fa[static_cast<size_t>(k)] - fb[static_cast<size_t>(k)];
        const double mag = std::abs(d);
        acc += mag;
        (*unit)[static_cast<size_t>(k)] = mag > 0.0 ? d / mag : core::cplx(0.0, 0.0);
    }
    Tensor out({1});
    out[0] = acc / static_cast<double>(hw);

    return make_op(std::move(out), {a, b}, [unit, h, w, hw](Node& nd) {
        // d(mean |D_k|)/da = Re(FFT(conj(u)))/HW, and -that for b
        std::vector<core::cplx> buf(*unit);
        for (auto& v : buf) v = std::conj(v);
        core::fft2_batch(buf.data(), 1, h, w, false);
        const double g = nd.grad[0] / static_cast<double>(hw);
        if (wants_grad(nd, 0)) {
            Tensor& da = nd.parents[0]->ensure_grad();
            for (int64_t k = 0; k < hw; ++k) da[k] += g * buf[static_cast<size_t>(k)].real();
        }
        if (wants_grad(nd, 1)) {
            Tensor& db = nd.parents[1]->ensure_grad();
            for (int64_t k = 0; k < hw; ++k) db[k] -= g * buf[static_cast<size_t>(k)].real();
        }
    });
}

Variable spatial_l1(const Variable& a, const Variable& b) {
    const Tensor &av = a.value(), &bv = b.value();
    assert(av.same_shape(bv));
    double acc = 0.0;
    for (int64_t i = 0; i < av.numel(); ++i) acc += std::abs(av[i] - bv[i]);
    Tensor out({1});
    out[0] = acc / static_cast<double>(av.numel());
    return make_op(std::move(out), {a, b}, [](Node& nd) {
        const Tensor &av = nd.parents[0]->value, &bv = nd.parents[1]->value;
        const double g = nd.grad[0] / static_cast<double>(av.numel());
        for (int side = 0; side < 2; ++side) {
            if (!wants_grad(nd, side)) continue;
            Tensor& d = nd.parents[side]->ensure_grad();
            const double sgn = side == 0 ? 1.0 : -1.0;
            for (int64_t i = 0; i < av.numel(); ++i) {
                const double diff = av[i] - bv[i];
                if (diff > 0.0)
                    d[i] += sgn * g;
                else if (diff < 0.0)
                    d[i] -= sgn * g;
            }
        }
    });
}

}  // namespace rpf::nn
