#include "rpf/imaging/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rpf/core/parallel.hpp"

namespace rpf::imaging {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

double sigmoid(double v) {
    // standardized inputs are bounded by sqrt(N), and 1/(1+inf) degrades to 0
    return 1.0 / (1.0 + std::exp(-v));
}

}  // namespace

// Min-shifted summation: a constant plane sums to exactly zero, so its mean
// is exactly the constant and sigma is exactly zero. The strict indicator
// thresholds mu + sigma then behave correctly on degenerate inputs.
double mean_of(const Tensor& x) {
    double lo = x[0];
    for (int64_t i = 0; i < x.numel(); ++i) lo = std::min(lo, x[i]);
    double s = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) s += x[i] - lo;
    return lo + s / static_cast<double>(x.numel());
}

double stddev_of(const Tensor& x) {
    const double mu = mean_of(x);
    double s = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double d = x[i] - mu;
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(x.numel()));
}

Tensor standardize(const Tensor& x) {
    const double mu = mean_of(x);
    const double inv = 1.0 / (stddev_of(x) + 1e-9);
    Tensor out(x.shape());
    core::parallel_for(x.numel(), [&](int64_t i) { out[i] = (x[i] - mu) * inv; });
    return out;
}

YCbCr rgb_to_ycbcr(const Tensor& rgb) {
    require(rgb.rank() == 3 && rgb.dim(0) == 3, "rgb_to_ycbcr: expected (3,H,W)");
    const int h = rgb.dim(1), w = rgb.dim(2);
    YCbCr out{Tensor({h, w}), Tensor({h, w}), Tensor({h, w})};
    core::parallel_for(static_cast<int64_t>(h) * w, [&](int64_t i) {
        const double r = rgb[i], g = rgb[static_cast<int64_t>(h) * w + i],
                     b = rgb[2LL * h * w + i];
        const double y = 0.299 * r + 0.587 * g + 0.114 * b;
        out.y[i] = y;
        out.cb[i] = 0.5 + (b - y) * (0.5 / (1.0 - 0.114));
        out.cr[i] = 0.5 + (r - y) * (0.5 / (1.0 - 0.299));
    });
    return out;
}

Tensor ycbcr_to_rgb(const Tensor& y, const Tensor& cb, const Tensor& cr) {
    require(y.same_shape(cb) && y.same_shape(cr), "ycbcr_to_rgb: plane shape mismatch");
    const int h = y.height(), w = y.width();
    Tensor rgb({3, h, w});
    core::parallel_for(static_cast<int64_t>(h) * w, [&](int64_t i) {
        const double yy = y[i], pb = cb[i] - 0.5, pr = cr[i] - 0.5;
        const double r = yy + 2.0 * (1.0 - 0.299) * pr;
        const double b = yy + 2.0 * (1.0 - 0.114) * pb;
        const double g = (yy - 0.299 * r - 0.114 * b) / 0.587;
        rgb[i] = std::clamp(r, 0.0, 1.0);
        rgb[static_cast<int64_t>(h) * w + i] = std::clamp(g, 0.0, 1.0);
        rgb[2LL * h * w + i] = std::clamp(b, 0.0, 1.0);
    });
    return rgb;
}

SourcePair make_source_pair(Tensor ir, Tensor vis) {
    SourcePair pair;
    if (vis.rank() == 3) {
        require(vis.dim(0) == 3, "make_source_pair: visible image must be (3,H,W) or (H,W)");
        require(ir.height() == vis.dim(1) && ir.width() == vis.dim(2),
                "make_source_pair: ir/vis dimensions differ");
        YCbCr ycc = rgb_to_ycbcr(vis);
        pair.vis_rgb = std::move(vis);
        pair.vis_y = std::move(ycc.y);
        pair.vis_cb = std::move(ycc.cb);
        pair.vis_cr = std::move(ycc.cr);
    } else {
        require(ir.same_shape(vis), "make_source_pair: ir/vis dimensions differ");
        pair.vis_y = std::move(vis);
    }
    pair.ir = std::move(ir);
    return pair;
}

ResidualMap compute_residual(const Tensor& ir, const Tensor& vis_y) {
    require(ir.same_shape(vis_y), "compute_residual: shape mismatch");
    Tensor m(ir.shape());
    core::parallel_for(ir.numel(), [&](int64_t i) { m[i] = ir[i] - vis_y[i]; });
    return ResidualMap{std::move(m)};
}

Tensor sobel_gradient(const Tensor& img) {
    const int h = img.height(), w = img.width();
    Tensor out({h, w});
    auto px = [&](int y, int x) {
        y = std::clamp(y, 0, h - 1);
        x = std::clamp(x, 0, w - 1);
        return img.at(y, x);
    };
    // paired differences cancel exactly on constant images
    core::parallel_for(h, [&](int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < w; ++x) {
            const double gx = (px(y - 1, x + 1) - px(y - 1, x - 1)) +
                              2.0 * (px(y, x + 1) - px(y, x - 1)) +
                              (px(y + 1, x + 1) - px(y + 1, x - 1));
            const double gy = (px(y + 1, x - 1) - px(y - 1, x - 1)) +
                              2.0 * (px(y + 1, x) - px(y - 1, x)) +
                              (px(y + 1, x + 1) - px(y - 1, x + 1));
            out.at(y, x) = std::sqrt(gx * gx + gy * gy);
        }
    });
    return out;
}

Tensor texture_mask(const Tensor& vis_y) {
    const Tensor s = sobel_gradient(vis_y);
    const double mu = mean_of(s);
    Tensor mask(s.shape());
    core::parallel_for(s.numel(), [&](int64_t i) { mask[i] = s[i] > mu ? 1.0 : 0.0; });
    return mask;
}

Tensor thermal_mask(const Tensor& ir) {
    const double thr = mean_of(ir) + stddev_of(ir);
    Tensor mask(ir.shape());
    core::parallel_for(ir.numel(), [&](int64_t i) { mask[i] = ir[i] > thr ? 1.0 : 0.0; });
    return mask;
}

std::pair<Tensor, Tensor> adaptive_weight(const Tensor& ir, const ResidualMap& residual) {
    require(ir.same_shape(residual.m), "adaptive_weight: shape mismatch");
    const Tensor zi = standardize(ir);
    const Tensor zm = standardize(residual.m);
    Tensor en(ir.shape());
    core::parallel_for(ir.numel(), [&](int64_t i) {
        const double si = sigmoid(zi[i]);
        const double sm = sigmoid(zm[i]);
        en[i] = (si * (1.0 - sm) + sm * (1.0 - si)) * 0.5;
    });
    const double thr = mean_of(en) + stddev_of(en);
    Tensor w(ir.shape()), wc(ir.shape());
    core::parallel_for(ir.numel(), [&](int64_t i) {
        w[i] = en[i] > thr ? 1.0 : 0.0;
        wc[i] = 1.0 - w[i];
    });
    return {std::move(w), std::move(wc)};
}

Tensor apply_spectral_mask(const Tensor& x, const ComplexPlane& mask) {
    ComplexPlane spec = core::fft2(x);
    Tensor re(spec.re.shape()), im(spec.re.shape());
    core::parallel_for(spec.re.numel(), [&](int64_t i) {
        re[i] = spec.re[i] * mask.re[i] - spec.im[i] * mask.im[i];
        im[i] = spec.re[i] * mask.im[i] + spec.im[i] * mask.re[i];
    });
    return core::ifft2_real({std::move(re), std::move(im)});
}

}  // namespace rpf::imaging
