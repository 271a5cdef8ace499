#include "rpf/reference/reference.hpp"

#include <algorithm>
#include <cmath>

namespace rpf::ref {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<cplx> dft1(const std::vector<cplx>& in, bool inverse) {
    const int n = static_cast<int>(in.size());
    std::vector<cplx> out(in.size());
    const double sign = inverse ? 1.0 : -1.0;
    for (int k = 0; k < n; ++k) {
        cplx acc(0, 0);
        for (int j = 0; j < n; ++j) {
            const double ang = sign * 2.0 * kPi * static_cast<double>((static_cast<long long>(k) * j) % n) / n;
            acc += in[j] * cplx(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

std::vector<cplx> dft2_impl(std::vector<cplx> buf, int h, int w, bool inverse) {
    for (int y = 0; y < h; ++y) {
        std::vector<cplx> row(buf.begin() + static_cast<int64_t>(y) * w,
                              buf.begin() + static_cast<int64_t>(y + 1) * w);
        row = dft1(row, inverse);
        std::copy(row.begin(), row.end(), buf.begin() + static_cast<int64_t>(y) * w);
    }
    for (int x = 0; x < w; ++x) {
        std::vector<cplx> col(h);
        for (int y = 0; y < h; ++y) col[y] = buf[static_cast<int64_t>(y) * w + x];
        col = dft1(col, inverse);
        for (int y = 0; y < h; ++y) buf[static_cast<int64_t>(y) * w + x] = col[y];
    }
    return buf;
}

// min-shifted like the production mean, so constant planes are exact
double mean_loop(const Tensor& x) {
    double lo = x[0];
    for (int64_t i = 0; i < x.numel(); ++i) lo = std::min(lo, x[i]);
    double s = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) s += x[i] - lo;
    return lo + s / static_cast<double>(x.numel());
}

double stddev_loop(const Tensor& x) {
    const double mu = mean_loop(x);
    double s = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) s += (x[i] - mu) * (x[i] - mu);
    return std::sqrt(s / static_cast<double>(x.numel()));
}

double rms_loop(const Tensor& x) {
    double s = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) s += x[i] * x[i];
    return std::sqrt(s / static_cast<double>(x.numel()));
}

}  // namespace

std::vector<cplx> dft2(const Tensor& plane) {
    const int h = plane.height(), w = plane.width();
    std::vector<cplx> buf(static_cast<size_t>(h) * w);
    for (int64_t i = 0; i < plane.numel(); ++i) buf[static_cast<size_t>(i)] = cplx(plane[i], 0.0);
    return dft2_impl(std::move(buf), h, w, false);
}

std::vector<cplx> idft2(const std::vector<cplx>& spec, int h, int w) {
    std::vector<cplx> out = dft2_impl(spec, h, w, true);
    const double s = 1.0 / (static_cast<double>(h) * w);
    for (auto& v : out) v *= s;
    return out;
}

Tensor circular_convolve(const Tensor& x, const Tensor& kernel) {
    const int h = x.height(), w = x.width();
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
            double acc = 0.0;
            for (int ky = 0; ky < h; ++ky)
                for (int kx = 0; kx < w; ++kx)
                    acc += x.at(ky, kx) * kernel.at(((y - ky) % h + h) % h, ((xx - kx) % w + w) % w);
            out.at(y, xx) = acc;
        }
    return out;
}

Tensor conv2d_direct(const Tensor& x, const Tensor& w, const Tensor& bias,
                     int pad, int dilation) {
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), ww = x.dim(3);
    const int cout = w.dim(0), k = w.dim(2);
    const int oh = h + 2 * pad - dilation * (k - 1);
    const int ow = ww + 2 * pad - dilation * (k - 1);
    Tensor out({n, cout, oh, ow});
    for (int in = 0; in < n; ++in)
        for (int co = 0; co < cout; ++co)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx) {
                    double acc = bias.numel() > 0 ? bias[co] : 0.0;
                    for (int ci = 0; ci < cin; ++ci)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int sy = y + ky * dilation - pad;
                                const int sx = xx + kx * dilation - pad;
                                if (sy < 0 || sy >= h || sx < 0 || sx >= ww) continue;
                                acc += w.at(co, ci, ky, kx) * x.at(in, ci, sy, sx);
                            }
                    out.at(in, co, y, xx) = acc;
                }
    return out;
}

Tensor sobel_direct(const Tensor& img) {
    const int h = img.height(), w = img.width();
    const double kx_k[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    const double ky_k[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double gx = 0.0, gy = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int sy = std::clamp(y + dy, 0, h - 1);
                    const int sx = std::clamp(x + dx, 0, w - 1);
                    gx += kx_k[dy + 1][dx + 1] * img.at(sy, sx);
                    gy += ky_k[dy + 1][dx + 1] * img.at(sy, sx);
                }
            out.at(y, x) = std::sqrt(gx * gx + gy * gy);
        }
    return out;
}

Tensor texture_mask_loop(const Tensor& vis_y) {
    const Tensor s = sobel_direct(vis_y);
    const double mu = mean_loop(s);
    Tensor mask(s.shape());
    for (int64_t i = 0; i < s.numel(); ++i) mask[i] = s[i] > mu ? 1.0 : 0.0;
    return mask;
}

Tensor thermal_mask_loop(const Tensor& ir) {
    const double thr = mean_loop(ir) + stddev_loop(ir);
    Tensor mask(ir.shape());
    for (int64_t i = 0; i < ir.numel(); ++i) mask[i] = ir[i] > thr ? 1.0 : 0.0;
    return mask;
}

std::pair<Tensor, Tensor> adaptive_weight_loop(const Tensor& ir, const Tensor& residual) {
    auto standardized = [](const Tensor& t) {
        const double mu = mean_loop(t);
        const double sd = stddev_loop(t);
        Tensor z(t.shape());
        for (int64_t i = 0; i < t.numel(); ++i) z[i] = (t[i] - mu) / (sd + 1e-9);
        return z;
    };
    const Tensor zi = standardized(ir);
    const Tensor zm = standardized(residual);
    Tensor en(ir.shape());
    for (int64_t i = 0; i < ir.numel(); ++i) {
        const double si = 1.0 / (1.0 + std::exp(-zi[i]));
        const double sm = 1.0 / (1.0 + std::exp(-zm[i]));
        en[i] = (si * (1.0 - sm) + sm * (1.0 - si)) / 2.0;
    }
    const double thr = mean_loop(en) + stddev_loop(en);
    Tensor w(ir.shape()), wc(ir.shape());
    for (int64_t i = 0; i < ir.numel(); ++i) {
        w[i] = en[i] > thr ? 1.0 : 0.0;
        wc[i] = 1.0 - w[i];
    }
    return {std::move(w), std::move(wc)};
}

double loss_grad_loop(const Tensor& m_prime, const Tensor& ir, const Tensor& vis_y,
                      double lambda1) {
    const Tensor gm = sobel_direct(m_prime);
    const Tensor gi = sobel_direct(ir);
    Tensor diff(gm.shape());
    for (int64_t i = 0; i < gm.numel(); ++i) diff[i] = gm[i] - gi[i];
    const Tensor mask = texture_mask_loop(vis_y);
    Tensor masked(m_prime.shape());
    for (int64_t i = 0; i < m_prime.numel(); ++i) masked[i] = m_prime[i] * mask[i];
    return rms_loop(diff) - lambda1 * rms_loop(masked);
}

double loss_reg_loop(const Tensor& m_prime, const Tensor& ir) {
    const Tensor mask = thermal_mask_loop(ir);
    Tensor masked(m_prime.shape());
    for (int64_t i = 0; i < m_prime.numel(); ++i) masked[i] = m_prime[i] * mask[i];
    return -rms_loop(masked);
}

double freq_l1_loop(const Tensor& a, const Tensor& b) {
    const auto sa = dft2(a);
    const auto sb = dft2(b);
    double s = 0.0;
    for (size_t i = 0; i < sa.size(); ++i) s += std::abs(sa[i] - sb[i]);
    return s / static_cast<double>(sa.size());
}

double loss_contrastive_loop(const Tensor& fused_y, const Tensor& ir, const Tensor& vis_y,
                             const Tensor& w, const Tensor& w_comp, double eps) {
    auto masked = [](const Tensor& t, const Tensor& m) {
        Tensor out(t.shape());
        for (int64_t i = 0; i < t.numel(); ++i) out[i] = t[i] * m[i];
        return out;
    };
    const Tensor fw = masked(fused_y, w), fwc = masked(fused_y, w_comp);
    const Tensor iw = masked(ir, w), iwc = masked(ir, w_comp);
    const Tensor vw = masked(vis_y, w), vwc = masked(vis_y, w_comp);
    const double d_pos = freq_l1_loop(fw, iw) + freq_l1_loop(fwc, vwc);
    const double d_neg = freq_l1_loop(fw, iwc) + freq_l1_loop(fw, vw) +
                         freq_l1_loop(fwc, iw) + freq_l1_loop(fwc, vwc);
    return d_pos / (d_neg + eps);
}

double pearson_loop(const Tensor& a, const Tensor& b) {
    const double ma = mean_loop(a), mb = mean_loop(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

namespace {

Tensor gaussian_window(int n, double sigma) {
    Tensor win({n, n});
    const double c = (n - 1) / 2.0;
    double sum = 0.0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const double v = std::exp(-((y - c) * (y - c) + (x - c) * (x - c)) / (2.0 * sigma * sigma));
            win.at(y, x) = v;
            sum += v;
        }
    for (int64_t i = 0; i < win.numel(); ++i) win[i] /= sum;
    return win;
}

Tensor filter_valid(const Tensor& img, const Tensor& win) {
    const int h = img.height(), w = img.width(), k = win.height();
    const int oh = h - k + 1, ow = w - k + 1;
    Tensor out({oh, ow});
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx)
                    acc += win.at(ky, kx) * img.at(y + ky, x + kx);
            out.at(y, x) = acc;
        }
    return out;
}

Tensor downsample2(const Tensor& img) {
    const int oh = (img.height() + 1) / 2, ow = (img.width() + 1) / 2;
    Tensor out({oh, ow});
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) out.at(y, x) = img.at(2 * y, 2 * x);
    return out;
}

}  // namespace

double vif_straightline(const Tensor& fused, const Tensor& reference) {
    constexpr double kSigmaNsq = 2.0;
    constexpr double kEps = 1e-10;
    Tensor ref_img(reference.shape()), dist(fused.shape());
    for (int64_t i = 0; i < reference.numel(); ++i) {
        ref_img[i] = reference[i] * 255.0;
        dist[i] = fused[i] * 255.0;
    }
    double num = 0.0, den = 0.0;
    for (int scale = 1; scale <= 4; ++scale) {
        const int n = (1 << (4 - scale + 1)) + 1;
        const Tensor win = gaussian_window(n, n / 5.0);
        if (scale > 1) {
            if (ref_img.height() < n || ref_img.width() < n) break;
            ref_img = downsample2(filter_valid(ref_img, win));
            dist = downsample2(filter_valid(dist, win));
        }
        if (ref_img.height() < n || ref_img.width() < n) break;
        const Tensor mu1 = filter_valid(ref_img, win);
        const Tensor mu2 = filter_valid(dist, win);
        auto sq = [](const Tensor& t) {
            Tensor o(t.shape());
            for (int64_t i = 0; i < t.numel(); ++i) o[i] = t[i] * t[i];
            return o;
        };
        auto mul = [](const Tensor& a, const Tensor& b) {
            Tensor o(a.shape());
            for (int64_t i = 0; i < a.numel(); ++i) o[i] = a[i] * b[i];
            return o;
        };
        const Tensor s1 = filter_valid(sq(ref_img), win);
        const Tensor s2 = filter_valid(sq(dist), win);
        const Tensor s12 = filter_valid(mul(ref_img, dist), win);
        for (int64_t i = 0; i < mu1.numel(); ++i) {
            double sigma1_sq = std::max(0.0, s1[i] - mu1[i] * mu1[i]);
            double sigma2_sq = std::max(0.0, s2[i] - mu2[i] * mu2[i]);
            const double sigma12 = s12[i] - mu1[i] * mu2[i];
            double g = sigma12 / (sigma1_sq + kEps);
            double sv_sq = sigma2_sq - g * sigma12;
            if (sigma1_sq < kEps) {
                g = 0.0;
                sv_sq = sigma2_sq;
                sigma1_sq = 0.0;
            }
            if (sigma2_sq < kEps) {
                g = 0.0;
                sv_sq = 0.0;
            }
            if (g < 0.0) {
                sv_sq = sigma2_sq;
                g = 0.0;
            }
            if (sv_sq < kEps) sv_sq = kEps;
            num += std::log10(1.0 + g * g * sigma1_sq / (sv_sq + kSigmaNsq));
            den += std::log10(1.0 + sigma1_sq / kSigmaNsq);
        }
    }
    if (den <= 0.0) return 1.0;
    return num / den;
}

}  // namespace rpf::ref
