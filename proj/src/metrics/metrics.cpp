#include "rpf/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "rpf/core/fft.hpp"
#include "rpf/core/parallel.hpp"

namespace rpf::metrics {

const std::vector<std::string>& MetricReport::names() {
    static const std::vector<std::string> n = {"EN", "SF", "SD", "CC", "SCD", "VIF"};
    return n;
}

double entropy(const Tensor& img) {
    std::vector<int64_t> hist(256, 0);
    for (int64_t i = 0; i < img.numel(); ++i) {
        int bin = static_cast<int>(img[i] * 256.0);
        bin = std::clamp(bin, 0, 255);
        ++hist[static_cast<size_t>(bin)];
    }
    const double total = static_cast<double>(img.numel());
    double h = 0.0;
    for (int64_t c : hist) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / total;
        h -= p * std::log2(p);
    }
    return h;
}

double spatial_frequency(const Tensor& img) {
    const int h = img.height(), w = img.width();
    const double n = static_cast<double>(h) * w;
    double rf = 0.0, cf = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 1; x < w; ++x) {
            const double d = (img.at(y, x) - img.at(y, x - 1)) * 255.0;
            rf += d * d;
        }
    for (int y = 1; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double d = (img.at(y, x) - img.at(y - 1, x)) * 255.0;
            cf += d * d;
        }
    return std::sqrt(rf / n + cf / n);
}

double std_dev(const Tensor& img) {
    double lo = img[0], hi = img[0];
    for (int64_t i = 0; i < img.numel(); ++i) {
        lo = std::min(lo, img[i]);
        hi = std::max(hi, img[i]);
    }
    if (lo == hi) return 0.0;
    double mu = 0.0;
    for (int64_t i = 0; i < img.numel(); ++i) mu += img[i];
    mu /= static_cast<double>(img.numel());
    double v = 0.0;
    for (int64_t i = 0; i < img.numel(); ++i) v += (img[i] - mu) * (img[i] - mu);
    return 255.0 * std::sqrt(v / static_cast<double>(img.numel()));
}

double pearson(const Tensor& a, const Tensor& b) {
    const double n = static_cast<double>(a.numel());
    double ma = 0.0, mb = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

double correlation_cc(const Tensor& fused, const Tensor& ir, const Tensor& vis_y) {
    return 0.5 * (pearson(fused, ir) + pearson(fused, vis_y));
}

double scd(const Tensor& fused, const Tensor& ir, const Tensor& vis_y) {
    Tensor d1(fused.shape()), d2(fused.shape());
    for (int64_t i = 0; i < fused.numel(); ++i) {
        d1[i] = fused[i] - vis_y[i];
        d2[i] = fused[i] - ir[i];
    }
    return pearson(d1, ir) + pearson(d2, vis_y);
}

namespace {

std::vector<double> gaussian_1d(int n, double sigma) {
    std::vector<double> k(static_cast<size_t>(n));
    const double c = (n - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        k[static_cast<size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// separable valid-mode filtering, parallel over output rows
Tensor filter_valid_sep(const Tensor& img, const std::vector<double>& k) {
    const int h = img.height(), w = img.width(), n = static_cast<int>(k.size());
    const int ow = w - n + 1, oh = h - n + 1;
    Tensor horiz({h, ow});
    core::parallel_for(h, [&](int64_t y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[static_cast<size_t>(i)] * img.at(static_cast<int>(y), x + i);
            horiz.at(static_cast<int>(y), x) = acc;
        }
    });
    Tensor out({oh, ow});
    core::parallel_for(oh, [&](int64_t y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[static_cast<size_t>(i)] * horiz.at(static_cast<int>(y) + i, x);
            out.at(static_cast<int>(y), x) = acc;
        }
    });
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

double vif(const Tensor& fused, const Tensor& reference) {
    constexpr double kSigmaNsq = 2.0;
    constexpr double kEps = 1e-10;
    Tensor ref(reference.shape()), dist(fused.shape());
    core::parallel_for(reference.numel(), [&](int64_t i) {
        ref[i] = reference[i] * 255.0;
        dist[i] = fused[i] * 255.0;
    });
    double num = 0.0, den = 0.0;
    for (int scale = 1; scale <= 4; ++scale) {
        const int n = (1 << (4 - scale + 1)) + 1;
        const std::vector<double> win = gaussian_1d(n, n / 5.0);
        if (scale > 1) {
            if (ref.height() < n || ref.width() < n) break;
            ref = downsample2(filter_valid_sep(ref, win));
            dist = downsample2(filter_valid_sep(dist, win));
        }
        if (ref.height() < n || ref.width() < n) break;
        const Tensor mu1 = filter_valid_sep(ref, win);
        const Tensor mu2 = filter_valid_sep(dist, win);
        Tensor ref_sq(ref.shape()), dist_sq(dist.shape()), cross(ref.shape());
        for (int64_t i = 0; i < ref.numel(); ++i) {
            ref_sq[i] = ref[i] * ref[i];
            dist_sq[i] = dist[i] * dist[i];
            cross[i] = ref[i] * dist[i];
        }
        const Tensor s1 = filter_valid_sep(ref_sq, win);
        const Tensor s2 = filter_valid_sep(dist_sq, win);
        const Tensor s12 = filter_valid_sep(cross, win);
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

MetricReport evaluate(const Tensor& fused, const Tensor& ir, const Tensor& vis_y) {
    MetricReport r;
    r.en = entropy(fused);
    r.sf = spatial_frequency(fused);
    r.sd = std_dev(fused);
    r.cc = correlation_cc(fused, ir, vis_y);
    r.scd = scd(fused, ir, vis_y);
    r.vif = 0.5 * (vif(fused, ir) + vif(fused, vis_y));
    return r;
}

namespace {

// ranks (1 = best) with ties averaged
std::vector<double> rank_desc(const std::vector<double>& values, bool higher_is_better) {
    const size_t n = values.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return higher_is_better ? values[a] > values[b] : values[a] < values[b];
    });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

std::vector<double> ror_rank(const std::vector<std::vector<double>>& table,
                             bool higher_is_better) {
    const size_t methods = table.size();
    if (methods < 2) throw std::invalid_argument("ror_rank: need at least two methods");
    const size_t n_metrics = table[0].size();
    if (n_metrics < 1) throw std::invalid_argument("ror_rank: need at least one metric");
    for (const auto& row : table) {
        if (row.size() != n_metrics)
            throw std::invalid_argument("ror_rank: ragged table");
        for (double v : row)
            if (!std::isfinite(v)) throw std::invalid_argument("ror_rank: non-finite metric value");
    }
    std::vector<double> mean_rank(methods, 0.0);
    for (size_t m = 0; m < n_metrics; ++m) {
        std::vector<double> col(methods);
        for (size_t i = 0; i < methods; ++i) col[i] = table[i][m];
        const std::vector<double> r = rank_desc(col, higher_is_better);
        for (size_t i = 0; i < methods; ++i) mean_rank[i] += r[i];
    }
    for (auto& v : mean_rank) v /= static_cast<double>(n_metrics);
    return rank_desc(mean_rank, /*higher_is_better=*/false);
}

PsdReport psd_analyze(const Tensor& img) {
    const int h = img.height(), w = img.width();
    const double hw = static_cast<double>(h) * w;
    double mu = 0.0;
    for (int64_t i = 0; i < img.numel(); ++i) mu += img[i];
    mu /= hw;
    Tensor centered({h, w});
    for (int64_t i = 0; i < img.numel(); ++i) centered[i] = img[i] - mu;

    const core::ComplexPlane spec = core::fft2(centered);
    PsdReport rep;
    rep.psd2d = Tensor({h, w});
    double total = 0.0;
    for (int64_t i = 0; i < rep.psd2d.numel(); ++i) {
        rep.psd2d[i] = (spec.re[i] * spec.re[i] + spec.im[i] * spec.im[i]) / hw;
        total += rep.psd2d[i];
    }

    const int rmax = std::min(h, w) / 2;
    std::vector<double> acc(static_cast<size_t>(rmax) + 1, 0.0);
    std::vector<int64_t> cnt(static_cast<size_t>(rmax) + 1, 0);
    for (int y = 0; y < h; ++y) {
        const int fy = y <= h / 2 ? y : y - h;
        for (int x = 0; x < w; ++x) {
            const int fx = x <= w / 2 ? x : x - w;
            const int r = static_cast<int>(std::llround(std::sqrt(double(fy) * fy + double(fx) * fx)));
            if (r > rmax) continue;
            acc[static_cast<size_t>(r)] += rep.psd2d.at(y, x);
            ++cnt[static_cast<size_t>(r)];
        }
    }
    rep.radial_profile.resize(acc.size());
    for (size_t i = 0; i < acc.size(); ++i)
        rep.radial_profile[i] = cnt[i] > 0 ? acc[i] / static_cast<double>(cnt[i]) : 0.0;

    if (total > 0.0) {
        double hbits = 0.0;
        for (int64_t i = 0; i < rep.psd2d.numel(); ++i) {
            const double p = rep.psd2d[i] / total;
            if (p > 0.0) hbits -= p * std::log2(p);
        }
        rep.spectral_entropy = hbits;
    }
    return rep;
}

std::pair<double, double> psd_fidelity(const Tensor& fused, const Tensor& ir,
                                       const Tensor& vis) {
    auto logged = [](const std::vector<double>& v) {
        Tensor t({1, static_cast<int>(v.size())});
        for (size_t i = 0; i < v.size(); ++i) t[static_cast<int64_t>(i)] = std::log1p(v[i]);
        return t;
    };
    const Tensor pf = logged(psd_analyze(fused).radial_profile);
    const Tensor pi = logged(psd_analyze(ir).radial_profile);
    const Tensor pv = logged(psd_analyze(vis).radial_profile);
    return {pearson(pf, pi), pearson(pf, pv)};
}

}  // namespace rpf::metrics
