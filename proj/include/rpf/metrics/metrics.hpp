#pragma once

#include <utility>
#include <vector>

#include "rpf/core/tensor.hpp"

namespace rpf::metrics {

using core::Tensor;

/// The six fusion metrics of one image. EN in bits; SF/SD on the 0-255 scale
/// the published tables use; CC/SCD/VIF dimensionless.
struct MetricReport {
    double en = 0, sf = 0, sd = 0, cc = 0, scd = 0, vif = 0;
    std::vector<double> as_row() const { return {en, sf, sd, cc, scd, vif}; }
    static const std::vector<std::string>& names();
};

/// Shannon entropy (bits) of the 256-bin histogram of a unit-range image.
double entropy(const Tensor& img);

/// sqrt(mean(row diffs^2) + mean(col diffs^2)) on the 0-255 scale; the means
/// divide by the full pixel count.
double spatial_frequency(const Tensor& img);

/// Population standard deviation on the 0-255 scale.
double std_dev(const Tensor& img);

/// Pearson correlation; either operand constant -> 0.
double pearson(const Tensor& a, const Tensor& b);

/// (r(F,IR) + r(F,VIS_Y)) / 2
double correlation_cc(const Tensor& fused, const Tensor& ir, const Tensor& vis_y);

/// r(F - VIS_Y, IR) + r(F - IR, VIS_Y)
double scd(const Tensor& fused, const Tensor& ir, const Tensor& vis_y);

/// Pixel-domain multi-scale VIF of `fused` against a reference
/// (4 scales, Gaussian pyramid, sigma_n^2 = 2 on the 0-255 scale).
double vif(const Tensor& fused, const Tensor& reference);

/// All six metrics; VIF is the mean against both sources.
MetricReport evaluate(const Tensor& fused, const Tensor& ir, const Tensor& vis_y);

/// Rank-of-ranks over a methods x metrics table. Per metric, dense ranks with
/// ties averaged (rank 1 = best); per method the mean rank; the result ranks
/// those means (ties averaged again). Throws std::invalid_argument on NaN or
/// degenerate input.
std::vector<double> ror_rank(const std::vector<std::vector<double>>& table,
                             bool higher_is_better = true);

struct PsdReport {
    Tensor psd2d;                        // |FFT(img - mean)|^2 / (HW), DC at (0,0)
    std::vector<double> radial_profile;  // mean energy per integer radius, 0..Nyquist
    double spectral_entropy = 0;         // bits, of the normalized psd2d
};

PsdReport psd_analyze(const Tensor& img);

/// Pearson correlation of log(1 + radial profile) between the fused image and
/// each source.
std::pair<double, double> psd_fidelity(const Tensor& fused, const Tensor& ir,
                                       const Tensor& vis);

}  // namespace rpf::metrics
