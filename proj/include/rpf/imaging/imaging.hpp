#pragma once

#include <utility>

#include "rpf/core/fft.hpp"
#include "rpf/core/tensor.hpp"

namespace rpf::imaging {

using core::ComplexPlane;
using core::Tensor;

/// A registered infrared/visible pair with the derived YCbCr planes of the
/// visible image. All planes unit-range, all shapes H×W.
struct SourcePair {
    Tensor ir;       // (H,W)
    Tensor vis_rgb;  // (3,H,W); empty for grayscale-pair fusion
    Tensor vis_y, vis_cb, vis_cr;
    int height() const { return ir.height(); }
    int width() const { return ir.width(); }
};

/// Signed modality difference ir - vis_y, in [-1,1].
struct ResidualMap {
    Tensor m;
};

/// Binary masks used by the losses. Elements are exactly 0 or 1 and
/// weight + weight_complement == 1 everywhere.
struct MaskSet {
    Tensor texture_mask;
    Tensor thermal_mask;
    Tensor weight;
    Tensor weight_complement;
};

struct YCbCr {
    Tensor y, cb, cr;
};

/// ITU-R BT.601 full-range transforms. Chroma planes are offset-centered at
/// 0.5. Throws std::invalid_argument on shape mismatch or out-of-range setup.
YCbCr rgb_to_ycbcr(const Tensor& rgb);
Tensor ycbcr_to_rgb(const Tensor& y, const Tensor& cb, const Tensor& cr);  // clamped to [0,1]

/// Builds a SourcePair from an ir plane and a visible image (RGB (3,H,W) or
/// grayscale (H,W), in which case vis_y is the plane itself).
SourcePair make_source_pair(Tensor ir, Tensor vis);

ResidualMap compute_residual(const Tensor& ir, const Tensor& vis_y);

/// 3×3 Sobel magnitude sqrt(Gx^2+Gy^2) with replicate borders.
Tensor sobel_gradient(const Tensor& img);

/// 1 where the Sobel magnitude exceeds its spatial mean (strict), else 0.
Tensor texture_mask(const Tensor& vis_y);

/// 1 where ir > mean(ir) + stddev(ir) (population sigma, strict), else 0.
Tensor thermal_mask(const Tensor& ir);

/// Adaptive contrastive weight of the saliency blend of standardized ir and
/// residual. Returns {w, 1-w}.
std::pair<Tensor, Tensor> adaptive_weight(const Tensor& ir, const ResidualMap& residual);

/// (x - mean) / (sigma + 1e-9), population sigma.
Tensor standardize(const Tensor& x);

double mean_of(const Tensor& x);
double stddev_of(const Tensor& x);  // population

/// Pointwise spectral filtering: ifft2(fft2(x) .* mask). Equivalent to
/// circular convolution with the mask's inverse transform.
Tensor apply_spectral_mask(const Tensor& x, const ComplexPlane& mask);

}  // namespace rpf::imaging
