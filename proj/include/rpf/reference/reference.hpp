#pragma once

#include <complex>
#include <utility>
#include <vector>

#include "rpf/core/tensor.hpp"

/// Straight-line serial implementations, independent of the parallel kernels
/// in rpf::core / rpf::loss. Tests check the production paths against these;
/// the benchmark tool times the two sides against each other. Everything here
/// favors obviousness over speed.
namespace rpf::ref {

using core::Tensor;
using cplx = std::complex<double>;

/// Naive row-column 2-D DFT (unnormalized forward).
std::vector<cplx> dft2(const Tensor& plane);
/// Inverse of dft2, scaled by 1/(HW).
std::vector<cplx> idft2(const std::vector<cplx>& spec, int h, int w);

/// Circular (periodic) convolution of two H×W planes.
Tensor circular_convolve(const Tensor& x, const Tensor& kernel);

/// Plain seven-loop convolution, zero padding, stride 1.
Tensor conv2d_direct(const Tensor& x, const Tensor& w, const Tensor& bias,
                     int pad, int dilation);

Tensor sobel_direct(const Tensor& img);

Tensor texture_mask_loop(const Tensor& vis_y);
Tensor thermal_mask_loop(const Tensor& ir);
std::pair<Tensor, Tensor> adaptive_weight_loop(const Tensor& ir, const Tensor& residual);

/// Scalar-loop loss evaluations; norms are mean-normalized (RMS for the
/// 2-norm, mean absolute for the 1-norm) to match the production convention.
double loss_grad_loop(const Tensor& m_prime, const Tensor& ir, const Tensor& vis_y,
                      double lambda1);
double loss_reg_loop(const Tensor& m_prime, const Tensor& ir);
double freq_l1_loop(const Tensor& a, const Tensor& b);
double loss_contrastive_loop(const Tensor& fused_y, const Tensor& ir, const Tensor& vis_y,
                             const Tensor& w, const Tensor& w_comp, double eps);

double pearson_loop(const Tensor& a, const Tensor& b);  // zero variance -> 0

/// Independent pixel-domain multi-scale VIF (4 scales, sigma_n^2 = 2 on the
/// 0-255 scale).
double vif_straightline(const Tensor& fused, const Tensor& reference);

}  // namespace rpf::ref
