#pragma once

#include "rpf/nn/autodiff.hpp"

namespace rpf::nn {

// elementwise / scalar
Variable add(const Variable& a, const Variable& b);
Variable sub(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable divide(const Variable& a, const Variable& b);
Variable add_scalar(const Variable& a, double s);
Variable mul_scalar(const Variable& a, double s);
Variable relu(const Variable& a);
Variable sigmoid(const Variable& a);
Variable tanh_op(const Variable& a);
Variable square(const Variable& a);
/// sqrt with a zero subgradient at 0.
Variable sqrt_safe(const Variable& a);

// reductions -> scalar (shape {1})
Variable sum(const Variable& a);
Variable mean(const Variable& a);

// shape / structure
Variable reshape(const Variable& a, std::vector<int> shape);
Variable concat_channels(const Variable& a, const Variable& b);
Variable select_sample(const Variable& a, int n);  // (N,C,H,W) -> (1,C,H,W)
Variable stop_gradient(const Variable& a);

// convolution & padding (stride 1)
Variable conv2d(const Variable& x, const Variable& w, const Variable& bias,
                int pad, int dilation = 1);
Variable pad_replicate(const Variable& x, int pad);

// batch normalization
enum class BnMode { Train, Eval, Identity };
Variable batchnorm2d(const Variable& x, const Variable& gamma, const Variable& beta,
                     Tensor& running_mean, Tensor& running_var, BnMode mode,
                     double eps = 1e-5, double momentum = 0.1);

// pooling / attention helpers
Variable global_avg_pool(const Variable& x);  // (N,C,H,W) -> (N,C,1,1)
Variable global_max_pool(const Variable& x);  // (N,C,H,W) -> (N,C,1,1)
Variable channel_mean(const Variable& x);     // (N,C,H,W) -> (N,1,H,W)
Variable channel_max(const Variable& x);      // (N,C,H,W) -> (N,1,H,W)
Variable broadcast_mul_channel(const Variable& x, const Variable& s);  // s: (N,C,1,1)
Variable broadcast_mul_spatial(const Variable& x, const Variable& s);  // s: (N,1,H,W)

// batched matmul on (B,M,K)x(B,K,N); flags transpose the last two dims
Variable matmul(const Variable& a, const Variable& b, bool ta = false, bool tb = false);
Variable softmax_lastdim(const Variable& a);

// Fourier ops. fft2_stack maps (N,C,H,W) to (N,2C,H,W) with the real parts in
// channels [0,C) and imaginary parts in [C,2C); forward transform is
// unnormalized. ifft2_real inverts that layout with 1/(HW) scaling and keeps
// the real part.
Variable fft2_stack(const Variable& x);
Variable ifft2_real(const Variable& z);

/// Mean over frequency bins of the complex modulus of the spectrum
/// difference of two equal-shaped planes.
Variable freq_l1(const Variable& a, const Variable& b);

/// Mean absolute difference in the spatial domain (used by the
/// spatial-contrastive ablation).
Variable spatial_l1(const Variable& a, const Variable& b);

}  // namespace rpf::nn
