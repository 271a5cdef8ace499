#pragma once

#include "rpf/core/tensor.hpp"

namespace rpf::core {

/// Direct stride-1 2-D convolution kernels on (N,C,H,W) batches, zero padding.
/// Output spatial size is H + 2*pad - dilation*(k-1); pad = dilation*(k-1)/2
/// preserves size. Inner loops run over contiguous rows so they vectorize;
/// parallelism is over independent output slices, which keeps every output
/// element's accumulation order fixed.

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& bias,
                      int pad, int dilation);

/// Gradient w.r.t. the input: convolution of grad_y with the flipped,
/// channel-transposed weights.
Tensor conv2d_grad_input(const Tensor& grad_y, const Tensor& w, int pad, int dilation);

void conv2d_grad_params(const Tensor& x, const Tensor& grad_y, int pad, int dilation,
                        Tensor& grad_w, Tensor& grad_b);

/// Zero-pads the spatial dims of a (N,C,H,W) tensor.
Tensor pad_zero(const Tensor& x, int pad);

}  // namespace rpf::core
