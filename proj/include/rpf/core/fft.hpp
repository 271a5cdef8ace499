#pragma once

#include <complex>
#include <vector>

#include "rpf/core/tensor.hpp"

namespace rpf::core {

using cplx = std::complex<double>;

/// In-place 1-D DFT of length n, unnormalized. Radix-2 Cooley-Tukey for
/// powers of two, Bluestein's chirp-z transform otherwise. inverse=true
/// conjugates the twiddles but applies no 1/n scaling.
void fft(cplx* a, int n, bool inverse);

/// A real H×W spectrum pair. Forward transform is unnormalized; the inverse
/// carries the full 1/(HW) factor.
struct ComplexPlane {
    Tensor re;
    Tensor im;
    int height() const { return re.height(); }
    int width() const { return re.width(); }
};

/// 2-D DFT of a real (H,W) plane. Rows then columns, parallel over lines.
/// Throws std::invalid_argument on non-finite input.
ComplexPlane fft2(const Tensor& plane);

/// Full complex inverse, scaled by 1/(HW).
ComplexPlane ifft2(const ComplexPlane& spec);

/// Inverse transform keeping only the real part (the imaginary residue of a
/// conjugate-symmetric spectrum is below 1e-6 and is discarded).
Tensor ifft2_real(const ComplexPlane& spec);

/// In-place 2-D transforms over a batch of channels laid out contiguously as
/// `channels` planes of h*w complex values. Used by the autodiff FFT ops.
void fft2_batch(cplx* data, int channels, int h, int w, bool inverse_scaled);

}  // namespace rpf::core
