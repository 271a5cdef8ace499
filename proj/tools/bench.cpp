// Times the OpenMP kernels against the serial reference implementations and
// reports the largest numeric deviation alongside the speedup.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "rpf/core/conv.hpp"
#include "rpf/core/fft.hpp"
#include "rpf/core/parallel.hpp"
#include "rpf/core/rng.hpp"
#include "rpf/imaging/imaging.hpp"
#include "rpf/reference/reference.hpp"

using rpf::core::Rng;
using rpf::core::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
    return t;
}

double time_ms(const std::function<void()>& fn, int repeats) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

void report(const char* name, double serial_ms, double parallel_ms, double diff) {
    std::printf("%-28s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   max|diff| %.2e\n",
                name, serial_ms, parallel_ms, serial_ms / parallel_ms, diff);
}

}  // namespace

int main() {
    Rng rng(7);
    std::printf("threads: %d\n\n", rpf::core::num_threads());

    {  // 3x3 convolution, the training hot path
        const Tensor x = random_tensor({4, 32, 64, 64}, rng);
        const Tensor w = random_tensor({32, 32, 3, 3}, rng);
        const Tensor b = random_tensor({32}, rng);
        Tensor ref, fast;
        const double ts = time_ms([&] { ref = rpf::ref::conv2d_direct(x, w, b, 1, 1); }, 3);
        const double tp = time_ms([&] { fast = rpf::core::conv2d_forward(x, w, b, 1, 1); }, 3);
        report("conv2d 3x3 (4,32,64,64)", ts, tp, max_abs_diff(ref, fast));
    }
    {  // dilated convolution
        const Tensor x = random_tensor({4, 32, 64, 64}, rng);
        const Tensor w = random_tensor({32, 32, 3, 3}, rng);
        const Tensor b = random_tensor({32}, rng);
        Tensor ref, fast;
        const double ts = time_ms([&] { ref = rpf::ref::conv2d_direct(x, w, b, 5, 5); }, 3);
        const double tp = time_ms([&] { fast = rpf::core::conv2d_forward(x, w, b, 5, 5); }, 3);
        report("conv2d 3x3 r=5 dilated", ts, tp, max_abs_diff(ref, fast));
    }
    {  // 2-D FFT vs the naive row-column DFT
        const Tensor x = random_tensor({128, 128}, rng);
        std::vector<rpf::ref::cplx> ref_spec;
        rpf::core::ComplexPlane fast_spec;
        const double ts = time_ms([&] { ref_spec = rpf::ref::dft2(x); }, 3);
        const double tp = time_ms([&] { fast_spec = rpf::core::fft2(x); }, 3);
        double diff = 0.0;
        for (int64_t i = 0; i < x.numel(); ++i)
            diff = std::max(diff, std::abs(ref_spec[static_cast<size_t>(i)] -
                                           rpf::ref::cplx(fast_spec.re[i], fast_spec.im[i])));
        report("fft2 128x128", ts, tp, diff);
    }
    {  // Sobel magnitude
        const Tensor x = random_tensor({512, 512}, rng);
        Tensor ref, fast;
        const double ts = time_ms([&] { ref = rpf::ref::sobel_direct(x); }, 5);
        const double tp = time_ms([&] { fast = rpf::imaging::sobel_gradient(x); }, 5);
        report("sobel 512x512", ts, tp, max_abs_diff(ref, fast));
    }
    {  // adaptive weight
        const Tensor ir = random_tensor({512, 512}, rng);
        const Tensor vis = random_tensor({512, 512}, rng);
        const rpf::imaging::ResidualMap m = rpf::imaging::compute_residual(ir, vis);
        Tensor ref, fast;
        const double ts = time_ms([&] { ref = rpf::ref::adaptive_weight_loop(ir, m.m).first; }, 5);
        const double tp = time_ms([&] { fast = rpf::imaging::adaptive_weight(ir, m).first; }, 5);
        report("adaptive weight 512x512", ts, tp, max_abs_diff(ref, fast));
    }
    return 0;
}
