#include "rpf/core/fft.hpp"

#include <cmath>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <stdexcept>

#include "rpf/core/parallel.hpp"

namespace rpf::core {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Precomputed bit-reversal permutation and per-stage twiddles for one
// power-of-two size. Plans are built once and shared read-only.
struct FftPlan {
    std::vector<int> bitrev;
    std::vector<cplx> twiddles;      // concatenated stages: len = 2, 4, ..., n
    std::vector<cplx> twiddles_inv;  // conjugate table
};

const FftPlan& plan_for(int n) {
    static std::mutex mu;
    static std::unordered_map<int, std::unique_ptr<FftPlan>> plans;
    std::lock_guard<std::mutex> lock(mu);
    auto it = plans.find(n);
    if (it != plans.end()) return *it->second;
    auto plan = std::make_unique<FftPlan>();
    plan->bitrev.resize(static_cast<size_t>(n));
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        plan->bitrev[static_cast<size_t>(i)] = j;
    }
    for (int len = 2; len <= n; len <<= 1)
        for (int k = 0; k < len / 2; ++k) {
            const double ang = -2.0 * kPi * k / len;
            plan->twiddles.emplace_back(std::cos(ang), std::sin(ang));
            plan->twiddles_inv.emplace_back(std::cos(ang), -std::sin(ang));
        }
    const FftPlan& ref = *plan;
    plans.emplace(n, std::move(plan));
    return ref;
}

// Iterative radix-2 with a cached plan. n must be a power of two.
void fft_pow2(cplx* a, int n, bool inverse) {
    const FftPlan& plan = plan_for(n);
    for (int i = 1; i < n; ++i) {
        const int j = plan.bitrev[static_cast<size_t>(i)];
        if (i < j) std::swap(a[i], a[j]);
    }
    const cplx* tw = inverse ? plan.twiddles_inv.data() : plan.twiddles.data();
    for (int len = 2; len <= n; len <<= 1) {
        const int half = len / 2;
        for (int i = 0; i < n; i += len) {
            for (int k = 0; k < half; ++k) {
                const double wr = tw[k].real(), wi = tw[k].imag();
                const double br = a[i + k + half].real(), bi = a[i + k + half].imag();
                const double vr = br * wr - bi * wi;
                const double vi = br * wi + bi * wr;
                const double ur = a[i + k].real(), ui = a[i + k].imag();
                a[i + k] = cplx(ur + vr, ui + vi);
                a[i + k + half] = cplx(ur - vr, ui - vi);
            }
        }
        tw += half;
    }
}

// Bluestein's algorithm: expresses a length-n DFT as a circular convolution
// of length m = next_pow2(2n-1). Handles any n.
void fft_bluestein(cplx* a, int n, bool inverse) {
    const int m = next_pow2(2 * n - 1);
    const double sign = inverse ? 1.0 : -1.0;

    std::vector<cplx> chirp(n);
    for (int k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument bounded for large n
        const long long k2 = (static_cast<long long>(k) * k) % (2LL * n);
        const double ang = sign * kPi * static_cast<double>(k2) / n;
        chirp[k] = cplx(std::cos(ang), std::sin(ang));
    }

    std::vector<cplx> fa(m, cplx(0, 0)), fb(m, cplx(0, 0));
    for (int k = 0; k < n; ++k) fa[k] = a[k] * chirp[k];
    fb[0] = std::conj(chirp[0]);
    for (int k = 1; k < n; ++k) fb[k] = fb[m - k] = std::conj(chirp[k]);

    fft_pow2(fa.data(), m, false);
    fft_pow2(fb.data(), m, false);
    for (int k = 0; k < m; ++k) fa[k] *= fb[k];
    fft_pow2(fa.data(), m, true);

    const double inv_m = 1.0 / m;
    for (int k = 0; k < n; ++k) a[k] = fa[k] * inv_m * chirp[k];
}

}  // namespace

void fft(cplx* a, int n, bool inverse) {
    if (n <= 1) return;
    if (is_pow2(n))
        fft_pow2(a, n, inverse);
    else
        fft_bluestein(a, n, inverse);
}

void fft2_batch(cplx* data, int channels, int h, int w, bool inverse_scaled) {
    const bool inv = inverse_scaled;
    const double scale = 1.0 / (static_cast<double>(h) * w);
    // one task per plane; the column scratch is reused across the plane and
    // four columns are gathered per pass to keep the strided walks short
    parallel_for(channels, [&](int64_t c) {
        cplx* plane = data + c * static_cast<int64_t>(h) * w;
        for (int y = 0; y < h; ++y) fft(plane + static_cast<int64_t>(y) * w, w, inv);
        std::vector<cplx> cols(static_cast<size_t>(4) * h);
        int x = 0;
        for (; x + 4 <= w; x += 4) {
            for (int y = 0; y < h; ++y) {
                const cplx* row = plane + static_cast<int64_t>(y) * w + x;
                cols[static_cast<size_t>(y)] = row[0];
                cols[static_cast<size_t>(h + y)] = row[1];
                cols[static_cast<size_t>(2 * h + y)] = row[2];
                cols[static_cast<size_t>(3 * h + y)] = row[3];
            }
            for (int j = 0; j < 4; ++j) fft(cols.data() + static_cast<size_t>(j) * h, h, inv);
            for (int y = 0; y < h; ++y) {
                cplx* row = plane + static_cast<int64_t>(y) * w + x;
                row[0] = cols[static_cast<size_t>(y)];
                row[1] = cols[static_cast<size_t>(h + y)];
                row[2] = cols[static_cast<size_t>(2 * h + y)];
                row[3] = cols[static_cast<size_t>(3 * h + y)];
            }
        }
        for (; x < w; ++x) {
            for (int y = 0; y < h; ++y) cols[static_cast<size_t>(y)] = plane[static_cast<int64_t>(y) * w + x];
            fft(cols.data(), h, inv);
            for (int y = 0; y < h; ++y) plane[static_cast<int64_t>(y) * w + x] = cols[static_cast<size_t>(y)];
        }
        if (inv)
            for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) plane[i] *= scale;
    });
}

ComplexPlane fft2(const Tensor& plane) {
    if (!plane.all_finite())
        throw std::invalid_argument("fft2: non-finite input");
    const int h = plane.height(), w = plane.width();
    std::vector<cplx> buf(static_cast<size_t>(h) * w);
    const double* src = plane.data();
    for (int64_t i = 0; i < plane.numel(); ++i) buf[static_cast<size_t>(i)] = cplx(src[i], 0.0);
    fft2_batch(buf.data(), 1, h, w, false);
    ComplexPlane out{Tensor({h, w}), Tensor({h, w})};
    for (int64_t i = 0; i < plane.numel(); ++i) {
        out.re[i] = buf[static_cast<size_t>(i)].real();
        out.im[i] = buf[static_cast<size_t>(i)].imag();
    }
    return out;
}

ComplexPlane ifft2(const ComplexPlane& spec) {
    const int h = spec.height(), w = spec.width();
    std::vector<cplx> buf(static_cast<size_t>(h) * w);
    for (int64_t i = 0; i < spec.re.numel(); ++i)
        buf[static_cast<size_t>(i)] = cplx(spec.re[i], spec.im[i]);
    fft2_batch(buf.data(), 1, h, w, true);
    ComplexPlane out{Tensor({h, w}), Tensor({h, w})};
    for (int64_t i = 0; i < out.re.numel(); ++i) {
        out.re[i] = buf[static_cast<size_t>(i)].real();
        out.im[i] = buf[static_cast<size_t>(i)].imag();
    }
    return out;
}

Tensor ifft2_real(const ComplexPlane& spec) {
    return ifft2(spec).re;
}

}  // namespace rpf::core
