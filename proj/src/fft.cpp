#include "dcno/fft.hpp"

#include <cstring>
#include <map>
#include <memory>
#include <mutex>

namespace dcno {
namespace fftcore {
namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

struct Pow2Plan {
    int n;
    std::vector<int> bitrev;
    // Twiddles for the forward direction, stage by stage, concatenated.
    std::vector<double> tw_re, tw_im;

    explicit Pow2Plan(int n_) : n(n_) {
        bitrev.resize(n);
        int log2n = 0;
        while ((1 << log2n) < n) ++log2n;
        for (int i = 0; i < n; ++i) {
            int r = 0;
            for (int b = 0; b < log2n; ++b) r |= ((i >> b) & 1) << (log2n - 1 - b);
            bitrev[i] = r;
        }
        for (int len = 2; len <= n; len <<= 1) {
            for (int j = 0; j < len / 2; ++j) {
                double ang = -kTwoPi * j / len;
                tw_re.push_back(std::cos(ang));
                tw_im.push_back(std::sin(ang));
            }
        }
    }
};

const Pow2Plan& pow2_plan(int n) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<Pow2Plan>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<Pow2Plan>(n);
    return *slot;
}

void fft_pow2(double* re, double* im, int n, bool inverse) {
    const Pow2Plan& plan = pow2_plan(n);
    for (int i = 0; i < n; ++i) {
        int j = plan.bitrev[i];
        if (j > i) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    std::size_t tw_base = 0;
    for (int len = 2; len <= n; len <<= 1) {
        int half = len / 2;
        for (int start = 0; start < n; start += len) {
            for (int j = 0; j < half; ++j) {
                double wr = plan.tw_re[tw_base + j];
                double wi = plan.tw_im[tw_base + j];
                if (inverse) wi = -wi;
                int a = start + j, b = start + j + half;
                double xr = re[b] * wr - im[b] * wi;
                double xi = re[b] * wi + im[b] * wr;
                re[b] = re[a] - xr;
                im[b] = im[a] - xi;
                re[a] += xr;
                im[a] += xi;
            }
        }
        tw_base += half;
    }
}

// Bluestein chirp-z: an arbitrary-length DFT as a circular convolution of
// power-of-two length. The chirp phase uses k² mod 2n to keep the angle
// argument small; plain k²π/n loses digits once n² overflows the 53-bit
// mantissa range.
struct BluesteinPlan {
    int n;
    int m; // convolution length, power of two >= 2n - 1
    std::vector<double> chirp_re, chirp_im; // w_k = exp(-i π k² / n)
    std::vector<double> bfft_re, bfft_im;   // FFT of the conjugate-chirp kernel

    explicit BluesteinPlan(int n_) : n(n_) {
        m = 1;
        while (m < 2 * n - 1) m <<= 1;
        chirp_re.resize(n);
        chirp_im.resize(n);
        for (int k = 0; k < n; ++k) {
            long long k2 = (static_cast<long long>(k) * k) % (2LL * n);
            double ang = -kPi * static_cast<double>(k2) / n;
            chirp_re[k] = std::cos(ang);
            chirp_im[k] = std::sin(ang);
        }
        bfft_re.assign(m, 0.0);
        bfft_im.assign(m, 0.0);
        bfft_re[0] = chirp_re[0];
        bfft_im[0] = -chirp_im[0];
        for (int k = 1; k < n; ++k) {
            bfft_re[k] = bfft_re[m - k] = chirp_re[k];
            bfft_im[k] = bfft_im[m - k] = -chirp_im[k];
        }
        fft_pow2(bfft_re.data(), bfft_im.data(), m, false);
    }
};

const BluesteinPlan& bluestein_plan(int n) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<BluesteinPlan>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<BluesteinPlan>(n);
    return *slot;
}

// Forward direction only; the inverse transform is handled below as
// conj -> forward -> conj.
void fft_bluestein_forward(double* re, double* im, int n) {
    const BluesteinPlan& plan = bluestein_plan(n);
    int m = plan.m;
    std::vector<double> ar(m, 0.0), ai(m, 0.0);
    for (int k = 0; k < n; ++k) {
        double cr = plan.chirp_re[k];
        double ci = plan.chirp_im[k];
        ar[k] = re[k] * cr - im[k] * ci;
        ai[k] = re[k] * ci + im[k] * cr;
    }
    fft_pow2(ar.data(), ai.data(), m, false);
    for (int k = 0; k < m; ++k) {
        double xr = ar[k] * plan.bfft_re[k] - ai[k] * plan.bfft_im[k];
        double xi = ar[k] * plan.bfft_im[k] + ai[k] * plan.bfft_re[k];
        ar[k] = xr;
        ai[k] = xi;
    }
    fft_pow2(ar.data(), ai.data(), m, true);
    double inv_m = 1.0 / m;
    for (int k = 0; k < n; ++k) {
        double pr = ar[k] * inv_m;
        double pi = ai[k] * inv_m;
        double cr = plan.chirp_re[k];
        double ci = plan.chirp_im[k];
        re[k] = pr * cr - pi * ci;
        im[k] = pr * ci + pi * cr;
    }
}

void fft_bluestein(double* re, double* im, int n, bool inverse) {
    if (inverse)
        for (int k = 0; k < n; ++k) im[k] = -im[k];
    fft_bluestein_forward(re, im, n);
    if (inverse)
        for (int k = 0; k < n; ++k) im[k] = -im[k];
}

} // namespace

void transform(double* re, double* im, int n, bool inverse) {
    if (n <= 0) throw std::invalid_argument("fftcore::transform: n must be positive");
    if (n == 1) return;
    if (is_pow2(n))
        fft_pow2(re, im, n, inverse);
    else
        fft_bluestein(re, im, n, inverse);
}

void transform_2d(double* re, double* im, int h, int w, bool inverse) {
    for (int y = 0; y < h; ++y)
        transform(re + static_cast<std::size_t>(y) * w, im + static_cast<std::size_t>(y) * w, w,
                  inverse);
    std::vector<double> cr(h), ci(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            cr[y] = re[static_cast<std::size_t>(y) * w + x];
            ci[y] = im[static_cast<std::size_t>(y) * w + x];
        }
        transform(cr.data(), ci.data(), h, inverse);
        for (int y = 0; y < h; ++y) {
            re[static_cast<std::size_t>(y) * w + x] = cr[y];
            im[static_cast<std::size_t>(y) * w + x] = ci[y];
        }
    }
}

} // namespace fftcore

namespace {

// Deinterleave one channel into split planes, transform, reinterleave.
template <typename Src>
Spectrum2D transform_channels(const Src& src, int h, int w, int c, bool inverse) {
    Spectrum2D out(h, w, c, src.Lx, src.Ly);
    std::vector<double> re(static_cast<std::size_t>(h) * w), im(re.size());
    for (int ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < re.size(); ++i) {
            if constexpr (std::is_same_v<Src, Field2D>) {
                re[i] = src.data[i * c + ch];
                im[i] = 0.0;
            } else {
                re[i] = src.data[i * c + ch].real();
                im[i] = src.data[i * c + ch].imag();
            }
        }
        fftcore::transform_2d(re.data(), im.data(), h, w, inverse);
        for (std::size_t i = 0; i < re.size(); ++i)
            out.data[i * c + ch] = {re[i], im[i]};
    }
    return out;
}

} // namespace

Spectrum2D fft2(const Field2D& field) {
    return transform_channels(field, field.h, field.w, field.c, false);
}

Spectrum2D fft2(const Spectrum2D& field) {
    return transform_channels(field, field.h, field.w, field.c, false);
}

Spectrum2D ifft2_complex(const Spectrum2D& spec) {
    Spectrum2D out = transform_channels(spec, spec.h, spec.w, spec.c, true);
    double scale = 1.0 / (static_cast<double>(spec.h) * spec.w);
    for (auto& z : out.data) z *= scale;
    return out;
}

Field2D ifft2(const Spectrum2D& spec, bool enforce_hermitian, double tol) {
    Spectrum2D full = ifft2_complex(spec);
    Field2D out(spec.h, spec.w, spec.c, spec.Lx, spec.Ly);
    double max_im = 0.0, max_re = 0.0;
    for (std::size_t i = 0; i < full.data.size(); ++i) {
        out.data[i] = full.data[i].real();
        max_im = std::max(max_im, std::abs(full.data[i].imag()));
        max_re = std::max(max_re, std::abs(full.data[i].real()));
    }
    if (enforce_hermitian && max_im > tol * std::max(1.0, max_re))
        throw std::runtime_error("ifft2: imaginary residue " + std::to_string(max_im) +
                                 " exceeds tolerance; input spectrum is not Hermitian-symmetric");
    return out;
}

double hermitian_asymmetry(const Spectrum2D& spec) {
    double m = 0.0;
    for (int k1 = 0; k1 < spec.h; ++k1)
        for (int k2 = 0; k2 < spec.w; ++k2) {
            int m1 = (spec.h - k1) % spec.h;
            int m2 = (spec.w - k2) % spec.w;
            for (int ch = 0; ch < spec.c; ++ch)
                m = std::max(m, std::abs(spec.at(k1, k2, ch) - std::conj(spec.at(m1, m2, ch))));
        }
    return m;
}

} // namespace dcno
