#include "dcno/conv.hpp"

#include <cblas.h>

#include <mutex>
#include <stdexcept>

extern "C" void openblas_set_num_threads(int);

namespace dcno::convkernel {
namespace {

void init_blas() {
    static std::once_flag flag;
    std::call_once(flag, [] { openblas_set_num_threads(1); });
}

void check_args(int h, int w, int cin, int cout, int ksize, int dilation) {
    if (h <= 0 || w <= 0 || cin <= 0 || cout <= 0)
        throw std::invalid_argument("conv2d: dimensions must be positive");
    if (ksize < 1 || ksize % 2 == 0)
        throw std::invalid_argument("conv2d: kernel size must be odd");
    if (dilation < 1) throw std::invalid_argument("conv2d: dilation must be >= 1");
}

inline int wrap(int i, int n) {
    i %= n;
    return i < 0 ? i + n : i;
}

// Gathers the [h·w] × [ksize²·cin] patch matrix. Out-of-range taps read zero
// under Pad::Zero and wrap under Pad::Circular.
void im2col(const double* x, int h, int w, int cin, int ksize, int dilation, Pad pad,
            double* col) {
    int half = ksize / 2;
    int kk = ksize * ksize;
    std::size_t row_len = static_cast<std::size_t>(kk) * cin;
    for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
            double* row = col + (static_cast<std::size_t>(y) * w + xx) * row_len;
            std::size_t t = 0;
            for (int ty = 0; ty < ksize; ++ty) {
                int sy = y + dilation * (ty - half);
                for (int tx = 0; tx < ksize; ++tx, ++t) {
                    int sx = xx + dilation * (tx - half);
                    int ry = sy, rx = sx;
                    bool oob = false;
                    if (pad == Pad::Circular) {
                        ry = wrap(sy, h);
                        rx = wrap(sx, w);
                    } else {
                        oob = sy < 0 || sy >= h || sx < 0 || sx >= w;
                    }
                    double* dst = row + t * cin;
                    if (oob) {
                        for (int c = 0; c < cin; ++c) dst[c] = 0.0;
                    } else {
                        const double* src = x + (static_cast<std::size_t>(ry) * w + rx) * cin;
                        for (int c = 0; c < cin; ++c) dst[c] = src[c];
                    }
                }
            }
        }
    }
}

// Scatter-add of a patch-matrix cotangent back onto the input lattice; the
// exact adjoint of im2col.
void col2im_add(const double* col, int h, int w, int cin, int ksize, int dilation, Pad pad,
                double* x) {
    int half = ksize / 2;
    int kk = ksize * ksize;
    std::size_t row_len = static_cast<std::size_t>(kk) * cin;
    for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
            const double* row = col + (static_cast<std::size_t>(y) * w + xx) * row_len;
            std::size_t t = 0;
            for (int ty = 0; ty < ksize; ++ty) {
                int sy = y + dilation * (ty - half);
                for (int tx = 0; tx < ksize; ++tx, ++t) {
                    int sx = xx + dilation * (tx - half);
                    int ry = sy, rx = sx;
                    if (pad == Pad::Circular) {
                        ry = wrap(sy, h);
                        rx = wrap(sx, w);
                    } else if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
                        continue;
                    }
                    const double* src = row + t * cin;
                    double* dst = x + (static_cast<std::size_t>(ry) * w + rx) * cin;
                    for (int c = 0; c < cin; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

std::vector<double>& scratch() {
    thread_local std::vector<double> buf;
    return buf;
}

} // namespace

void forward(const double* x, int h, int w, int cin, const double* kernel, const double* bias,
             int cout, int ksize, int dilation, Pad pad, double* y) {
    check_args(h, w, cin, cout, ksize, dilation);
    init_blas();
    int sites = h * w;
    int k = ksize * ksize * cin;
    auto& col = scratch();
    col.resize(static_cast<std::size_t>(sites) * k);
    im2col(x, h, w, cin, ksize, dilation, pad, col.data());
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, sites, cout, k, 1.0, col.data(), k,
                kernel, cout, 0.0, y, cout);
    if (bias)
        for (int s = 0; s < sites; ++s)
            for (int c = 0; c < cout; ++c) y[static_cast<std::size_t>(s) * cout + c] += bias[c];
}

void backward_input(const double* grad_y, int h, int w, int cout, const double* kernel, int cin,
                    int ksize, int dilation, Pad pad, double* grad_x) {
    check_args(h, w, cin, cout, ksize, dilation);
    init_blas();
    int sites = h * w;
    int k = ksize * ksize * cin;
    auto& col = scratch();
    col.resize(static_cast<std::size_t>(sites) * k);
    // dX_col = dY · Kᵀ, then scatter back to lattice positions.
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, sites, k, cout, 1.0, grad_y, cout, kernel,
                cout, 0.0, col.data(), k);
    col2im_add(col.data(), h, w, cin, ksize, dilation, pad, grad_x);
}

void backward_kernel(const double* x, const double* grad_y, int h, int w, int cin, int cout,
                     int ksize, int dilation, Pad pad, double* grad_kernel, double* grad_bias) {
    check_args(h, w, cin, cout, ksize, dilation);
    init_blas();
    int sites = h * w;
    int k = ksize * ksize * cin;
    auto& col = scratch();
    col.resize(static_cast<std::size_t>(sites) * k);
    im2col(x, h, w, cin, ksize, dilation, pad, col.data());
    // dK += X_colᵀ · dY.
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, k, cout, sites, 1.0, col.data(), k, grad_y,
                cout, 1.0, grad_kernel, cout);
    if (grad_bias)
        for (int s = 0; s < sites; ++s)
            for (int c = 0; c < cout; ++c)
                grad_bias[c] += grad_y[static_cast<std::size_t>(s) * cout + c];
}

} // namespace dcno::convkernel
