#pragma once

#include <cmath>
#include <vector>

namespace dcno {

// Exact-erf GELU and its derivative. gelu(x) = x·Φ(x) with Φ the standard
// normal CDF; gelu'(x) = Φ(x) + x·φ(x).
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440084436210485)); }

inline double gelu_prime(double x) {
    double cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440084436210485));
    double pdf = 0.39894228040143267793994605993438 * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

// Dense kernels for 2-D dilated convolution in channels-last layout.
// x: [h][w][cin]; kernel: [ktap_y][ktap_x][cin][cout] flattened row-major;
// bias: [cout]; y: [h][w][cout]. "Same" output size; odd kernel sizes only.
namespace convkernel {

enum class Pad { Zero, Circular };

void forward(const double* x, int h, int w, int cin, const double* kernel, const double* bias,
             int cout, int ksize, int dilation, Pad pad, double* y);

// Accumulates (does not overwrite) the input gradient for a given output
// cotangent: the transposed dilated convolution.
void backward_input(const double* grad_y, int h, int w, int cout, const double* kernel, int cin,
                    int ksize, int dilation, Pad pad, double* grad_x);

// Accumulates kernel and bias gradients: correlation of input with cotangent.
void backward_kernel(const double* x, const double* grad_y, int h, int w, int cin, int cout,
                     int ksize, int dilation, Pad pad, double* grad_kernel, double* grad_bias);

} // namespace convkernel
} // namespace dcno
