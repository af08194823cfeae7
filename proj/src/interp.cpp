#include "dcno/interp.hpp"

#include "dcno/fft.hpp"

namespace dcno {
namespace {

constexpr double kSqrt2 = 1.41421356237309504880168872420969808;

// One separable synthesis pass: out(i, m) = Σ_k β_k·in(k, m)·cos(πk(i+½)/n)
// for i in [0, n), evaluated for all m columns at once. Uses the identity
// Σ_k a_k cos(πk(i+½)/n) = Re Σ_k [a_k e^{iπk/(2n)}] e^{2πi·k·i/(2n)},
// i.e. the head of an unnormalized inverse DFT of length 2n.
void cosine_synth_axis(const std::vector<double>& in, int kmax, int cols, int n,
                       std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(n) * cols, 0.0);
    std::vector<double> re(2 * n), im(2 * n);
    for (int m = 0; m < cols; ++m) {
        std::fill(re.begin(), re.end(), 0.0);
        std::fill(im.begin(), im.end(), 0.0);
        for (int k = 0; k < kmax; ++k) {
            double beta = k == 0 ? 1.0 : kSqrt2;
            double a = beta * in[static_cast<std::size_t>(k) * cols + m];
            double ang = kPi * k / (2.0 * n);
            re[k] = a * std::cos(ang);
            im[k] = a * std::sin(ang);
        }
        fftcore::transform(re.data(), im.data(), 2 * n, true);
        for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i) * cols + m] = re[i];
    }
}

} // namespace

Field2D cosine_expand(const Field2D& coeffs, int h, int w) {
    if (coeffs.c != 1)
        throw std::invalid_argument("cosine_expand: coefficients must be single-channel");
    if (coeffs.h > h || coeffs.w > w)
        throw std::invalid_argument("cosine_expand: coefficient index beyond grid Nyquist (" +
                                    std::to_string(coeffs.h) + "x" + std::to_string(coeffs.w) +
                                    " modes on " + std::to_string(h) + "x" + std::to_string(w) +
                                    " lattice)");
    // Pass 1 over k1: rows of `coeffs` -> samples along x1, columns are k2.
    std::vector<double> stage;
    cosine_synth_axis(coeffs.data, coeffs.h, coeffs.w, h, stage);
    // Pass 2 over k2: transpose so the k2 index is the leading axis.
    std::vector<double> stage_t(static_cast<std::size_t>(coeffs.w) * h);
    for (int y = 0; y < h; ++y)
        for (int k2 = 0; k2 < coeffs.w; ++k2)
            stage_t[static_cast<std::size_t>(k2) * h + y] = stage[static_cast<std::size_t>(y) * coeffs.w + k2];
    std::vector<double> full;
    cosine_synth_axis(stage_t, coeffs.w, h, w, full);
    Field2D out(h, w, 1, 1.0, 1.0);
    for (int x = 0; x < w; ++x)
        for (int y = 0; y < h; ++y)
            out.at(y, x) = full[static_cast<std::size_t>(x) * h + y];
    return out;
}

namespace {

struct AxisSample {
    int i0, i1;
    double t; // weight of i1
};

AxisSample locate_at(Lattice src, double x, int sn) {
    double s = 0.0;
    switch (src) {
        case Lattice::CellCentered: s = x * sn - 0.5; break;
        case Lattice::VertexClosed: s = x * (sn - 1); break;
        case Lattice::VertexPeriodic: s = x * sn; break;
    }
    if (src == Lattice::VertexPeriodic) {
        double f = std::floor(s);
        int i0 = static_cast<int>(f) % sn;
        if (i0 < 0) i0 += sn;
        return {i0, (i0 + 1) % sn, s - f};
    }
    if (s <= 0.0) return {0, 0, 0.0};
    if (s >= sn - 1) return {sn - 1, sn - 1, 0.0};
    double f = std::floor(s);
    int i0 = static_cast<int>(f);
    return {i0, i0 + 1, s - f};
}

AxisSample locate(Lattice src, Lattice dst, int j, int tn, int sn) {
    return locate_at(src, lattice_coord(dst, j, tn), sn);
}

} // namespace

Field2D resample_between(const Field2D& field, Lattice src, int target_h,
                         int target_w, Lattice dst) {
    if (target_h < 2 || target_w < 2)
        throw std::invalid_argument("resample_linear: target size must be at least 2");
    Field2D out(target_h, target_w, field.c, field.Lx, field.Ly);
    std::vector<AxisSample> ys(target_h), xs(target_w);
    for (int j = 0; j < target_h; ++j) ys[j] = locate(src, dst, j, target_h, field.h);
    for (int j = 0; j < target_w; ++j) xs[j] = locate(src, dst, j, target_w, field.w);
    for (int y = 0; y < target_h; ++y) {
        const AxisSample& ay = ys[y];
        for (int x = 0; x < target_w; ++x) {
            const AxisSample& ax = xs[x];
            for (int ch = 0; ch < field.c; ++ch) {
                double v00 = field.at(ay.i0, ax.i0, ch), v01 = field.at(ay.i0, ax.i1, ch);
                double v10 = field.at(ay.i1, ax.i0, ch), v11 = field.at(ay.i1, ax.i1, ch);
                out.at(y, x, ch) = (1 - ay.t) * ((1 - ax.t) * v00 + ax.t * v01) +
                                   ay.t * ((1 - ax.t) * v10 + ax.t * v11);
            }
        }
    }
    return out;
}

Field2D resample_linear(const Field2D& field, int target_h, int target_w, Lattice lat) {
    return resample_between(field, lat, target_h, target_w, lat);
}

} // namespace dcno
