#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcno {

inline constexpr double kPi = 3.14159265358979323846264338327950288;
inline constexpr double kTwoPi = 2.0 * kPi;

// How lattice index i of an n-point axis maps to a physical coordinate.
// CellCentered:   x_i = (i + 1/2) / n * L   (open boundary, cosine basis)
// VertexClosed:   x_i = i / (n - 1) * L    (includes both endpoints)
// VertexPeriodic: x_i = i / n * L          (right endpoint identified with 0)
enum class Lattice { CellCentered, VertexClosed, VertexPeriodic };

inline double lattice_coord(Lattice lat, int i, int n, double length = 1.0) {
    switch (lat) {
        case Lattice::CellCentered: return (i + 0.5) / n * length;
        case Lattice::VertexClosed: return n > 1 ? static_cast<double>(i) / (n - 1) * length : 0.0;
        case Lattice::VertexPeriodic: return static_cast<double>(i) / n * length;
    }
    return 0.0;
}

// Real 2-D lattice field, row-major [h][w][c], with physical domain extents.
struct Field2D {
    int h = 0, w = 0, c = 1;
    double Lx = 1.0, Ly = 1.0;
    std::vector<double> data;

    Field2D() = default;
    Field2D(int h_, int w_, int c_ = 1, double Lx_ = 1.0, double Ly_ = 1.0)
        : h(h_), w(w_), c(c_), Lx(Lx_), Ly(Ly_),
          data(static_cast<std::size_t>(h_) * w_ * c_, 0.0) {
        if (h_ <= 0 || w_ <= 0 || c_ <= 0)
            throw std::invalid_argument("Field2D: dimensions must be positive");
    }

    std::size_t size() const { return data.size(); }
    double& at(int y, int x, int ch = 0) {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    double at(int y, int x, int ch = 0) const {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
};

// Complex Fourier coefficients of a Field2D, same [h][w][c] layout. Index
// (k1, k2) addresses the unnormalized forward-DFT coefficient; frequencies
// above the Nyquist wrap to negative modes (see signed_mode / omega below).
struct Spectrum2D {
    int h = 0, w = 0, c = 1;
    double Lx = 1.0, Ly = 1.0;
    std::vector<std::complex<double>> data;

    Spectrum2D() = default;
    Spectrum2D(int h_, int w_, int c_ = 1, double Lx_ = 1.0, double Ly_ = 1.0)
        : h(h_), w(w_), c(c_), Lx(Lx_), Ly(Ly_),
          data(static_cast<std::size_t>(h_) * w_ * c_, {0.0, 0.0}) {
        if (h_ <= 0 || w_ <= 0 || c_ <= 0)
            throw std::invalid_argument("Spectrum2D: dimensions must be positive");
    }

    std::size_t size() const { return data.size(); }
    std::complex<double>& at(int k1, int k2, int ch = 0) {
        return data[(static_cast<std::size_t>(k1) * w + k2) * c + ch];
    }
    std::complex<double> at(int k1, int k2, int ch = 0) const {
        return data[(static_cast<std::size_t>(k1) * w + k2) * c + ch];
    }
};

// DFT bin index -> signed integer mode: bins (n/2, n) alias to negative modes.
inline int signed_mode(int i, int n) { return i <= n / 2 ? i : i - n; }

// Physical angular frequency of bin index i on an axis of n points, length L.
inline double omega_component(int i, int n, double L) {
    return kTwoPi * signed_mode(i, n) / L;
}

inline double l2_norm(const Field2D& f) {
    double s = 0.0;
    for (double v : f.data) s += v * v;
    return std::sqrt(s);
}

inline double l2_norm(const Spectrum2D& s) {
    double acc = 0.0;
    for (const auto& z : s.data) acc += std::norm(z);
    return std::sqrt(acc);
}

inline double max_abs_diff(const Field2D& a, const Field2D& b) {
    if (a.data.size() != b.data.size())
        throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

inline void check_same_shape(const Field2D& a, const Field2D& b, const char* who) {
    if (a.h != b.h || a.w != b.w || a.c != b.c)
        throw std::invalid_argument(std::string(who) + ": shape mismatch (" +
                                    std::to_string(a.h) + "x" + std::to_string(a.w) + "x" +
                                    std::to_string(a.c) + " vs " + std::to_string(b.h) + "x" +
                                    std::to_string(b.w) + "x" + std::to_string(b.c) + ")");
}

} // namespace dcno
