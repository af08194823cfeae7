#pragma once

#include "dcno/field.hpp"

namespace dcno {

// Low-level split-complex transforms used by the autodiff tape and the flow
// solver, which keep real and imaginary planes separate. `inverse` applies
// the conjugate-exponent transform WITHOUT the 1/N factor; normalization is
// the caller's business.
namespace fftcore {

// In-place 1-D transform of contiguous length-n arrays. n arbitrary (>0);
// power-of-two sizes use radix-2, the rest go through Bluestein's algorithm.
void transform(double* re, double* im, int n, bool inverse);

// In-place 2-D transform of an h*w plane (row-major, unit channel stride).
void transform_2d(double* re, double* im, int h, int w, bool inverse);

} // namespace fftcore

// Unnormalized forward DFT per channel: coeff(k) = Σ_x field(x) e^{-i k·x 2π/n}.
Spectrum2D fft2(const Field2D& field);
Spectrum2D fft2(const Spectrum2D& field);

// Inverse of fft2 including the 1/(H·W) factor. When `enforce_hermitian` is
// set the imaginary residue of the result is checked against `tol` (relative
// to the field magnitude) and an exception reports a violation; either way
// only the real part is returned.
Field2D ifft2(const Spectrum2D& spec, bool enforce_hermitian = true, double tol = 1e-10);

// Complex-to-complex inverse with 1/(H·W), for spectra without symmetry.
Spectrum2D ifft2_complex(const Spectrum2D& spec);

// Max |coeff(-k) - conj(coeff(k))| over all modes and channels.
double hermitian_asymmetry(const Spectrum2D& spec);

} // namespace dcno
