#pragma once

#include "dcno/field.hpp"

namespace dcno {

// Synthesizes Σ_k c_k φ_k(x) on an h×w cell-centered lattice over the unit
// square, where φ_0 = 1 and φ_k(x) = (√2)^{#nonzero(k)}·cos(πk1x1)·cos(πk2x2)
// is the orthonormal Neumann-Laplacian eigenbasis. `coeffs` is a K1×K2
// single-channel field holding c_(k1,k2); K1 ≤ h and K2 ≤ w (indices past the
// lattice Nyquist are rejected, the mode k = N vanishes identically on the
// cell-centered grid).
Field2D cosine_expand(const Field2D& coeffs, int h, int w);

// Bilinear resampling onto a target_h × target_w lattice of the same
// convention. CellCentered clamps beyond the outermost cell centers,
// VertexPeriodic wraps, VertexClosed needs neither. Channels independent.
Field2D resample_linear(const Field2D& field, int target_h, int target_w,
                        Lattice lat = Lattice::CellCentered);

// Same bilinear kernel, but the source samples live on a src-convention
// lattice while the target sites come from dst. Boundary handling (clamp or
// wrap) follows the source convention.
Field2D resample_between(const Field2D& field, Lattice src, int target_h,
                         int target_w, Lattice dst);

} // namespace dcno
