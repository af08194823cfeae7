#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "dcno/field.hpp"
#include "dcno/model.hpp"
#include "dcno/train.hpp"

namespace dcno {

// Per-frequency relative error: eps_i = |fft2(pred - target)_i| / ||fft2(target)||_2
// at every lattice frequency index (and channel). The result keeps the target
// shape and domain lengths. Throws when the target spectrum has zero norm.
Field2D error_spectrum(const Field2D& pred, const Field2D& target);

// Radial binning of a nonnegative frequency lattice. Index (k1, k2) belongs
// to annulus r = floor(sqrt(k1s^2 + k2s^2)) of signed modes; bins run from 0
// to the lattice corner radius and partition the lattice exactly:
// sum_r mass(r) = sum_i eps_i. density(r) = mass(r) / (r + 1/2), the discrete
// form of the "integral of rho(r) r dr equals the bin mass" convention.
struct AnnulusDensity {
  std::vector<double> mass;
  std::vector<double> density;
};
AnnulusDensity annulus_density(const Field2D& eps);

// Relative L2 errors restricted to low (|omega| <= omega_star) and high
// (|omega| > omega_star) frequency bands, each normalized by the masked
// target norm. A band with no lattice modes, or with zero target mass, is
// undefined rather than zero.
struct FreqSplit {
  std::optional<double> low, high;
};
FreqSplit freq_split_error(const Field2D& pred, const Field2D& target,
                           double omega_star = 10.0 * kPi);

// Same split but both bands share the full target spectral norm as the
// denominator, so low^2 + high^2 equals the total squared relative error.
FreqSplit freq_split_error_shared(const Field2D& pred, const Field2D& target,
                                  double omega_star = 10.0 * kPi);

// One row of the training-dynamics matrix: spectra diagnostics of a model
// state at one epoch, averaged over a test split.
struct DynamicsRow {
  int epoch = -1;
  AnnulusDensity annuli;
  std::optional<double> low, high;
};

// Evaluates `forward(epoch, input)` against the split's targets at each epoch
// in `epochs` and averages error_spectrum-derived quantities over samples.
using EpochForward = std::function<Field2D(int epoch, const Field2D& input)>;
std::vector<DynamicsRow> track_dynamics(const EpochForward& forward,
                                        const std::vector<int>& epochs,
                                        const SampleSet& test,
                                        double omega_star = 10.0 * kPi);

// Convenience overload: rebinds the store to each stored parameter vector.
std::vector<DynamicsRow> track_dynamics(
    const Model& model, ParameterStore& store,
    const std::vector<std::pair<int, std::vector<double>>>& epoch_params,
    const SampleSet& test, double omega_star = 10.0 * kPi);

// CSV matrix: header "epoch,r0,...,r{max},low_err,high_err", one row per
// epoch, densities in the radius columns, %.17g throughout.
void write_dynamics_csv(std::ostream& out, const std::vector<DynamicsRow>& rows);

}  // namespace dcno
