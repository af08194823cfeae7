#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dcno/field.hpp"
#include "dcno/io.hpp"

namespace dcno {

// One elliptic problem instance: -div(a grad u) = f with homogeneous
// Dirichlet data, a strictly positive, u zero on the boundary ring.
struct EllipticSample {
  Field2D a;
  Field2D u;
  Field2D f;
  std::uint64_t seed = 0;
};

// Vorticity snapshots of one flow, 1-second spacing by default, snapshot 0
// being the initial condition. Spatial mean of every snapshot matches the
// initial mean (the standard forcing has zero spatial mean).
struct NSTrajectory {
  std::vector<Field2D> w;
  double nu = 1e-3;
  double dt = 1e-3;
  double forcing_amp = 0.1;
  std::uint64_t seed = 0;
};

// Gaussian field with covariance (-Laplace + c I)^{-2} under zero-Neumann
// boundary conditions: independent N(0,1) draws per cosine mode, scaled by
// (pi^2|k|^2 + c)^{-1}, synthesized on an n x n cell-centered unit-square
// lattice. Draws are consumed k1-major so a fixed seed is bit-reproducible.
Field2D sample_grf_neumann(double c, int n, std::uint64_t seed);

// Closed-form per-site variance of sample_grf_neumann at lattice site (y, x):
// sum_k (pi^2|k|^2 + c)^{-2} phi_k(x)^2.
double grf_neumann_site_variance(double c, int n, int y, int x);

// Pointwise two-level pushforward: g >= 0 maps to 12, g < 0 maps to 2.
Field2D psi_pushforward(const Field2D& g);

// Multiscale trigonometric coefficient on a vertex-closed n x n lattice over
// [-1,1]^2: a(x) = prod_{k=1..6} (1 + cos(a_k pi (x1+x2))/2)
//                            * (1 + sin(a_k pi (x2-3x1))/2)
// with a_k ~ U[2^{k-1}, 1.5*2^{k-1}]. The six draws are reported via ak_out.
Field2D sample_trig_coefficient(int n, std::uint64_t seed,
                                std::array<double, 6>* ak_out = nullptr);

// Same product evaluated at one physical point for given a_k.
double trig_coefficient_at(const std::array<double, 6>& ak, double x1, double x2);

// Five-point finite-volume discretization of -div(a grad u) = f on the
// vertex-closed lattice of `a` (spacing h = L/(n-1)), harmonic mean of a at
// half-grid faces, u = 0 on the boundary ring. Solved with diagonally
// preconditioned conjugate gradients to `tol` relative residual.
// Throws on non-positive a and on non-convergence (reports final residual).
Field2D solve_elliptic_fd(const Field2D& a, const Field2D& f, double tol = 1e-10,
                          int max_iter = 0);

// Periodic Gaussian field with covariance 7^{3/2}(-Laplace + 49 I)^{-2.5} on
// the unit torus, sampled as Fourier series coefficients with standard
// deviation 7^{3/4}(4 pi^2|k|^2 + 49)^{-1.25}, Hermitian-symmetrized (zero
// mode included), synthesized via the inverse FFT on an n x n lattice.
Field2D sample_grf_periodic(int n, std::uint64_t seed);

// Closed-form variance of the measured series coefficient at mode k:
// 7^{3/2} (4 pi^2 |k|^2 + 49)^{-2.5}.
double grf_periodic_coeff_variance(int k1, int k2);

// Pseudo-spectral 2-D incompressible Navier-Stokes in vorticity form on the
// unit torus: dw/dt + u.grad(w) = nu Laplace(w) + f, streamfunction velocity,
// 2/3-rule dealiasing, Crank-Nicolson viscosity with two-step Adams-Bashforth
// advection (Euler bootstrap). Snapshots are recorded every
// `record_stride_seconds` model seconds, always including t = 0; T must be a
// multiple of the stride. f = forcing_amp*(sin(2pi(x1+x2)) + cos(2pi(x1+x2))).
// Throws on advective CFL violation (max|u| dt / h > 1) and on NaN blowup.
NSTrajectory ns_solve(const Field2D& w0, double nu, int T, double dt,
                      double forcing_amp = 0.1, int record_stride_seconds = 1);

// u_hat = u + eps * rms(u) * xi with xi i.i.d. standard normal per entry.
Field2D add_noise(const Field2D& u, double eps, std::uint64_t seed);

enum class Task { DarcyRough, Trig, NavierStokes, InverseDarcy };

struct DataGenConfig {
  Task task = Task::DarcyRough;
  int samples = 10;
  int resolution = 64;       // lattice of the emitted dataset
  int fine_resolution = 512; // elliptic tasks solve here, then downsample
  double grf_c = 20.0;       // roughness parameter of the Darcy coefficient
  double cg_tol = 1e-10;
  double noise_eps = 0.0;    // InverseDarcy: noise level on the solution side
  double nu = 1e-3;          // NavierStokes viscosity
  int ns_T = 10;             // trajectory length in seconds
  double ns_dt = 1e-3;
  double forcing_amp = 0.1;
  std::uint64_t seed = 0;
};

// Elliptic sample generators used by make_dataset, exposed for tests. Both
// solve on the fine vertex-closed lattice with f identically 1.
EllipticSample make_darcy_sample(const DataGenConfig& cfg, std::uint64_t seed);
EllipticSample make_trig_sample(const DataGenConfig& cfg, std::uint64_t seed);

// Full dataset assembly. Sample i is generated from derive_seed(cfg.seed, i),
// so any sample can be regenerated alone, bit-identically.
//   DarcyRough:   input a (values exactly {2,12} at dataset resolution),
//                 output u, both downsampled from the fine solve.
//   Trig:         input a, output u on [-1,1]^2, downsampled likewise.
//   NavierStokes: input w0, output channels = snapshots at seconds 0..T.
//   InverseDarcy: input add_noise(u, eps), output a.
DatasetContainer make_dataset(const DataGenConfig& cfg);

}  // namespace dcno
