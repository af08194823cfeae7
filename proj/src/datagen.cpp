#include "dcno/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dcno/fft.hpp"
#include "dcno/interp.hpp"
#include "dcno/rng.hpp"

namespace dcno {
namespace {

constexpr double kSqrt2 = 1.41421356237309504880168872420969808;

double sq(double x) { return x * x; }

Field2D ones_like(int h, int w, double Lx, double Ly) {
  Field2D f(h, w, 1, Lx, Ly);
  std::fill(f.data.begin(), f.data.end(), 1.0);
  return f;
}

}  // namespace

Field2D sample_grf_neumann(double c, int n, std::uint64_t seed) {
  if (c <= 0.0) throw std::invalid_argument("sample_grf_neumann: c must be positive");
  if (n < 2) throw std::invalid_argument("sample_grf_neumann: lattice too small");
  Rng rng(seed);
  Field2D coeffs(n, n, 1, 1.0, 1.0);
  for (int k1 = 0; k1 < n; ++k1)
    for (int k2 = 0; k2 < n; ++k2) {
      double lambda = 1.0 / (kPi * kPi * (static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2) + c);
      coeffs.at(k1, k2) = rng.normal() * lambda;
    }
  return cosine_expand(coeffs, n, n);
}

double grf_neumann_site_variance(double c, int n, int y, int x) {
  double acc = 0.0;
  for (int k1 = 0; k1 < n; ++k1) {
    double b1 = k1 == 0 ? 1.0 : kSqrt2;
    double cy = std::cos(kPi * k1 * (y + 0.5) / n);
    for (int k2 = 0; k2 < n; ++k2) {
      double b2 = k2 == 0 ? 1.0 : kSqrt2;
      double cx = std::cos(kPi * k2 * (x + 0.5) / n);
      double lambda = 1.0 / (kPi * kPi * (static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2) + c);
      acc += sq(lambda * b1 * cy * b2 * cx);
    }
  }
  return acc;
}

Field2D psi_pushforward(const Field2D& g) {
  Field2D out = g;
  for (double& v : out.data) v = v >= 0.0 ? 12.0 : 2.0;
  return out;
}

double trig_coefficient_at(const std::array<double, 6>& ak, double x1, double x2) {
  double prod = 1.0;
  for (double a : ak) {
    prod *= 1.0 + 0.5 * std::cos(a * kPi * (x1 + x2));
    prod *= 1.0 + 0.5 * std::sin(a * kPi * (x2 - 3.0 * x1));
  }
  return prod;
}

Field2D sample_trig_coefficient(int n, std::uint64_t seed, std::array<double, 6>* ak_out) {
  if (n < 2) throw std::invalid_argument("sample_trig_coefficient: lattice too small");
  Rng rng(seed);
  std::array<double, 6> ak;
  for (int k = 1; k <= 6; ++k) {
    double lo = std::pow(2.0, k - 1);
    ak[k - 1] = rng.uniform(lo, 1.5 * lo);
  }
  if (ak_out) *ak_out = ak;
  // Row index pairs with x2, column index with x1, both spanning [-1, 1].
  Field2D out(n, n, 1, 2.0, 2.0);
  for (int y = 0; y < n; ++y) {
    double x2 = lattice_coord(Lattice::VertexClosed, y, n, 2.0) - 1.0;
    for (int x = 0; x < n; ++x) {
      double x1 = lattice_coord(Lattice::VertexClosed, x, n, 2.0) - 1.0;
      out.at(y, x) = trig_coefficient_at(ak, x1, x2);
    }
  }
  return out;
}

Field2D solve_elliptic_fd(const Field2D& a, const Field2D& f, double tol, int max_iter) {
  if (a.c != 1 || f.c != 1)
    throw std::invalid_argument("solve_elliptic_fd: fields must be single-channel");
  check_same_shape(a, f, "solve_elliptic_fd");
  if (a.h < 3 || a.w < 3)
    throw std::invalid_argument("solve_elliptic_fd: lattice must be at least 3x3");
  if (tol <= 0.0) throw std::invalid_argument("solve_elliptic_fd: tol must be positive");
  for (double v : a.data)
    if (!(v > 0.0))
      throw std::invalid_argument("solve_elliptic_fd: coefficient must be strictly positive");

  const int h = a.h, w = a.w;
  const int ih = h - 2, iw = w - 2;  // interior block
  const double hx = a.Lx / (w - 1), hy = a.Ly / (h - 1);
  const double sx = 1.0 / (hx * hx), sy = 1.0 / (hy * hy);
  const std::size_t m = static_cast<std::size_t>(ih) * iw;
  if (max_iter <= 0) max_iter = 50000;

  auto harm = [](double p, double q) { return 2.0 * p * q / (p + q); };

  // Face conductances and the diagonal, interior sites row-major.
  std::vector<double> ce(m), cw(m), cn(m), cs(m), diag(m), b(m);
  for (int y = 1; y <= ih; ++y)
    for (int x = 1; x <= iw; ++x) {
      std::size_t i = static_cast<std::size_t>(y - 1) * iw + (x - 1);
      double ap = a.at(y, x);
      ce[i] = sx * harm(ap, a.at(y, x + 1));
      cw[i] = sx * harm(ap, a.at(y, x - 1));
      cn[i] = sy * harm(ap, a.at(y + 1, x));
      cs[i] = sy * harm(ap, a.at(y - 1, x));
      diag[i] = ce[i] + cw[i] + cn[i] + cs[i];
      b[i] = f.at(y, x);
    }

  auto apply = [&](const std::vector<double>& u, std::vector<double>& out) {
    for (int y = 0; y < ih; ++y)
      for (int x = 0; x < iw; ++x) {
        std::size_t i = static_cast<std::size_t>(y) * iw + x;
        double acc = diag[i] * u[i];
        if (x + 1 < iw) acc -= ce[i] * u[i + 1];
        if (x > 0) acc -= cw[i] * u[i - 1];
        if (y + 1 < ih) acc -= cn[i] * u[i + iw];
        if (y > 0) acc -= cs[i] * u[i - iw];
        out[i] = acc;
      }
  };
  auto dot = [](const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * q[i];
    return s;
  };

  double bnorm = std::sqrt(dot(b, b));
  Field2D uout(h, w, 1, a.Lx, a.Ly);
  if (bnorm == 0.0) return uout;

  std::vector<double> u(m, 0.0), r = b, z(m), p(m), Ap(m);
  for (std::size_t i = 0; i < m; ++i) z[i] = r[i] / diag[i];
  p = z;
  double rz = dot(r, z);
  double rnorm = bnorm;
  for (int it = 0; it < max_iter; ++it) {
    apply(p, Ap);
    double alpha = rz / dot(p, Ap);
    for (std::size_t i = 0; i < m; ++i) {
      u[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    rnorm = std::sqrt(dot(r, r));
    if (!std::isfinite(rnorm))
      throw std::runtime_error("solve_elliptic_fd: residual diverged (NaN)");
    if (rnorm <= tol * bnorm) {
      for (int y = 1; y <= ih; ++y)
        for (int x = 1; x <= iw; ++x)
          uout.at(y, x) = u[static_cast<std::size_t>(y - 1) * iw + (x - 1)];
      return uout;
    }
    for (std::size_t i = 0; i < m; ++i) z[i] = r[i] / diag[i];
    double rz_next = dot(r, z);
    double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < m; ++i) p[i] = z[i] + beta * p[i];
  }
  throw std::runtime_error(
      "solve_elliptic_fd: CG failed to reach tol " + std::to_string(tol) + " in " +
      std::to_string(max_iter) + " iterations (relative residual " +
      std::to_string(rnorm / bnorm) + ")");
}

double grf_periodic_coeff_variance(int k1, int k2) {
  double lam = 4.0 * kPi * kPi * (static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2) + 49.0;
  return std::pow(7.0, 1.5) * std::pow(lam, -2.5);
}

Field2D sample_grf_periodic(int n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("sample_grf_periodic: lattice too small");
  Rng rng(seed);
  Spectrum2D spec(n, n, 1, 1.0, 1.0);
  for (int k1 = 0; k1 < n; ++k1)
    for (int k2 = 0; k2 < n; ++k2) {
      int m1 = (n - k1) % n, m2 = (n - k2) % n;
      bool self = (m1 == k1 && m2 == k2);
      bool owner = self || (k1 < m1 || (k1 == m1 && k2 < m2));
      if (!owner) continue;
      double std_k = std::sqrt(grf_periodic_coeff_variance(signed_mode(k1, n), signed_mode(k2, n)));
      if (self) {
        spec.at(k1, k2) = {rng.normal() * std_k, 0.0};
      } else {
        double re = rng.normal() * std_k / kSqrt2;
        double im = rng.normal() * std_k / kSqrt2;
        spec.at(k1, k2) = {re, im};
        spec.at(m1, m2) = {re, -im};
      }
    }
  // Drawn values are Fourier series coefficients; the inverse FFT divides by
  // n^2, so scale the bins up to synthesize sum_k c_k exp(2 pi i k.x).
  double scale = static_cast<double>(n) * n;
  for (auto& z : spec.data) z *= scale;
  return ifft2(spec);
}

NSTrajectory ns_solve(const Field2D& w0, double nu, int T, double dt,
                      double forcing_amp, int record_stride_seconds) {
  if (w0.c != 1) throw std::invalid_argument("ns_solve: vorticity must be single-channel");
  if (nu < 0.0) throw std::invalid_argument("ns_solve: viscosity must be nonnegative");
  if (T < 0) throw std::invalid_argument("ns_solve: T must be nonnegative");
  if (dt <= 0.0) throw std::invalid_argument("ns_solve: dt must be positive");
  if (record_stride_seconds < 1 || T % record_stride_seconds != 0)
    throw std::invalid_argument("ns_solve: T must be a multiple of the record stride");
  const int h = w0.h, w = w0.w;
  const std::size_t m = static_cast<std::size_t>(h) * w;
  const long steps_per_second = std::lround(1.0 / dt);
  if (steps_per_second < 1 || std::abs(steps_per_second * dt - 1.0) > 1e-9)
    throw std::invalid_argument("ns_solve: dt must evenly divide one second");

  // Per-bin angular frequencies. Odd-order derivatives zero the Nyquist mode
  // so velocity and gradient fields stay Hermitian.
  std::vector<double> omx(w), omy(h), omx_d(w), omy_d(h);
  for (int k = 0; k < w; ++k) {
    omx[k] = omega_component(k, w, w0.Lx);
    omx_d[k] = (2 * k == w) ? 0.0 : omx[k];
  }
  for (int k = 0; k < h; ++k) {
    omy[k] = omega_component(k, h, w0.Ly);
    omy_d[k] = (2 * k == h) ? 0.0 : omy[k];
  }
  std::vector<double> inv_lap(m), visc_num(m), visc_den(m);
  std::vector<char> keep(m);
  for (int k1 = 0; k1 < h; ++k1)
    for (int k2 = 0; k2 < w; ++k2) {
      std::size_t i = static_cast<std::size_t>(k1) * w + k2;
      double lap = sq(omx[k2]) + sq(omy[k1]);
      inv_lap[i] = lap > 0.0 ? 1.0 / lap : 0.0;
      visc_num[i] = 1.0 - 0.5 * nu * dt * lap;
      visc_den[i] = 1.0 / (1.0 + 0.5 * nu * dt * lap);
      keep[i] = std::abs(signed_mode(k1, h)) <= h / 3 && std::abs(signed_mode(k2, w)) <= w / 3;
    }

  // Forcing spectrum (unnormalized DFT bins), fixed in time.
  std::vector<double> fre(m, 0.0), fim(m, 0.0);
  if (forcing_amp != 0.0) {
    Field2D force(h, w, 1, w0.Lx, w0.Ly);
    for (int y = 0; y < h; ++y) {
      double x2 = lattice_coord(Lattice::VertexPeriodic, y, h, w0.Ly);
      for (int x = 0; x < w; ++x) {
        double x1 = lattice_coord(Lattice::VertexPeriodic, x, w, w0.Lx);
        double phase = kTwoPi * (x1 + x2);
        force.at(y, x) = forcing_amp * (std::sin(phase) + std::cos(phase));
      }
    }
    Spectrum2D fhat = fft2(force);
    for (std::size_t i = 0; i < m; ++i) {
      fre[i] = fhat.data[i].real();
      fim[i] = fhat.data[i].imag();
    }
  }

  // State: unnormalized DFT bins of the vorticity.
  std::vector<double> wre(m), wim(m, 0.0);
  std::copy(w0.data.begin(), w0.data.end(), wre.begin());
  fftcore::transform_2d(wre.data(), wim.data(), h, w, false);

  const double inv_m = 1.0 / static_cast<double>(m);
  const double hx = w0.Lx / w, hy = w0.Ly / h;
  std::vector<double> u1re(m), u1im(m), u2re(m), u2im(m);
  std::vector<double> gxre(m), gxim(m), gyre(m), gyim(m);
  std::vector<double> gre_prev(m), gim_prev(m), gre(m), gim(m);

  auto snapshot = [&]() {
    std::vector<double> re = wre, im = wim;
    fftcore::transform_2d(re.data(), im.data(), h, w, true);
    Field2D out(h, w, 1, w0.Lx, w0.Ly);
    for (std::size_t i = 0; i < m; ++i) out.data[i] = re[i] * inv_m;
    return out;
  };

  NSTrajectory traj;
  traj.nu = nu;
  traj.dt = dt;
  traj.forcing_amp = forcing_amp;
  traj.w.reserve(static_cast<std::size_t>(T / record_stride_seconds) + 1);
  traj.w.push_back(w0);  // snapshot 0 is the initial condition, verbatim

  const long total_steps = static_cast<long>(T) * steps_per_second;
  const long record_every = steps_per_second * record_stride_seconds;
  for (long step = 0; step < total_steps; ++step) {
    // Velocity u = (d psi/dx2, -d psi/dx1) with psi_hat = w_hat / |omega|^2,
    // and the vorticity gradient, all in spectral space.
    for (int k1 = 0; k1 < h; ++k1)
      for (int k2 = 0; k2 < w; ++k2) {
        std::size_t i = static_cast<std::size_t>(k1) * w + k2;
        double pre = wre[i] * inv_lap[i], pim = wim[i] * inv_lap[i];
        u1re[i] = -omy_d[k1] * pim;
        u1im[i] = omy_d[k1] * pre;
        u2re[i] = omx_d[k2] * pim;
        u2im[i] = -omx_d[k2] * pre;
        gxre[i] = -omx_d[k2] * wim[i];
        gxim[i] = omx_d[k2] * wre[i];
        gyre[i] = -omy_d[k1] * wim[i];
        gyim[i] = omy_d[k1] * wre[i];
      }
    fftcore::transform_2d(u1re.data(), u1im.data(), h, w, true);
    fftcore::transform_2d(u2re.data(), u2im.data(), h, w, true);
    fftcore::transform_2d(gxre.data(), gxim.data(), h, w, true);
    fftcore::transform_2d(gyre.data(), gyim.data(), h, w, true);

    double max_u1 = 0.0, max_u2 = 0.0, checksum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double a1 = u1re[i] * inv_m, a2 = u2re[i] * inv_m;
      double gx = gxre[i] * inv_m, gy = gyre[i] * inv_m;
      max_u1 = std::max(max_u1, std::abs(a1));
      max_u2 = std::max(max_u2, std::abs(a2));
      gre[i] = a1 * gx + a2 * gy;  // u . grad(w) in real space
      gim[i] = 0.0;
      checksum += gre[i];  // NaN survives addition, unlike std::max
    }
    if (!std::isfinite(checksum))
      throw std::runtime_error("ns_solve: solution blew up (NaN) at step " + std::to_string(step));
    double cfl = dt * std::max(max_u1 / hx, max_u2 / hy);
    if (cfl > 1.0)
      throw std::runtime_error("ns_solve: advective CFL violation at step " +
                               std::to_string(step) + " (CFL " + std::to_string(cfl) + ")");

    fftcore::transform_2d(gre.data(), gim.data(), h, w, false);
    for (std::size_t i = 0; i < m; ++i) {
      if (keep[i]) {
        gre[i] = fre[i] - gre[i];
        gim[i] = fim[i] - gim[i];
      } else {
        gre[i] = fre[i];
        gim[i] = fim[i];
      }
    }

    if (step == 0) {
      gre_prev = gre;
      gim_prev = gim;
    }
    for (std::size_t i = 0; i < m; ++i) {
      double rhs_re = visc_num[i] * wre[i] + dt * (1.5 * gre[i] - 0.5 * gre_prev[i]);
      double rhs_im = visc_num[i] * wim[i] + dt * (1.5 * gim[i] - 0.5 * gim_prev[i]);
      wre[i] = rhs_re * visc_den[i];
      wim[i] = rhs_im * visc_den[i];
    }
    gre_prev.swap(gre);
    gim_prev.swap(gim);

    if ((step + 1) % record_every == 0) traj.w.push_back(snapshot());
  }
  return traj;
}

Field2D add_noise(const Field2D& u, double eps, std::uint64_t seed) {
  if (eps < 0.0) throw std::invalid_argument("add_noise: eps must be nonnegative");
  if (eps == 0.0) return u;
  Rng rng(seed);
  double rms = l2_norm(u) / std::sqrt(static_cast<double>(u.size()));
  Field2D out = u;
  for (double& v : out.data) v += eps * rms * rng.normal();
  return out;
}

namespace {

constexpr std::uint64_t kNoiseTag = 0x6e6f697365ULL;

struct DarcyFields {
  Field2D a_fine, u_fine, a_coarse, u_coarse;
};

DarcyFields darcy_pipeline(const DataGenConfig& cfg, std::uint64_t seed) {
  int fine = cfg.fine_resolution, s = cfg.resolution;
  // The Gaussian field is synthesized on its native cell-centered lattice,
  // moved onto the solver's vertex lattice, and only then pushed through psi,
  // so the coefficient is exactly two-valued at every resolution.
  Field2D g = sample_grf_neumann(cfg.grf_c, fine, seed);
  DarcyFields out;
  out.a_fine = psi_pushforward(
      resample_between(g, Lattice::CellCentered, fine, fine, Lattice::VertexClosed));
  out.u_fine = solve_elliptic_fd(out.a_fine, ones_like(fine, fine, 1.0, 1.0), cfg.cg_tol);
  out.a_coarse = psi_pushforward(
      resample_between(g, Lattice::CellCentered, s, s, Lattice::VertexClosed));
  out.u_coarse = resample_linear(out.u_fine, s, s, Lattice::VertexClosed);
  return out;
}

}  // namespace

EllipticSample make_darcy_sample(const DataGenConfig& cfg, std::uint64_t seed) {
  DarcyFields fields = darcy_pipeline(cfg, seed);
  EllipticSample sample;
  sample.a = std::move(fields.a_fine);
  sample.u = std::move(fields.u_fine);
  sample.f = ones_like(cfg.fine_resolution, cfg.fine_resolution, 1.0, 1.0);
  sample.seed = seed;
  return sample;
}

EllipticSample make_trig_sample(const DataGenConfig& cfg, std::uint64_t seed) {
  EllipticSample sample;
  sample.a = sample_trig_coefficient(cfg.fine_resolution, seed);
  sample.f = ones_like(cfg.fine_resolution, cfg.fine_resolution, 2.0, 2.0);
  sample.u = solve_elliptic_fd(sample.a, sample.f, cfg.cg_tol);
  sample.seed = seed;
  return sample;
}

DatasetContainer make_dataset(const DataGenConfig& cfg) {
  if (cfg.samples < 1) throw std::invalid_argument("make_dataset: need at least one sample");
  if (cfg.resolution < 2) throw std::invalid_argument("make_dataset: resolution too small");
  DatasetContainer out;
  out.scalar_code = 1;
  for (int i = 0; i < cfg.samples; ++i) {
    std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    switch (cfg.task) {
      case Task::DarcyRough: {
        DarcyFields fields = darcy_pipeline(cfg, seed);
        out.append_sample(fields.a_coarse, fields.u_coarse);
        break;
      }
      case Task::Trig: {
        EllipticSample sample = make_trig_sample(cfg, seed);
        int s = cfg.resolution;
        out.append_sample(resample_linear(sample.a, s, s, Lattice::VertexClosed),
                          resample_linear(sample.u, s, s, Lattice::VertexClosed));
        break;
      }
      case Task::NavierStokes: {
        Field2D w0 = sample_grf_periodic(cfg.resolution, seed);
        NSTrajectory traj = ns_solve(w0, cfg.nu, cfg.ns_T, cfg.ns_dt, cfg.forcing_amp);
        Field2D snaps(cfg.resolution, cfg.resolution, static_cast<int>(traj.w.size()), 1.0, 1.0);
        for (int t = 0; t < static_cast<int>(traj.w.size()); ++t)
          for (int y = 0; y < cfg.resolution; ++y)
            for (int x = 0; x < cfg.resolution; ++x)
              snaps.at(y, x, t) = traj.w[t].at(y, x);
        out.append_sample(w0, snaps);
        break;
      }
      case Task::InverseDarcy: {
        DarcyFields fields = darcy_pipeline(cfg, seed);
        Field2D noisy = add_noise(fields.u_coarse, cfg.noise_eps, derive_seed(seed, kNoiseTag));
        out.append_sample(noisy, fields.a_coarse);
        break;
      }
    }
  }
  return out;
}

}  // namespace dcno
