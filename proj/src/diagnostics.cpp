#include "dcno/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dcno/fft.hpp"

namespace dcno {
namespace {

double band_omega(const Field2D& f, int k1, int k2) {
  double oy = omega_component(k1, f.h, f.Ly);
  double ox = omega_component(k2, f.w, f.Lx);
  return std::sqrt(oy * oy + ox * ox);
}

struct BandNorms {
  double err_low = 0.0, err_high = 0.0;
  double tgt_low = 0.0, tgt_high = 0.0;
  long modes_low = 0, modes_high = 0;
};

BandNorms band_norms(const Field2D& pred, const Field2D& target, double omega_star) {
  check_same_shape(pred, target, "freq_split_error");
  Field2D diff = pred;
  for (std::size_t i = 0; i < diff.data.size(); ++i) diff.data[i] -= target.data[i];
  Spectrum2D ehat = fft2(diff), that = fft2(target);
  BandNorms out;
  for (int k1 = 0; k1 < target.h; ++k1)
    for (int k2 = 0; k2 < target.w; ++k2) {
      bool low = band_omega(target, k1, k2) <= omega_star;
      (low ? out.modes_low : out.modes_high) += 1;
      for (int ch = 0; ch < target.c; ++ch) {
        double e = std::norm(ehat.at(k1, k2, ch));
        double t = std::norm(that.at(k1, k2, ch));
        if (low) {
          out.err_low += e;
          out.tgt_low += t;
        } else {
          out.err_high += e;
          out.tgt_high += t;
        }
      }
    }
  return out;
}

}  // namespace

Field2D error_spectrum(const Field2D& pred, const Field2D& target) {
  check_same_shape(pred, target, "error_spectrum");
  Field2D diff = pred;
  for (std::size_t i = 0; i < diff.data.size(); ++i) diff.data[i] -= target.data[i];
  Spectrum2D ehat = fft2(diff);
  double tnorm = l2_norm(fft2(target));
  if (tnorm == 0.0)
    throw std::invalid_argument("error_spectrum: target spectrum has zero norm");
  Field2D eps(target.h, target.w, target.c, target.Lx, target.Ly);
  for (std::size_t i = 0; i < eps.data.size(); ++i)
    eps.data[i] = std::abs(ehat.data[i]) / tnorm;
  return eps;
}

AnnulusDensity annulus_density(const Field2D& eps) {
  int rmax = static_cast<int>(std::floor(
      std::sqrt(static_cast<double>(eps.h / 2) * (eps.h / 2) +
                static_cast<double>(eps.w / 2) * (eps.w / 2))));
  AnnulusDensity out;
  out.mass.assign(rmax + 1, 0.0);
  for (int k1 = 0; k1 < eps.h; ++k1) {
    double m1 = signed_mode(k1, eps.h);
    for (int k2 = 0; k2 < eps.w; ++k2) {
      double m2 = signed_mode(k2, eps.w);
      int r = static_cast<int>(std::floor(std::sqrt(m1 * m1 + m2 * m2)));
      for (int ch = 0; ch < eps.c; ++ch) out.mass[r] += eps.at(k1, k2, ch);
    }
  }
  out.density.resize(out.mass.size());
  for (std::size_t r = 0; r < out.mass.size(); ++r)
    out.density[r] = out.mass[r] / (r + 0.5);
  return out;
}

FreqSplit freq_split_error(const Field2D& pred, const Field2D& target, double omega_star) {
  BandNorms n = band_norms(pred, target, omega_star);
  FreqSplit out;
  if (n.modes_low > 0 && n.tgt_low > 0.0) out.low = std::sqrt(n.err_low / n.tgt_low);
  if (n.modes_high > 0 && n.tgt_high > 0.0) out.high = std::sqrt(n.err_high / n.tgt_high);
  return out;
}

FreqSplit freq_split_error_shared(const Field2D& pred, const Field2D& target, double omega_star) {
  BandNorms n = band_norms(pred, target, omega_star);
  double total = n.tgt_low + n.tgt_high;
  FreqSplit out;
  if (total > 0.0) {
    if (n.modes_low > 0) out.low = std::sqrt(n.err_low / total);
    if (n.modes_high > 0) out.high = std::sqrt(n.err_high / total);
  }
  return out;
}

std::vector<DynamicsRow> track_dynamics(const EpochForward& forward,
                                        const std::vector<int>& epochs,
                                        const SampleSet& test, double omega_star) {
  if (epochs.empty()) throw std::invalid_argument("track_dynamics: need at least one epoch");
  if (test.size() == 0) throw std::invalid_argument("track_dynamics: empty test split");
  std::vector<DynamicsRow> rows;
  rows.reserve(epochs.size());
  for (int epoch : epochs) {
    DynamicsRow row;
    row.epoch = epoch;
    double low_acc = 0.0, high_acc = 0.0;
    long low_n = 0, high_n = 0;
    for (std::size_t s = 0; s < test.size(); ++s) {
      Field2D pred = forward(epoch, test.inputs[s]);
      AnnulusDensity annuli = annulus_density(error_spectrum(pred, test.outputs[s]));
      if (row.annuli.mass.empty()) {
        row.annuli = annuli;
      } else {
        if (annuli.mass.size() != row.annuli.mass.size())
          throw std::invalid_argument("track_dynamics: inconsistent sample shapes");
        for (std::size_t r = 0; r < annuli.mass.size(); ++r) {
          row.annuli.mass[r] += annuli.mass[r];
          row.annuli.density[r] += annuli.density[r];
        }
      }
      FreqSplit split = freq_split_error(pred, test.outputs[s], omega_star);
      if (split.low) {
        low_acc += *split.low;
        ++low_n;
      }
      if (split.high) {
        high_acc += *split.high;
        ++high_n;
      }
    }
    double inv = 1.0 / static_cast<double>(test.size());
    for (std::size_t r = 0; r < row.annuli.mass.size(); ++r) {
      row.annuli.mass[r] *= inv;
      row.annuli.density[r] *= inv;
    }
    if (low_n > 0) row.low = low_acc / low_n;
    if (high_n > 0) row.high = high_acc / high_n;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<DynamicsRow> track_dynamics(
    const Model& model, ParameterStore& store,
    const std::vector<std::pair<int, std::vector<double>>>& epoch_params,
    const SampleSet& test, double omega_star) {
  if (epoch_params.empty())
    throw std::invalid_argument("track_dynamics: need at least one checkpointed epoch");
  std::vector<int> epochs;
  epochs.reserve(epoch_params.size());
  for (const auto& [epoch, params] : epoch_params) epochs.push_back(epoch);
  auto forward = [&](int epoch, const Field2D& input) {
    for (const auto& [e, params] : epoch_params)
      if (e == epoch) {
        store.unflatten(params);
        return model.apply(input);
      }
    throw std::logic_error("track_dynamics: epoch without parameters");
  };
  return track_dynamics(forward, epochs, test, omega_star);
}

void write_dynamics_csv(std::ostream& out, const std::vector<DynamicsRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("write_dynamics_csv: no rows");
  char buf[64];
  out << "epoch";
  for (std::size_t r = 0; r < rows.front().annuli.density.size(); ++r) out << ",r" << r;
  out << ",low_err,high_err\n";
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const DynamicsRow& row : rows) {
    out << row.epoch;
    for (double d : row.annuli.density) out << "," << fmt(d);
    out << "," << (row.low ? fmt(*row.low) : "nan");
    out << "," << (row.high ? fmt(*row.high) : "nan") << "\n";
  }
}

}  // namespace dcno
