#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <utility>

#include "wotfprobe/fft.hpp"
#include "wotfprobe/grid.hpp"
#include "wotfprobe/rng.hpp"

namespace wotf {

inline constexpr double kPi = 3.14159265358979323846;

/// Maximum phase depth for which the weak-object linearization is accepted.
inline constexpr double kWeakPhaseLimit = 0.1 * kPi;

/// Geometry of the lensless imaging system: collimated illumination, a pure
/// phase object, free-space propagation over `defocus`, intensity detection
/// on a square grid of `grid_n` x `grid_n` pixels of size `pixel_pitch`.
struct OpticalConfig {
  double wavelength = 633e-9;  // m
  double defocus = 100e-3;     // m
  double pixel_pitch = 20e-6;  // m
  int grid_n = 64;

  void validate() const {
    if (!(wavelength > 0)) throw std::invalid_argument("OpticalConfig: wavelength must be > 0");
    if (!(defocus > 0)) throw std::invalid_argument("OpticalConfig: defocus must be > 0");
    if (!(pixel_pitch > 0)) throw std::invalid_argument("OpticalConfig: pixel_pitch must be > 0");
    if (grid_n < 8 || grid_n % 2 != 0)
      throw std::invalid_argument("OpticalConfig: grid_n must be even and >= 8");
  }

  /// Frequency sample spacing, 1/(grid_n * pixel_pitch), in cycles/m.
  double freq_step() const { return 1.0 / (grid_n * pixel_pitch); }

  /// Highest representable frequency magnitude per axis, 1/(2*pixel_pitch).
  double nyquist() const { return 1.0 / (2.0 * pixel_pitch); }

  /// lambda*z / (pitch^2 * N). Values well above 1 mean the quadratic phase
  /// of the Fresnel kernel is undersampled; reported by the CLI as a sanity
  /// flag rather than enforced.
  double fresnel_sampling_ratio() const {
    return wavelength * defocus / (pixel_pitch * pixel_pitch * grid_n);
  }

  /// Radius of the first WOTF null, sqrt(1/(lambda*z)), in cycles/m.
  double first_null_freq() const { return std::sqrt(1.0 / (wavelength * defocus)); }
};

/// Object phase f(x,y) in radians.
struct PhaseMap {
  RealGrid values;
};

/// Detected intensity g(x,y), normalized so a unit plane wave gives 1.
struct IntensityMap {
  RealGrid values;
};

/// Frequency-domain grid, DC-centered: sample (i,j) sits at frequency
/// ((i - n/2) * freq_step, (j - n/2) * freq_step). fftshift() maps to and
/// from the transform-native layout.
template <class T>
struct TransferGrid {
  Grid2D<T> values;
  double freq_step = 0;
};

namespace detail {

inline void require_grid_match(const RealGrid& g, const OpticalConfig& cfg, const char* op) {
  if (g.rows() != cfg.grid_n || g.cols() != cfg.grid_n)
    throw std::invalid_argument(std::string(op) + ": grid size mismatch (" +
                                std::to_string(g.rows()) + "x" + std::to_string(g.cols()) +
                                " vs grid_n=" + std::to_string(cfg.grid_n) + ")");
}

/// lambda*z*(u^2+v^2) for native-layout bin (r,c).
inline double chi_arg_native(const OpticalConfig& cfg, int r, int c) {
  double du = cfg.freq_step();
  double u = fft::native_freq(c, cfg.grid_n, du);
  double v = fft::native_freq(r, cfg.grid_n, du);
  return cfg.wavelength * cfg.defocus * (u * u + v * v);
}

}  // namespace detail

/// DC-centered frequency coordinates (u, v) in cycles/m; u varies along
/// columns, v along rows. DC is exactly zero at (n/2, n/2).
inline std::pair<RealGrid, RealGrid> frequency_grid(const OpticalConfig& cfg) {
  cfg.validate();
  const int n = cfg.grid_n;
  const double du = cfg.freq_step();
  RealGrid u(n, n), v(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      u(r, c) = (c - n / 2) * du;
      v(r, c) = (r - n / 2) * du;
    }
  return {std::move(u), std::move(v)};
}

/// Free-space (Fresnel) transfer function H(u,v) = exp(-i pi lambda z (u^2+v^2)),
/// DC-centered. Unit modulus everywhere, H(0,0) = 1.
inline TransferGrid<std::complex<double>> fresnel_transfer(const OpticalConfig& cfg) {
  cfg.validate();
  const int n = cfg.grid_n;
  ComplexGrid h(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double arg = detail::chi_arg_native(cfg, r, c);
      h(r, c) = std::polar(1.0, -kPi * arg);
    }
  return {fftshift(h), cfg.freq_step()};
}

/// Weak object transfer function W(u,v) = sin(pi lambda z (u^2+v^2)), DC-centered.
inline TransferGrid<double> wotf(const OpticalConfig& cfg) {
  cfg.validate();
  const int n = cfg.grid_n;
  RealGrid w(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) w(r, c) = std::sin(kPi * detail::chi_arg_native(cfg, r, c));
  return {fftshift(w), cfg.freq_step()};
}

/// Nonlinear forward model: g = |IFFT( FFT(exp(i f)) * H )|^2, with periodic
/// boundaries. Propagation is unitary, so the mean intensity of a pure phase
/// object is exactly 1.
inline IntensityMap propagate(const PhaseMap& phase, const OpticalConfig& cfg) {
  cfg.validate();
  detail::require_grid_match(phase.values, cfg, "propagate");
  const int n = cfg.grid_n;
  ComplexGrid field(n, n);
  for (size_t i = 0; i < field.size(); ++i)
    field.data()[i] = std::polar(1.0, phase.values.data()[i]);
  ComplexGrid spec = fft::forward(field);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      spec(r, c) *= std::polar(1.0, -kPi * detail::chi_arg_native(cfg, r, c));
  ComplexGrid out = fft::inverse(spec);
  IntensityMap g{RealGrid(n, n)};
  for (size_t i = 0; i < out.size(); ++i) g.values.data()[i] = std::norm(out.data()[i]);
  return g;
}

/// Weak-object linearized forward model: G = delta + 2 W F in the frequency
/// domain (delta carries the full DC power N^2 under the unnormalized
/// transform convention), i.e. g = 1 + 2 * IFFT(W * F) in the spatial domain.
inline IntensityMap linearized_forward(const PhaseMap& phase, const OpticalConfig& cfg) {
  cfg.validate();
  detail::require_grid_match(phase.values, cfg, "linearized_forward");
  if (max_abs(phase.values) > kWeakPhaseLimit * (1.0 + 1e-9))
    throw std::invalid_argument("linearized_forward: phase exceeds the weak-object limit 0.1*pi");
  const int n = cfg.grid_n;
  ComplexGrid spec = fft::forward(phase.values);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) spec(r, c) *= std::sin(kPi * detail::chi_arg_native(cfg, r, c));
  ComplexGrid b = fft::inverse(spec);
  IntensityMap g{RealGrid(n, n)};
  for (size_t i = 0; i < b.size(); ++i) g.values.data()[i] = 1.0 + 2.0 * b.data()[i].real();
  return g;
}

/// Additive Gaussian detector noise, sigma relative to the mean intensity.
/// Negative samples are clamped to zero to keep the intensity invariant.
inline IntensityMap add_detector_noise(const IntensityMap& g, double rel_sigma, uint64_t seed) {
  if (rel_sigma < 0) throw std::invalid_argument("add_detector_noise: negative sigma");
  IntensityMap out = g;
  if (rel_sigma == 0) return out;
  double sigma = rel_sigma * grid_mean(g.values);
  Rng rng(seed);
  for (auto& v : out.values) v = std::max(0.0, v + sigma * rng.gaussian());
  return out;
}

}  // namespace wotf
