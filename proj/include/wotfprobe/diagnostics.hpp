#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wotfprobe/fft.hpp"
#include "wotfprobe/grid.hpp"
#include "wotfprobe/optics.hpp"

namespace wotf {

/// Learned transfer function: per-frequency average of (G_k - delta) / F_hat_k
/// over a test set, DC-centered. Frequencies where no image exceeded the
/// denominator threshold are flagged invalid and carry no value.
struct LwotfResult {
  RealGrid grid;          // real part of the averaged ratio; 0 where invalid
  Grid2D<uint8_t> valid;  // 1 where >= 1 image contributed
  Grid2D<int> samples;    // contributing image count per frequency
  int n_images = 0;
  double freq_step = 0;
};

/// Extracts the learned WOTF of a reconstructor from intensity measurements.
/// The reconstructor is any callable IntensityMap -> PhaseMap. The DC bin is
/// always excluded (it carries the delta term). mask_threshold is relative to
/// each estimate's spectrum RMS.
template <class R>
LwotfResult extract_lwotf(R&& reconstructor, const std::vector<IntensityMap>& measurements,
                          const OpticalConfig& cfg, double mask_threshold = 1e-6) {
  cfg.validate();
  if (measurements.empty()) throw std::invalid_argument("extract_lwotf: need K >= 1 measurements");
  if (!(mask_threshold >= 0)) throw std::invalid_argument("extract_lwotf: negative mask threshold");
  const int n = cfg.grid_n;
  ComplexGrid acc(n, n, {0, 0});
  Grid2D<int> counts(n, n, 0);
  for (const auto& g : measurements) {
    detail::require_grid_match(g.values, cfg, "extract_lwotf");
    PhaseMap est = reconstructor(g);
    detail::require_grid_match(est.values, cfg, "extract_lwotf (reconstruction)");
    ComplexGrid G = fft::forward(g.values);
    G(0, 0) -= double(n) * double(n);  // remove delta
    ComplexGrid F = fft::forward(est.values);
    double rms = 0;
    for (const auto& v : F) rms += std::norm(v);
    rms = std::sqrt(rms / double(F.size()));
    const double floor = mask_threshold * rms;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        if (r == 0 && c == 0) continue;
        if (std::abs(F(r, c)) > floor) {
          acc(r, c) += G(r, c) / F(r, c);
          ++counts(r, c);
        }
      }
  }
  LwotfResult out;
  out.n_images = int(measurements.size());
  out.freq_step = cfg.freq_step();
  out.grid = RealGrid(n, n, 0.0);
  out.valid = Grid2D<uint8_t>(n, n, 0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      if (counts(r, c) > 0) {
        out.grid(r, c) = (acc(r, c) / double(counts(r, c))).real();
        out.valid(r, c) = 1;
      }
  out.grid = fftshift(out.grid);
  out.valid = fftshift(out.valid);
  out.samples = fftshift(counts);
  return out;
}

/// RMS difference between the extracted transfer and the exact linearized
/// ratio 2*sin(pi lambda z (u^2+v^2)), over valid frequencies with radial
/// frequency inside [band_lo, band_hi] (cycles/m).
inline double lwotf_fidelity(const LwotfResult& lwotf, const OpticalConfig& cfg, double band_lo,
                             double band_hi) {
  cfg.validate();
  if (lwotf.grid.rows() != cfg.grid_n)
    throw std::invalid_argument("lwotf_fidelity: grid size mismatch");
  if (!(band_lo >= 0) || !(band_hi > band_lo))
    throw std::invalid_argument("lwotf_fidelity: bad frequency band");
  const int n = cfg.grid_n;
  const double du = cfg.freq_step();
  double acc = 0;
  int64_t count = 0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      if (!lwotf.valid(r, c)) continue;
      double u = (c - n / 2) * du, v = (r - n / 2) * du;
      double rho = std::hypot(u, v);
      if (rho < band_lo || rho > band_hi) continue;
      double theory = 2.0 * std::sin(kPi * cfg.wavelength * cfg.defocus * rho * rho);
      double d = lwotf.grid(r, c) - theory;
      acc += d * d;
      ++count;
    }
  if (count == 0) throw std::domain_error("lwotf_fidelity: empty valid band");
  return std::sqrt(acc / double(count));
}

/// 1-D cross-section along the main diagonal through DC of a DC-centered
/// grid, values clipped to [clip_lo, clip_hi]. Pairs are (frequency
/// magnitude in cycles/m, value).
inline std::vector<std::pair<double, double>> diagonal_profile(const RealGrid& grid,
                                                               double freq_step,
                                                               double clip_lo = -3.0,
                                                               double clip_hi = 3.0) {
  if (grid.rows() != grid.cols()) throw std::invalid_argument("diagonal_profile: non-square grid");
  if (!(clip_hi > clip_lo)) throw std::invalid_argument("diagonal_profile: bad clip range");
  const int n = grid.rows();
  std::vector<std::pair<double, double>> out;
  out.reserve(size_t(n));
  for (int i = 0; i < n; ++i) {
    double u = (i - n / 2) * freq_step;
    double freq = std::sqrt(2.0) * std::abs(u);
    out.emplace_back(freq, std::clamp(grid(i, i), clip_lo, clip_hi));
  }
  return out;
}

inline std::string profile_to_csv(const std::vector<std::pair<double, double>>& profile) {
  std::ostringstream ss;
  ss.precision(12);
  ss << "freq_per_m,value\n";
  for (const auto& [f, v] : profile) ss << f << "," << v << "\n";
  return ss.str();
}

// ---------------------------------------------------------------------------
// Star-pattern null test

/// Radial grating with P azimuthal periods; the local fringe frequency
/// P/(2 pi r) sweeps with radius and samples the transfer function
/// continuously.
struct StarPattern {
  int periods = 50;
  enum class Profile { binary, sinusoidal } profile = Profile::sinusoidal;
  double depth = kWeakPhaseLimit;  // radians
  double phase_offset = 0;         // radians, azimuthal
  // Raised-cosine taper widths (pixels) at the annulus edges. Hard edges
  // diffract Fresnel ripples far into the pattern, which masquerade as
  // fringe flips; 0 disables a taper. The inner guard is kept short so nulls
  // near the resolvability radius stay usable.
  double outer_taper_px = 6.0;
  double inner_taper_px = 1.5;

  void validate() const {
    if (periods < 4) throw std::invalid_argument("StarPattern: need at least 4 periods");
    if (!(depth > 0) || depth > kWeakPhaseLimit * (1 + 1e-9))
      throw std::invalid_argument("StarPattern: depth must lie in (0, 0.1*pi]");
    if (outer_taper_px < 0 || inner_taper_px < 0)
      throw std::invalid_argument("StarPattern: negative edge taper");
  }
};

/// Innermost radius at which P azimuthal periods are still sampled at two
/// pixels per period.
inline double star_inner_radius(const OpticalConfig& cfg, int periods) {
  return periods * cfg.pixel_pitch / kPi;
}

inline double star_outer_radius(const OpticalConfig& cfg) {
  return (cfg.grid_n / 2 - 1) * cfg.pixel_pitch;
}

/// Renders the star phase object on the annulus where its fringes are
/// resolvable; zero elsewhere. Errors out when P aliases at the grid.
inline PhaseMap make_star(const StarPattern& star, const OpticalConfig& cfg) {
  star.validate();
  cfg.validate();
  const double r_in = star_inner_radius(cfg, star.periods);
  const double r_out = star_outer_radius(cfg);
  if (r_in >= r_out)
    throw std::invalid_argument("make_star: " + std::to_string(star.periods) +
                                " periods alias at grid_n=" + std::to_string(cfg.grid_n));
  const int n = cfg.grid_n;
  const double t_in = star.inner_taper_px * cfg.pixel_pitch;
  const double t_out = star.outer_taper_px * cfg.pixel_pitch;
  auto window = [&](double rad) {
    if (rad < r_in || rad > r_out) return 0.0;
    double w = 1.0;
    if (t_in > 0 && rad < r_in + t_in) w = 0.5 * (1.0 - std::cos(kPi * (rad - r_in) / t_in));
    if (t_out > 0 && rad > r_out - t_out)
      w = std::min(w, 0.5 * (1.0 - std::cos(kPi * (r_out - rad) / t_out)));
    return w;
  };
  PhaseMap out{RealGrid(n, n, 0.0)};
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double x = (c - n / 2) * cfg.pixel_pitch;
      double y = (r - n / 2) * cfg.pixel_pitch;
      double rad = std::hypot(x, y);
      double w = window(rad);
      if (w == 0.0) continue;
      double psi = star.periods * std::atan2(y, x) - star.phase_offset;
      double s = star.profile == StarPattern::Profile::sinusoidal
                     ? 0.5 * (1.0 + std::cos(psi))
                     : (std::cos(psi) >= 0 ? 1.0 : 0.0);
      out.values(r, c) = star.depth * w * s;
    }
  return out;
}

/// Radii where the measured star fringes flip sign: lambda z (P/(2 pi r_k))^2 = k,
/// i.e. r_k = (P / 2 pi) sqrt(lambda z / k). Strictly decreasing in k; only
/// radii inside the grid are returned (possibly none).
inline std::vector<double> predict_null_radii(const OpticalConfig& cfg, int periods, int k_max) {
  cfg.validate();
  if (k_max < 1) throw std::invalid_argument("predict_null_radii: k_max must be >= 1");
  if (periods < 1) throw std::invalid_argument("predict_null_radii: periods must be >= 1");
  const double r_out = star_outer_radius(cfg);
  std::vector<double> radii;
  for (int k = 1; k <= k_max; ++k) {
    double r = periods / (2.0 * kPi) * std::sqrt(cfg.wavelength * cfg.defocus / double(k));
    if (r <= r_out) radii.push_back(r);
  }
  return radii;
}

/// Per-annulus fringe phase probe: correlates each one-pixel-wide annulus of
/// `values` against cos(P theta) / sin(P theta) and returns the radii where
/// the signed correlation flips sign (a pi fringe jump), outermost first.
/// Works on measurements and on reconstructions. Throws when no annulus
/// carries usable fringe contrast. The scan band defaults to the resolvable
/// annulus of the star.
inline std::vector<double> detect_discontinuities(const RealGrid& values, int periods,
                                                  const OpticalConfig& cfg, double r_lo = 0,
                                                  double r_hi = 0) {
  cfg.validate();
  detail::require_grid_match(values, cfg, "detect_discontinuities");
  if (periods < 1) throw std::invalid_argument("detect_discontinuities: periods must be >= 1");
  if (r_lo <= 0) r_lo = star_inner_radius(cfg, periods) * 1.05;
  if (r_hi <= 0) r_hi = star_outer_radius(cfg) * 0.95;
  if (!(r_hi > r_lo)) throw std::invalid_argument("detect_discontinuities: empty scan band");

  const int n = cfg.grid_n;
  const double pitch = cfg.pixel_pitch;
  const double bin_w = pitch / 2.0;  // half-pitch annuli resolve edge ripples
  const int n_bins = int((r_hi - r_lo) / bin_w);
  if (n_bins < 7) throw std::invalid_argument("detect_discontinuities: scan band too narrow");
  auto bin_center = [&](double j) { return r_lo + (j + 0.5) * bin_w; };

  std::vector<double> sum_v(size_t(n_bins), 0), sum_c(size_t(n_bins), 0), sum_s(size_t(n_bins), 0);
  std::vector<double> sum_vc(size_t(n_bins), 0), sum_vs(size_t(n_bins), 0);
  std::vector<int64_t> count(size_t(n_bins), 0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double x = (c - n / 2) * pitch;
      double y = (r - n / 2) * pitch;
      double rad = std::hypot(x, y);
      int bin = int(std::floor((rad - r_lo) / bin_w));
      if (bin < 0 || bin >= n_bins) continue;
      double psi = periods * std::atan2(y, x);
      double cv = std::cos(psi), sv = std::sin(psi);
      double v = values(r, c);
      sum_v[size_t(bin)] += v;
      sum_c[size_t(bin)] += cv;
      sum_s[size_t(bin)] += sv;
      sum_vc[size_t(bin)] += v * cv;
      sum_vs[size_t(bin)] += v * sv;
      ++count[size_t(bin)];
    }

  // mean-corrected correlations per annulus
  std::vector<double> ca(size_t(n_bins), 0), cb(size_t(n_bins), 0);
  double max_amp = 0;
  int ref = -1;
  for (int j = 0; j < n_bins; ++j) {
    if (count[size_t(j)] < 4) continue;
    double m = sum_v[size_t(j)] / double(count[size_t(j)]);
    ca[size_t(j)] = (sum_vc[size_t(j)] - m * sum_c[size_t(j)]) / double(count[size_t(j)]);
    cb[size_t(j)] = (sum_vs[size_t(j)] - m * sum_s[size_t(j)]) / double(count[size_t(j)]);
    double amp = std::hypot(ca[size_t(j)], cb[size_t(j)]);
    if (amp > max_amp) {
      max_amp = amp;
      ref = j;
    }
  }
  double rms = 0;
  for (double v : values) rms += v * v;
  rms = std::sqrt(rms / double(values.size()));
  if (ref < 0 || max_amp < 1e-12 * std::max(rms, 1e-300))
    throw std::domain_error("detect_discontinuities: insufficient fringe contrast");

  const double cos_ref = ca[size_t(ref)] / max_amp, sin_ref = cb[size_t(ref)] / max_amp;
  std::vector<double> raw(size_t(n_bins), 0.0);
  for (int j = 0; j < n_bins; ++j)
    raw[size_t(j)] = ca[size_t(j)] * cos_ref + cb[size_t(j)] * sin_ref;

  // boxcar over ~1.5 pixels; edge-diffraction ripples average out while the
  // null transition, locally linear in r, keeps its zero crossing in place
  const int half = 2;
  std::vector<double> prof(size_t(n_bins), 0.0);
  for (int j = 0; j < n_bins; ++j) {
    double acc = 0;
    int m = 0;
    for (int d = -half; d <= half; ++d) {
      int jj = j + d;
      if (jj < 0 || jj >= n_bins) continue;
      acc += raw[size_t(jj)];
      ++m;
    }
    prof[size_t(j)] = acc / double(m);
  }

  // Sign flips between annuli of confident contrast; the crossing radius
  // comes from a local linear fit so single-bin noise cannot bias it.
  const double floor = 0.04 * max_amp;
  std::vector<double> radii;
  int prev_confident = -1;
  for (int j = n_bins - 1; j >= 0; --j) {
    if (std::abs(prof[size_t(j)]) < floor) continue;
    if (prev_confident >= 0 && (prof[size_t(j)] > 0) != (prof[size_t(prev_confident)] > 0)) {
      // locate the adjacent sign change inside the bridged gap
      int cross = -1;
      double best_slope = -1;
      for (int m = prev_confident - 1; m >= j; --m) {
        double hi = prof[size_t(m + 1)], lo = prof[size_t(m)];
        if ((hi > 0) == (lo > 0)) continue;
        if (std::abs(hi - lo) > best_slope) {
          best_slope = std::abs(hi - lo);
          cross = m;
        }
      }
      if (cross < 0) cross = (j + prev_confident) / 2;
      // least-squares line through the profile around the crossing
      int w_lo = std::max(0, cross - 2), w_hi = std::min(n_bins - 1, cross + 3);
      double sx = 0, sy = 0, sxx = 0, sxy = 0, m_count = 0;
      for (int m = w_lo; m <= w_hi; ++m) {
        double x = bin_center(m), y = prof[size_t(m)];
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        m_count += 1;
      }
      double slope = (m_count * sxy - sx * sy) / (m_count * sxx - sx * sx);
      double icept = (sy - slope * sx) / m_count;
      double r_cross = slope != 0 ? -icept / slope : bin_center(cross) + bin_w / 2;
      radii.push_back(r_cross);
    }
    prev_confident = j;
  }
  return radii;  // outermost first, matching k = 1, 2, ...
}

}  // namespace wotf
