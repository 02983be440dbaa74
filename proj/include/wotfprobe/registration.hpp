#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "wotfprobe/grid.hpp"

namespace wotf {

/// Affine map about the image center: source = A * (pos - center) + center + t,
/// with translations in pixels.
struct AffineParams {
  double a11 = 1, a12 = 0, a21 = 0, a22 = 1;
  double tx = 0, ty = 0;

  double det() const { return a11 * a22 - a12 * a21; }

  void validate() const {
    if (std::abs(det()) <= 1e-6)
      throw std::invalid_argument("AffineParams: singular linear part");
  }

  std::array<double, 6> to_vec() const { return {a11, a12, a21, a22, tx, ty}; }

  static AffineParams from_vec(const std::array<double, 6>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
  }

  /// Source-coordinate lookup for output pixel (x, y), pixel units.
  void map(double cx, double cy, double x, double y, double& sx, double& sy) const {
    double dx = x - cx, dy = y - cy;
    sx = a11 * dx + a12 * dy + tx + cx;
    sy = a21 * dx + a22 * dy + ty + cy;
  }
};

/// Inverse-mapped bilinear warp; samples outside the source are 0.
inline RealGrid warp_affine(const RealGrid& img, const AffineParams& p) {
  p.validate();
  const int rows = img.rows(), cols = img.cols();
  const double cx = (cols - 1) / 2.0, cy = (rows - 1) / 2.0;
  RealGrid out(rows, cols, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double sx, sy;
      p.map(cx, cy, c, r, sx, sy);
      int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
      double fx = sx - x0, fy = sy - y0;
      auto at = [&](int y, int x) {
        return (x >= 0 && x < cols && y >= 0 && y < rows) ? img(y, x) : 0.0;
      };
      out(r, c) = at(y0, x0) * (1 - fx) * (1 - fy) + at(y0, x0 + 1) * fx * (1 - fy) +
                  at(y0 + 1, x0) * (1 - fx) * fy + at(y0 + 1, x0 + 1) * fx * fy;
    }
  return out;
}

/// Normalized mutual information (H(A) + H(B)) / H(A,B) from the joint
/// histogram of min-max normalized intensities. Lies in [1, 2]; 2 iff the
/// joint histogram is a permutation of the diagonal.
inline double nmi(const RealGrid& a, const RealGrid& b, int n_bins = 64) {
  if (!a.same_shape(b)) throw std::invalid_argument("nmi: shape mismatch");
  if (n_bins < 2) throw std::invalid_argument("nmi: need at least 2 bins");
  double alo = grid_min(a), ahi = grid_max(a);
  double blo = grid_min(b), bhi = grid_max(b);
  if (!(ahi > alo) || !(bhi > blo))
    throw std::domain_error("nmi: constant image (zero marginal entropy)");
  std::vector<double> joint(size_t(n_bins) * n_bins, 0.0);
  const double na = n_bins / (ahi - alo), nb = n_bins / (bhi - blo);
  for (size_t i = 0; i < a.size(); ++i) {
    int ba = std::min(int((a.data()[i] - alo) * na), n_bins - 1);
    int bb = std::min(int((b.data()[i] - blo) * nb), n_bins - 1);
    joint[size_t(ba) * n_bins + bb] += 1.0;
  }
  const double total = double(a.size());
  std::vector<double> pa(size_t(n_bins), 0.0), pb(size_t(n_bins), 0.0);
  double hab = 0;
  for (int i = 0; i < n_bins; ++i)
    for (int j = 0; j < n_bins; ++j) {
      double p = joint[size_t(i) * n_bins + j] / total;
      if (p > 0) hab -= p * std::log2(p);
      pa[size_t(i)] += p;
      pb[size_t(j)] += p;
    }
  double ha = 0, hb = 0;
  for (int i = 0; i < n_bins; ++i) {
    if (pa[size_t(i)] > 0) ha -= pa[size_t(i)] * std::log2(pa[size_t(i)]);
    if (pb[size_t(i)] > 0) hb -= pb[size_t(i)] * std::log2(pb[size_t(i)]);
  }
  return (ha + hb) / hab;
}

// ---------------------------------------------------------------------------
// Nelder-Mead simplex

struct SimplexConfig {
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  int max_iter = 500;
  double x_tol = 1e-6;
  double f_tol = 1e-10;

  void validate() const {
    if (!(reflection > 0) || !(expansion > 1) || !(contraction > 0 && contraction < 1) ||
        !(shrink > 0 && shrink < 1))
      throw std::invalid_argument("SimplexConfig: coefficients out of the standard ranges");
    if (max_iter < 1) throw std::invalid_argument("SimplexConfig: max_iter must be >= 1");
  }
};

struct SimplexResult {
  std::vector<double> best_point;
  double best_value = 0;
  int iterations = 0;
  std::vector<double> best_history;  // best value after each iteration
};

/// Downhill simplex over R^n. The initial simplex spans init plus one offset
/// vertex per dimension (init_step). The best-ever vertex is returned and is
/// non-increasing across iterations. Throws on a non-finite objective value.
template <class F>
SimplexResult nelder_mead(F&& objective, const std::vector<double>& init,
                          const std::vector<double>& init_step, const SimplexConfig& cfg = {}) {
  cfg.validate();
  const size_t n = init.size();
  if (n == 0 || init_step.size() != n)
    throw std::invalid_argument("nelder_mead: bad init / init_step dimensions");

  auto eval = [&](const std::vector<double>& x) {
    double f = objective(x);
    if (!std::isfinite(f)) throw std::domain_error("nelder_mead: non-finite objective value");
    return f;
  };

  std::vector<std::vector<double>> v(n + 1, init);
  std::vector<double> fv(n + 1);
  for (size_t i = 0; i < n; ++i) v[i + 1][i] += init_step[i];
  for (size_t i = 0; i <= n; ++i) fv[i] = eval(v[i]);

  std::vector<size_t> order(n + 1);
  SimplexResult res;
  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return fv[a] < fv[b]; });
    const size_t best = order[0], worst = order[n], second_worst = order[n - 1];

    // convergence: simplex collapsed in x and f
    double f_spread = fv[worst] - fv[best];
    double x_spread = 0;
    for (size_t i = 0; i <= n; ++i)
      for (size_t d = 0; d < n; ++d)
        x_spread = std::max(x_spread, std::abs(v[i][d] - v[best][d]));
    if (f_spread < cfg.f_tol && x_spread < cfg.x_tol) break;

    std::vector<double> centroid(n, 0.0);
    for (size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (size_t d = 0; d < n; ++d) centroid[d] += v[i][d];
    }
    for (size_t d = 0; d < n; ++d) centroid[d] /= double(n);

    auto blend = [&](double coeff) {
      std::vector<double> x(n);
      for (size_t d = 0; d < n; ++d) x[d] = centroid[d] + coeff * (centroid[d] - v[worst][d]);
      return x;
    };

    std::vector<double> xr = blend(cfg.reflection);
    double fr = eval(xr);
    bool need_shrink = false;
    if (fr < fv[best]) {
      std::vector<double> xe = blend(cfg.reflection * cfg.expansion);
      double fe = eval(xe);
      if (fe < fr) {
        v[worst] = std::move(xe);
        fv[worst] = fe;
      } else {
        v[worst] = std::move(xr);
        fv[worst] = fr;
      }
    } else if (fr < fv[second_worst]) {
      v[worst] = std::move(xr);
      fv[worst] = fr;
    } else if (fr < fv[worst]) {
      std::vector<double> xc = blend(cfg.reflection * cfg.contraction);  // outside
      double fc = eval(xc);
      if (fc <= fr) {
        v[worst] = std::move(xc);
        fv[worst] = fc;
      } else {
        need_shrink = true;
      }
    } else {
      std::vector<double> xc = blend(-cfg.contraction);  // inside
      double fc = eval(xc);
      if (fc < fv[worst]) {
        v[worst] = std::move(xc);
        fv[worst] = fc;
      } else {
        need_shrink = true;
      }
    }
    if (need_shrink) {
      for (size_t i = 0; i <= n; ++i) {
        if (i == best) continue;
        for (size_t d = 0; d < n; ++d) v[i][d] = v[best][d] + cfg.shrink * (v[i][d] - v[best][d]);
        fv[i] = eval(v[i]);
      }
    }

    res.iterations = iter + 1;
    res.best_history.push_back(*std::min_element(fv.begin(), fv.end()));
  }

  size_t best = 0;
  for (size_t i = 1; i <= n; ++i)
    if (fv[i] < fv[best]) best = i;
  res.best_point = v[best];
  res.best_value = fv[best];
  return res;
}

/// Affine registration of `moving` onto `fixed` by minimizing the negative
/// NMI, started from the identity. Restarts from the incumbent with a
/// shrinking simplex spread keep the search from stalling on histogram
/// plateaus; the best vertex seen is returned.
inline AffineParams register_affine(const RealGrid& moving, const RealGrid& fixed,
                                    const SimplexConfig& cfg = {}) {
  if (!moving.same_shape(fixed)) throw std::invalid_argument("register_affine: shape mismatch");
  auto objective = [&](const std::vector<double>& x) {
    AffineParams p = AffineParams::from_vec({x[0], x[1], x[2], x[3], x[4], x[5]});
    if (std::abs(p.det()) <= 1e-6) return 1e3;  // repel singular corner
    return -nmi(warp_affine(moving, p), fixed);
  };
  // Capture-range prescan over integer translations: sharp images make the
  // NMI peak a needle the simplex cannot find from the identity.
  std::vector<double> point{1, 0, 0, 1, 0, 0};
  double point_value = objective(point);
  for (int dy = -6; dy <= 6; ++dy)
    for (int dx = -6; dx <= 6; ++dx) {
      std::vector<double> probe{1, 0, 0, 1, double(dx), double(dy)};
      double f = objective(probe);
      if (f < point_value) {
        point_value = f;
        point = probe;
      }
    }
  const std::vector<double> base_step{0.02, 0.02, 0.02, 0.02, 2.0, 2.0};
  SimplexResult best{};
  best.best_value = point_value;
  best.best_point = point;
  for (double scale : {1.0, 0.5, 0.5, 0.25}) {
    std::vector<double> step = base_step;
    for (auto& s : step) s *= scale;
    auto res = nelder_mead(objective, best.best_point, step, cfg);
    if (res.best_value < best.best_value) best = res;
  }
  return AffineParams::from_vec(
      {best.best_point[0], best.best_point[1], best.best_point[2], best.best_point[3],
       best.best_point[4], best.best_point[5]});
}

}  // namespace wotf
