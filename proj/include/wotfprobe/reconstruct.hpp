#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "wotfprobe/fft.hpp"
#include "wotfprobe/network.hpp"
#include "wotfprobe/optics.hpp"

namespace wotf {

/// Closed-form regularized inverse of the linearized forward model:
/// F_hat = 2W (G - delta) / ((2W)^2 + eps) per frequency. The delta term is
/// the DC bin carrying total power grid_n^2 under the unnormalized transform
/// convention, identical to the convention in linearized_forward and the
/// transfer diagnostics. Nulls are pulled to zero by the regularizer.
inline PhaseMap tikhonov_inverse(const IntensityMap& g, const OpticalConfig& cfg, double eps) {
  cfg.validate();
  detail::require_grid_match(g.values, cfg, "tikhonov_inverse");
  if (!(eps > 0)) throw std::invalid_argument("tikhonov_inverse: eps must be > 0");
  const int n = cfg.grid_n;
  ComplexGrid spec = fft::forward(g.values);
  spec(0, 0) -= double(n) * double(n);  // remove the delta (unit background)
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double w2 = 2.0 * std::sin(kPi * detail::chi_arg_native(cfg, r, c));
      spec(r, c) *= w2 / (w2 * w2 + eps);
    }
  ComplexGrid f = fft::inverse(spec);
  PhaseMap out{RealGrid(n, n)};
  for (size_t i = 0; i < f.size(); ++i) out.values.data()[i] = f.data()[i].real();
  return out;
}

/// Least-squares affine fit truth ~= a * estimate + b, pooled over all pixels
/// of all pairs. Used to correct the quantitative scale of NPCC-trained
/// reconstructions, which is only determined up to an affine map.
inline std::pair<double, double> fit_affine_scale(const std::vector<PhaseMap>& estimates,
                                                  const std::vector<PhaseMap>& truths) {
  if (estimates.size() != truths.size() || estimates.size() < 2)
    throw std::invalid_argument("fit_affine_scale: need at least 2 matching estimate/truth pairs");
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < estimates.size(); ++i) {
    const RealGrid& e = estimates[i].values;
    const RealGrid& t = truths[i].values;
    if (!e.same_shape(t)) throw std::invalid_argument("fit_affine_scale: shape mismatch");
    for (size_t j = 0; j < e.size(); ++j) {
      double x = e.data()[j], y = t.data()[j];
      n += 1;
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
  }
  double denom = n * sxx - sx * sx;
  if (!(denom > 0) || !(std::abs(denom) > 1e-12 * n * sxx))
    throw std::invalid_argument("fit_affine_scale: degenerate (constant) estimates");
  double a = (n * sxy - sx * sy) / denom;
  double b = (sy - a * sx) / n;
  return {a, b};
}

/// Network inference with the validation-fitted affine correction applied:
/// f_hat = a * net(g) + b.
inline PhaseMap neural_reconstruct(const IntensityMap& g, Network& net,
                                   std::pair<double, double> affine) {
  const int side = net.config().input_side;
  if (g.values.rows() != side || g.values.cols() != side)
    throw std::invalid_argument("neural_reconstruct: measurement does not match network input side");
  Tensor batch = measurement_batch({&g.values});
  const Tensor& out = net.forward(batch);
  PhaseMap est{RealGrid(side, side)};
  for (size_t i = 0; i < est.values.size(); ++i)
    est.values.data()[i] = affine.first * out.values[i] + affine.second;
  return est;
}

/// Uniform reconstruction interface: either the closed-form linear inverse
/// (the physics oracle) or a trained network with its affine correction.
class Reconstructor {
 public:
  enum class Kind { linear_inverse, neural };

  static Reconstructor linear_inverse(const OpticalConfig& optics, double eps) {
    if (!(eps > 0)) throw std::invalid_argument("Reconstructor: eps must be > 0");
    Reconstructor r;
    r.kind_ = Kind::linear_inverse;
    r.fn_ = [optics, eps](const IntensityMap& g) { return tikhonov_inverse(g, optics, eps); };
    return r;
  }

  static Reconstructor neural(std::shared_ptr<Network> net, std::pair<double, double> affine) {
    if (!net) throw std::invalid_argument("Reconstructor: null network");
    if (!std::isfinite(affine.first) || !std::isfinite(affine.second))
      throw std::invalid_argument("Reconstructor: non-finite affine correction");
    Reconstructor r;
    r.kind_ = Kind::neural;
    r.fn_ = [net, affine](const IntensityMap& g) { return neural_reconstruct(g, *net, affine); };
    return r;
  }

  Kind kind() const { return kind_; }

  PhaseMap operator()(const IntensityMap& g) const { return fn_(g); }

 private:
  Kind kind_ = Kind::linear_inverse;
  std::function<PhaseMap(const IntensityMap&)> fn_;
};

}  // namespace wotf
