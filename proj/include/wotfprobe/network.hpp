#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "wotfprobe/binio.hpp"
#include "wotfprobe/datasets.hpp"
#include "wotfprobe/optics.hpp"
#include "wotfprobe/parallel.hpp"
#include "wotfprobe/rng.hpp"
#include "wotfprobe/tensor.hpp"

namespace wotf {

/// Encoder-decoder layout: n_down_blocks stride-2 down-residual blocks,
/// the same number of up-residual blocks with skip concatenations, then
/// n_res_blocks constant-size residual blocks and a linear output head.
struct NetworkConfig {
  int n_down_blocks = 2;
  int n_up_blocks = 2;
  int n_res_blocks = 1;
  int base_channels = 16;
  int input_side = 32;
  int main_kernel = 3;      // main-branch convolutions, strided or not
  int up_side_kernel = 2;   // side-branch transposed convolution in URBs
  int res_side_kernel = 1;  // side-branch convolution in RBs

  void validate() const {
    if (n_down_blocks < 1 || n_up_blocks < 1 || n_res_blocks < 0)
      throw std::invalid_argument("NetworkConfig: block counts out of range");
    if (n_down_blocks != n_up_blocks)
      throw std::invalid_argument("NetworkConfig: skip connections need n_down_blocks == n_up_blocks");
    if (base_channels < 1) throw std::invalid_argument("NetworkConfig: base_channels must be >= 1");
    if (main_kernel < 2 || up_side_kernel < 1 || res_side_kernel < 1)
      throw std::invalid_argument("NetworkConfig: kernel sizes out of range");
    int side = input_side;
    for (int i = 0; i < n_down_blocks; ++i) {
      if (side % 2 != 0)
        throw std::invalid_argument("NetworkConfig: input_side must be divisible by 2^n_down_blocks");
      side /= 2;
    }
    if (side < 1) throw std::invalid_argument("NetworkConfig: too many down blocks for input_side");
  }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 5;
  int epochs = 30;
  uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1))
      throw std::invalid_argument("TrainConfig: betas must lie in (0, 1)");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  }
};

namespace nn {

// ---------------------------------------------------------------------------
// Convolution kernels, per sample / per channel so callers can parallelize
// over disjoint output slices. Accumulation order is fixed, which keeps
// results bit-identical for any worker count.

struct ConvGeom {
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  int k = 0, stride = 1;
  int pt = 0, pl = 0;  // top/left zero padding; bottom/right is implied
};

/// 'same'-style geometry: output side = input side / stride, total padding
/// k - stride split with the smaller half on top/left.
inline ConvGeom same_geom(int in_h, int in_w, int k, int stride) {
  if (stride != 1 && (in_h % stride != 0 || in_w % stride != 0))
    throw std::invalid_argument("conv: strided input side must be divisible by the stride");
  ConvGeom g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.k = k;
  g.stride = stride;
  g.out_h = in_h / stride;
  g.out_w = in_w / stride;
  int pad_total = k - stride;
  if (pad_total < 0) throw std::invalid_argument("conv: kernel smaller than stride");
  g.pt = pad_total / 2;
  g.pl = pad_total / 2;
  return g;
}

/// One output channel of a convolution for one sample.
/// x: [ic, in_h, in_w], w_oc: [ic, k, k] slice, y_oc: [out_h, out_w].
/// With accumulate set, adds into y_oc instead of overwriting (bias ignored).
inline void conv_fwd_oc(const double* x, int ic, const ConvGeom& g, const double* w_oc,
                        double bias, double* y_oc, bool accumulate = false) {
  const int64_t in_plane = int64_t(g.in_h) * g.in_w;
  if (!accumulate) std::fill(y_oc, y_oc + int64_t(g.out_h) * g.out_w, bias);
  for (int i = 0; i < ic; ++i) {
    const double* xi = x + i * in_plane;
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        const double wv = w_oc[(i * g.k + ky) * g.k + kx];
        if (wv == 0.0) continue;
        for (int oy = 0; oy < g.out_h; ++oy) {
          int iy = oy * g.stride - g.pt + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          int ox_lo = std::max(0, (g.pl - kx + g.stride - 1) / g.stride);
          // largest ox with ix <= in_w-1
          int ox_hi = std::min(g.out_w - 1, (g.in_w - 1 + g.pl - kx) / g.stride);
          const double* xrow = xi + int64_t(iy) * g.in_w - g.pl + kx;
          double* yrow = y_oc + int64_t(oy) * g.out_w;
          for (int ox = ox_lo; ox <= ox_hi; ++ox) yrow[ox] += wv * xrow[ox * g.stride];
        }
      }
  }
}

/// One input channel of the data gradient for one sample.
/// gy: [oc, out_h, out_w], w: [oc, ic_total, k, k], accumulates into gx_ic.
inline void conv_bwd_data_ic(const double* gy, int oc, const ConvGeom& g, const double* w,
                             int ic_total, int i, double* gx_ic) {
  const int64_t out_plane = int64_t(g.out_h) * g.out_w;
  for (int o = 0; o < oc; ++o) {
    const double* gyo = gy + o * out_plane;
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        const double wv = w[((int64_t(o) * ic_total + i) * g.k + ky) * g.k + kx];
        if (wv == 0.0) continue;
        for (int oy = 0; oy < g.out_h; ++oy) {
          int iy = oy * g.stride - g.pt + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          int ox_lo = std::max(0, (g.pl - kx + g.stride - 1) / g.stride);
          int ox_hi = std::min(g.out_w - 1, (g.in_w - 1 + g.pl - kx) / g.stride);
          double* gxrow = gx_ic + int64_t(iy) * g.in_w - g.pl + kx;
          const double* gyrow = gyo + int64_t(oy) * g.out_w;
          for (int ox = ox_lo; ox <= ox_hi; ++ox) gxrow[ox * g.stride] += wv * gyrow[ox];
        }
      }
  }
}

/// Weight gradient slice for one output channel of one sample.
/// Accumulates into gw_oc: [ic, k, k]; x: [ic, in_h, in_w], gy_oc: [out_h, out_w].
inline void conv_bwd_w_oc(const double* x, int ic, const ConvGeom& g, const double* gy_oc,
                          double* gw_oc) {
  const int64_t in_plane = int64_t(g.in_h) * g.in_w;
  for (int i = 0; i < ic; ++i) {
    const double* xi = x + i * in_plane;
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        double acc = 0;
        for (int oy = 0; oy < g.out_h; ++oy) {
          int iy = oy * g.stride - g.pt + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          int ox_lo = std::max(0, (g.pl - kx + g.stride - 1) / g.stride);
          int ox_hi = std::min(g.out_w - 1, (g.in_w - 1 + g.pl - kx) / g.stride);
          const double* xrow = xi + int64_t(iy) * g.in_w - g.pl + kx;
          const double* gyrow = gy_oc + int64_t(oy) * g.out_w;
          for (int ox = ox_lo; ox <= ox_hi; ++ox) acc += xrow[ox * g.stride] * gyrow[ox];
        }
        gw_oc[(i * g.k + ky) * g.k + kx] += acc;
      }
  }
}

// ---------------------------------------------------------------------------
// Graph nodes

class Node {
 public:
  virtual ~Node() = default;
  virtual void forward() = 0;
  virtual void backward() = 0;
  virtual void collect_params(std::vector<Tensor*>& out) { (void)out; }

  Tensor out;
  std::string name;

 protected:
  static int batch_of(const Tensor& t) { return t.dim(0); }
};

class InputNode final : public Node {
 public:
  void forward() override {}
  void backward() override {}
};

class ConvNode final : public Node {
 public:
  ConvNode(Node* src, int in_ch, int out_ch, int k, int stride, Rng& rng, std::string label)
      : src_(src), in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride) {
    name = std::move(label);
    weight = Tensor::zeros({out_ch, in_ch, k, k});
    bias = Tensor::zeros({out_ch});
    double a = std::sqrt(1.0 / double(in_ch * k * k));
    for (auto& v : weight.values) v = rng.uniform(-a, a);
  }

  void forward() override {
    const Tensor& x = src_->out;
    if (x.dim(1) != in_ch_)
      throw std::invalid_argument(name + ": expected " + std::to_string(in_ch_) +
                                  " input channels, got " + x.shape_str());
    geom_ = same_geom(x.dim(2), x.dim(3), k_, stride_);
    const int b = batch_of(x);
    if (out.shape != std::vector<int>{b, out_ch_, geom_.out_h, geom_.out_w})
      out.reshape_like({b, out_ch_, geom_.out_h, geom_.out_w});
    const int64_t in_sample = int64_t(in_ch_) * geom_.in_h * geom_.in_w;
    const int64_t out_plane = int64_t(geom_.out_h) * geom_.out_w;
    const int64_t wslice = int64_t(in_ch_) * k_ * k_;
    parallel_for(int64_t(b) * out_ch_, [&](int64_t idx) {
      int s = int(idx / out_ch_), o = int(idx % out_ch_);
      conv_fwd_oc(x.values.data() + s * in_sample, in_ch_, geom_, weight.values.data() + o * wslice,
                  bias.values[size_t(o)], out.values.data() + (s * out_ch_ + o) * out_plane);
    });
  }

  void backward() override {
    Tensor& x = src_->out;
    const int b = batch_of(x);
    const int64_t in_sample = int64_t(in_ch_) * geom_.in_h * geom_.in_w;
    const int64_t in_plane = int64_t(geom_.in_h) * geom_.in_w;
    const int64_t out_sample = int64_t(out_ch_) * geom_.out_h * geom_.out_w;
    const int64_t out_plane = int64_t(geom_.out_h) * geom_.out_w;
    const int64_t wslice = int64_t(in_ch_) * k_ * k_;
    // data gradient: disjoint per (sample, input channel)
    parallel_for(int64_t(b) * in_ch_, [&](int64_t idx) {
      int s = int(idx / in_ch_), i = int(idx % in_ch_);
      conv_bwd_data_ic(out.grad.data() + s * out_sample, out_ch_, geom_, weight.values.data(),
                       in_ch_, i, x.grad.data() + s * in_sample + i * in_plane);
    });
    // weight/bias gradients: disjoint per output channel, samples in order
    parallel_for(out_ch_, [&](int64_t o) {
      for (int s = 0; s < b; ++s) {
        const double* gyo = out.grad.data() + s * out_sample + o * out_plane;
        conv_bwd_w_oc(x.values.data() + s * in_sample, in_ch_, geom_, gyo,
                      weight.grad.data() + o * wslice);
        double acc = 0;
        for (int64_t j = 0; j < out_plane; ++j) acc += gyo[j];
        bias.grad[size_t(o)] += acc;
      }
    });
  }

  void collect_params(std::vector<Tensor*>& p) override {
    p.push_back(&weight);
    p.push_back(&bias);
  }

  Tensor weight;  // [oc, ic, k, k]
  Tensor bias;    // [oc]

 private:
  Node* src_;
  int in_ch_, out_ch_, k_, stride_;
  ConvGeom geom_;
};

/// Transposed convolution, the adjoint of a stride-s convolution mapping the
/// output side back up by the stride factor. The weight is stored in the
/// mirrored convolution's [in_ch, out_ch, k, k] layout so all three passes
/// reuse the plain convolution kernels with tensors swapped.
class TConvNode final : public Node {
 public:
  TConvNode(Node* src, int in_ch, int out_ch, int k, int stride, Rng& rng, std::string label)
      : src_(src), in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride) {
    name = std::move(label);
    weight = Tensor::zeros({in_ch, out_ch, k, k});
    bias = Tensor::zeros({out_ch});
    double a = std::sqrt(double(stride * stride) / double(in_ch * k * k));
    for (auto& v : weight.values) v = rng.uniform(-a, a);
  }

  void forward() override {
    const Tensor& x = src_->out;
    if (x.dim(1) != in_ch_)
      throw std::invalid_argument(name + ": expected " + std::to_string(in_ch_) +
                                  " input channels, got " + x.shape_str());
    const int b = batch_of(x);
    const int out_h = x.dim(2) * stride_, out_w = x.dim(3) * stride_;
    geom_ = same_geom(out_h, out_w, k_, stride_);  // mirrored conv: out_h -> x.h
    if (out.shape != std::vector<int>{b, out_ch_, out_h, out_w})
      out.reshape_like({b, out_ch_, out_h, out_w});
    const int64_t in_sample = int64_t(in_ch_) * x.dim(2) * x.dim(3);
    const int64_t out_sample = int64_t(out_ch_) * out_h * out_w;
    const int64_t out_plane = int64_t(out_h) * out_w;
    parallel_for(int64_t(b) * out_ch_, [&](int64_t idx) {
      int s = int(idx / out_ch_), o = int(idx % out_ch_);
      double* yo = out.values.data() + s * out_sample + o * out_plane;
      std::fill(yo, yo + out_plane, bias.values[size_t(o)]);
      conv_bwd_data_ic(x.values.data() + s * in_sample, in_ch_, geom_, weight.values.data(),
                       out_ch_, o, yo);
    });
  }

  void backward() override {
    Tensor& x = src_->out;
    const int b = batch_of(x);
    const int64_t in_sample = int64_t(in_ch_) * x.dim(2) * x.dim(3);
    const int64_t in_plane = int64_t(x.dim(2)) * x.dim(3);
    const int64_t out_sample = out.size() / b;
    const int64_t out_plane = int64_t(out.dim(2)) * out.dim(3);
    const int64_t wslice = int64_t(out_ch_) * k_ * k_;
    parallel_for(int64_t(b) * in_ch_, [&](int64_t idx) {
      int s = int(idx / in_ch_), i = int(idx % in_ch_);
      conv_fwd_oc(out.grad.data() + s * out_sample, out_ch_, geom_,
                  weight.values.data() + i * wslice, 0.0,
                  x.grad.data() + s * in_sample + i * in_plane, /*accumulate=*/true);
    });
    parallel_for(in_ch_, [&](int64_t i) {
      for (int s = 0; s < b; ++s)
        conv_bwd_w_oc(out.grad.data() + s * out_sample, out_ch_, geom_,
                      x.values.data() + s * in_sample + i * in_plane,
                      weight.grad.data() + i * wslice);
    });
    parallel_for(out_ch_, [&](int64_t o) {
      double acc = 0;
      for (int s = 0; s < b; ++s) {
        const double* gyo = out.grad.data() + s * out_sample + o * out_plane;
        for (int64_t j = 0; j < out_plane; ++j) acc += gyo[j];
      }
      bias.grad[size_t(o)] += acc;
    });
  }

  void collect_params(std::vector<Tensor*>& p) override {
    p.push_back(&weight);
    p.push_back(&bias);
  }

  Tensor weight;  // [ic, oc, k, k]
  Tensor bias;    // [oc]

 private:
  Node* src_;
  int in_ch_, out_ch_, k_, stride_;
  ConvGeom geom_;
};

class LeakyReluNode final : public Node {
 public:
  LeakyReluNode(Node* src, double slope = 0.01) : src_(src), slope_(slope) { name = "lrelu"; }

  void forward() override {
    const Tensor& x = src_->out;
    if (out.shape != x.shape) out.reshape_like(x.shape);
    for (size_t i = 0; i < x.values.size(); ++i) {
      double v = x.values[i];
      out.values[i] = v >= 0 ? v : slope_ * v;
    }
  }

  void backward() override {
    Tensor& x = src_->out;
    for (size_t i = 0; i < x.values.size(); ++i)
      x.grad[i] += out.grad[i] * (x.values[i] >= 0 ? 1.0 : slope_);
  }

 private:
  Node* src_;
  double slope_;
};

class AddNode final : public Node {
 public:
  AddNode(Node* a, Node* b) : a_(a), b_(b) { name = "add"; }

  void forward() override {
    const Tensor& a = a_->out;
    const Tensor& b = b_->out;
    if (a.shape != b.shape)
      throw std::invalid_argument("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    if (out.shape != a.shape) out.reshape_like(a.shape);
    for (size_t i = 0; i < a.values.size(); ++i) out.values[i] = a.values[i] + b.values[i];
  }

  void backward() override {
    for (size_t i = 0; i < out.grad.size(); ++i) {
      a_->out.grad[i] += out.grad[i];
      b_->out.grad[i] += out.grad[i];
    }
  }

 private:
  Node* a_;
  Node* b_;
};

class ConcatNode final : public Node {
 public:
  ConcatNode(Node* a, Node* b) : a_(a), b_(b) { name = "concat"; }

  void forward() override {
    const Tensor& a = a_->out;
    const Tensor& b = b_->out;
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
      throw std::invalid_argument("concat: spatial/batch mismatch " + a.shape_str() + " vs " +
                                  b.shape_str());
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    if (out.shape != std::vector<int>{n, ca + cb, h, w}) out.reshape_like({n, ca + cb, h, w});
    const int64_t plane = int64_t(h) * w;
    for (int s = 0; s < n; ++s) {
      std::copy_n(a.values.data() + s * ca * plane, ca * plane,
                  out.values.data() + s * (ca + cb) * plane);
      std::copy_n(b.values.data() + s * cb * plane, cb * plane,
                  out.values.data() + (s * (ca + cb) + ca) * plane);
    }
  }

  void backward() override {
    Tensor& a = a_->out;
    Tensor& b = b_->out;
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    const int64_t plane = int64_t(a.dim(2)) * a.dim(3);
    for (int s = 0; s < n; ++s) {
      const double* g = out.grad.data() + s * (ca + cb) * plane;
      double* ga = a.grad.data() + s * ca * plane;
      double* gb = b.grad.data() + s * cb * plane;
      for (int64_t i = 0; i < ca * plane; ++i) ga[i] += g[i];
      for (int64_t i = 0; i < cb * plane; ++i) gb[i] += g[ca * plane + i];
    }
  }

 private:
  Node* a_;
  Node* b_;
};

}  // namespace nn

// ---------------------------------------------------------------------------
// NPCC loss

namespace detail {

struct PearsonStats {
  double r = 0, se = 0, st = 0, mean_a = 0, mean_b = 0;
};

inline PearsonStats pearson_stats(const double* a, const double* b, int64_t n) {
  PearsonStats s;
  for (int64_t i = 0; i < n; ++i) {
    s.mean_a += a[i];
    s.mean_b += b[i];
  }
  s.mean_a /= double(n);
  s.mean_b /= double(n);
  double sab = 0, saa = 0, sbb = 0;
  for (int64_t i = 0; i < n; ++i) {
    double da = a[i] - s.mean_a, db = b[i] - s.mean_b;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  s.se = std::sqrt(saa);
  s.st = std::sqrt(sbb);
  if (s.se <= 0 || s.st <= 0)
    throw std::domain_error("pearson: constant input (zero centered norm)");
  s.r = sab / (s.se * s.st);
  return s;
}

}  // namespace detail

/// Pearson correlation coefficient over all elements. Throws on constant input.
inline double pearson(const double* a, const double* b, int64_t n) {
  return detail::pearson_stats(a, b, n).r;
}

/// Negative Pearson correlation loss: mean over batch samples of the
/// per-sample NPCC across all pixels. -1 iff every estimate is a positive
/// affine image of its target.
inline double npcc_loss(const Tensor& est, const Tensor& truth) {
  if (!est.same_shape(truth))
    throw std::invalid_argument("npcc_loss: shape mismatch " + est.shape_str() + " vs " +
                                truth.shape_str());
  const int b = est.dim(0);
  const int64_t per = est.size() / b;
  double acc = 0;
  for (int s = 0; s < b; ++s)
    acc -= pearson(est.values.data() + s * per, truth.values.data() + s * per, per);
  return acc / double(b);
}

/// Analytic gradient of npcc_loss with respect to the estimate.
inline Tensor npcc_loss_grad(const Tensor& est, const Tensor& truth) {
  if (!est.same_shape(truth)) throw std::invalid_argument("npcc_loss_grad: shape mismatch");
  const int b = est.dim(0);
  const int64_t per = est.size() / b;
  Tensor g = Tensor::zeros(est.shape);
  for (int s = 0; s < b; ++s) {
    const double* e = est.values.data() + s * per;
    const double* t = truth.values.data() + s * per;
    auto st = detail::pearson_stats(e, t, per);
    double* gs = g.values.data() + s * per;
    // d(-r)/de_j, already orthogonal to the constant direction
    for (int64_t j = 0; j < per; ++j) {
      double de = e[j] - st.mean_a, dt = t[j] - st.mean_b;
      gs[j] = -(dt / (st.se * st.st) - st.r * de / (st.se * st.se)) / double(b);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Network

class Network {
 public:
  Network(const NetworkConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0xC0FFEEULL));
    build(rng);
  }

  const NetworkConfig& config() const { return cfg_; }

  /// Runs the graph on a [b, 1, n, n] batch and returns the [b, 1, n, n] output.
  const Tensor& forward(const Tensor& batch) {
    if (batch.shape.size() != 4 || batch.dim(1) != 1 || batch.dim(2) != cfg_.input_side ||
        batch.dim(3) != cfg_.input_side)
      throw std::invalid_argument("Network::forward: expected [b,1," +
                                  std::to_string(cfg_.input_side) + "," +
                                  std::to_string(cfg_.input_side) + "], got " + batch.shape_str());
    input_->out = batch;
    for (auto& n : nodes_) n->forward();
    forward_done_ = true;
    return output_->out;
  }

  /// Reverse pass from dL/d(output); fills the grad buffers of every
  /// parameter and of the input tensor.
  void backward(const Tensor& grad_out) {
    if (!forward_done_) throw std::logic_error("Network::backward called before forward");
    if (grad_out.shape != output_->out.shape)
      throw std::invalid_argument("Network::backward: gradient shape mismatch");
    for (auto& n : nodes_) n->out.zero_grad();
    for (auto* p : params_) p->zero_grad();
    output_->out.grad = grad_out.values;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)->backward();
  }

  std::vector<Tensor*>& parameters() { return params_; }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto* p : params_) n += p->size();
    return n;
  }

  /// Sign pattern of every leaky-rectifier output after the last forward.
  /// Finite-difference probes use this to detect kink crossings, where a
  /// central difference stops being a valid derivative estimate.
  std::vector<uint8_t> kink_signature() const {
    std::vector<uint8_t> sig;
    for (const auto& n : nodes_)
      if (dynamic_cast<const nn::LeakyReluNode*>(n.get()))
        for (double v : n->out.values) sig.push_back(v >= 0 ? 1 : 0);
    return sig;
  }

  void save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    binio::put_magic(out, "WPNN");
    binio::put_u32(out, 1);
    for (int v : {cfg_.n_down_blocks, cfg_.n_up_blocks, cfg_.n_res_blocks, cfg_.base_channels,
                  cfg_.input_side, cfg_.main_kernel, cfg_.up_side_kernel, cfg_.res_side_kernel})
      binio::put_i32(out, v);
    binio::put_u32(out, uint32_t(params_.size()));
    for (const auto* p : params_) {
      binio::put_u32(out, uint32_t(p->shape.size()));
      for (int d : p->shape) binio::put_u32(out, uint32_t(d));
      for (double v : p->values) binio::put_f64(out, v);
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
  }

  static Network load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    binio::expect_magic(in, "WPNN", "checkpoint");
    uint32_t version = binio::get_u32(in);
    if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
    NetworkConfig cfg;
    cfg.n_down_blocks = binio::get_i32(in);
    cfg.n_up_blocks = binio::get_i32(in);
    cfg.n_res_blocks = binio::get_i32(in);
    cfg.base_channels = binio::get_i32(in);
    cfg.input_side = binio::get_i32(in);
    cfg.main_kernel = binio::get_i32(in);
    cfg.up_side_kernel = binio::get_i32(in);
    cfg.res_side_kernel = binio::get_i32(in);
    Network net(cfg, 0);
    uint32_t n_params = binio::get_u32(in);
    if (n_params != net.params_.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
    for (auto* p : net.params_) {
      uint32_t ndim = binio::get_u32(in);
      std::vector<int> shape(ndim);
      for (auto& d : shape) d = int(binio::get_u32(in));
      if (shape != p->shape) throw std::runtime_error("checkpoint: parameter shape mismatch");
      for (auto& v : p->values) v = binio::get_f64(in);
    }
    return net;
  }

 private:
  template <class T, class... Args>
  T* add(Args&&... args) {
    nodes_.push_back(std::make_unique<T>(std::forward<Args>(args)...));
    T* n = static_cast<T*>(nodes_.back().get());
    n->collect_params(params_);
    return n;
  }

  nn::Node* down_block(nn::Node* src, int cin, int cout, Rng& rng, const std::string& tag) {
    auto* m1 = add<nn::ConvNode>(src, cin, cout, cfg_.main_kernel, 2, rng, tag + ".down");
    auto* a1 = add<nn::LeakyReluNode>(m1);
    auto* m2 = add<nn::ConvNode>(a1, cout, cout, cfg_.main_kernel, 1, rng, tag + ".conv");
    auto* side = add<nn::ConvNode>(src, cin, cout, cfg_.main_kernel, 2, rng, tag + ".side");
    auto* sum = add<nn::AddNode>(m2, side);
    return add<nn::LeakyReluNode>(sum);
  }

  nn::Node* up_block(nn::Node* src, int cin, int cout, Rng& rng, const std::string& tag) {
    auto* m1 = add<nn::TConvNode>(src, cin, cout, cfg_.main_kernel, 2, rng, tag + ".up");
    auto* a1 = add<nn::LeakyReluNode>(m1);
    auto* m2 = add<nn::ConvNode>(a1, cout, cout, cfg_.main_kernel, 1, rng, tag + ".conv");
    auto* side = add<nn::TConvNode>(src, cin, cout, cfg_.up_side_kernel, 2, rng, tag + ".side");
    auto* sum = add<nn::AddNode>(m2, side);
    return add<nn::LeakyReluNode>(sum);
  }

  nn::Node* res_block(nn::Node* src, int ch, Rng& rng, const std::string& tag) {
    auto* m1 = add<nn::ConvNode>(src, ch, ch, cfg_.main_kernel, 1, rng, tag + ".conv1");
    auto* a1 = add<nn::LeakyReluNode>(m1);
    auto* m2 = add<nn::ConvNode>(a1, ch, ch, cfg_.main_kernel, 1, rng, tag + ".conv2");
    auto* side = add<nn::ConvNode>(src, ch, ch, cfg_.res_side_kernel, 1, rng, tag + ".side");
    auto* sum = add<nn::AddNode>(m2, side);
    return add<nn::LeakyReluNode>(sum);
  }

  void build(Rng& rng) {
    input_ = add<nn::InputNode>();
    nn::Node* cur = input_;
    std::vector<nn::Node*> enc(size_t(cfg_.n_down_blocks) + 1, nullptr);
    int ch = 1;
    for (int d = 1; d <= cfg_.n_down_blocks; ++d) {
      int cout = cfg_.base_channels << (d - 1);
      cur = down_block(cur, ch, cout, rng, "drb" + std::to_string(d));
      enc[size_t(d)] = cur;
      ch = cout;
    }
    for (int j = 1; j <= cfg_.n_up_blocks; ++j) {
      int target = cfg_.n_down_blocks - j;  // scale after this block
      int cout = target >= 1 ? (cfg_.base_channels << (target - 1)) : cfg_.base_channels;
      cur = up_block(cur, ch, cout, rng, "urb" + std::to_string(j));
      if (target >= 1) {
        cur = add<nn::ConcatNode>(cur, enc[size_t(target)]);
        ch = cout + (cfg_.base_channels << (target - 1));
      } else {
        ch = cout;
      }
    }
    for (int r = 1; r <= cfg_.n_res_blocks; ++r)
      cur = res_block(cur, ch, rng, "rb" + std::to_string(r));
    output_ = add<nn::ConvNode>(cur, ch, 1, cfg_.main_kernel, 1, rng, "head");
  }

  NetworkConfig cfg_;
  std::vector<std::unique_ptr<nn::Node>> nodes_;
  std::vector<Tensor*> params_;
  nn::InputNode* input_ = nullptr;
  nn::Node* output_ = nullptr;
  bool forward_done_ = false;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<std::vector<double>> m, v;
  int64_t step = 0;
};

/// Standard Adam update with bias correction, reading gradients from the
/// parameters' grad buffers. Deterministic elementwise update.
inline void adam_step(std::vector<Tensor*>& params, AdamState& state, const TrainConfig& cfg) {
  cfg.validate();
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->values.size(), 0.0);
      state.v.emplace_back(p->values.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state size mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    if (p.grad.size() != p.values.size())
      throw std::invalid_argument("adam_step: gradient/parameter shape mismatch");
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    if (m.size() != p.values.size()) throw std::invalid_argument("adam_step: state shape mismatch");
    for (size_t i = 0; i < p.values.size(); ++i) {
      double g = p.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      p.values[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Training pipeline

struct TrainResult {
  std::vector<double> epoch_loss;  // mean training NPCC per epoch
};

/// Networks consume the zero-mean intensity contrast g - 1 rather than the
/// raw measurement; training and inference share this convention.
inline Tensor measurement_batch(const std::vector<const RealGrid*>& measurements) {
  if (measurements.empty()) throw std::invalid_argument("measurement_batch: empty batch");
  const int h = measurements[0]->rows(), w = measurements[0]->cols();
  Tensor t = Tensor::zeros({int(measurements.size()), 1, h, w});
  const int64_t plane = int64_t(h) * w;
  for (size_t s = 0; s < measurements.size(); ++s) {
    if (measurements[s]->rows() != h || measurements[s]->cols() != w)
      throw std::invalid_argument("measurement_batch: mixed grid sizes");
    for (int64_t i = 0; i < plane; ++i)
      t.values[size_t(int64_t(s) * plane + i)] = measurements[s]->data()[i] - 1.0;
  }
  return t;
}

/// Builds (measurement, phase) pairs from the manifest's training split via
/// the nonlinear forward model and runs Adam on the NPCC loss. Fully
/// deterministic for a given TrainConfig::seed. When checkpoint_path is
/// non-empty the network is persisted after every epoch.
inline TrainResult train_network(Network& net, const DatasetManifest& data,
                                 const OpticalConfig& optics, const TrainConfig& tcfg,
                                 const std::string& checkpoint_path = "") {
  tcfg.validate();
  optics.validate();
  const int side = net.config().input_side;
  if (optics.grid_n != side)
    throw std::invalid_argument("train_network: optics grid_n does not match network input side");
  if (data.descriptor.grid_n != side)
    throw std::invalid_argument("train_network: dataset grid does not match network input side");
  auto entries = data.split_entries(Split::train);
  if (entries.empty()) throw std::invalid_argument("train_network: empty training split");

  const int64_t plane = int64_t(side) * side;
  std::vector<std::vector<double>> inputs, targets;
  inputs.reserve(entries.size());
  targets.reserve(entries.size());
  for (const auto* e : entries) {
    PhaseMap phase = calibrate_to_phase(materialize(data, *e));
    IntensityMap g = propagate(phase, optics);
    inputs.emplace_back(g.values.data(), g.values.data() + plane);
    for (auto& v : inputs.back()) v -= 1.0;  // network consumes the contrast g - 1
    targets.emplace_back(phase.values.data(), phase.values.data() + plane);
  }

  Rng shuffle_rng(derive_seed(tcfg.seed, 0x7261696eULL));
  std::vector<int> order(entries.size());
  std::iota(order.begin(), order.end(), 0);

  AdamState adam;
  TrainResult result;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    double epoch_acc = 0;
    int64_t seen = 0;
    for (size_t start = 0; start < order.size(); start += size_t(tcfg.batch_size)) {
      const int b = int(std::min(order.size() - start, size_t(tcfg.batch_size)));
      Tensor batch = Tensor::zeros({b, 1, side, side});
      Tensor truth = Tensor::zeros({b, 1, side, side});
      for (int s = 0; s < b; ++s) {
        int idx = order[start + s];
        std::copy_n(inputs[size_t(idx)].data(), plane, batch.values.data() + s * plane);
        std::copy_n(targets[size_t(idx)].data(), plane, truth.values.data() + s * plane);
      }
      const Tensor& est = net.forward(batch);
      double loss = npcc_loss(est, truth);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_network: non-finite loss at epoch " +
                                 std::to_string(epoch + 1) + ", batch offset " +
                                 std::to_string(start));
      net.backward(npcc_loss_grad(est, truth));
      adam_step(net.parameters(), adam, tcfg);
      epoch_acc += loss * b;
      seen += b;
    }
    result.epoch_loss.push_back(epoch_acc / double(seen));
    if (!checkpoint_path.empty()) net.save_checkpoint(checkpoint_path);
  }
  return result;
}

}  // namespace wotf
