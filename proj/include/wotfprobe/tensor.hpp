#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wotf {

/// n-dimensional real array with an attached gradient buffer of the same
/// shape. Values are doubles throughout: the gradient-correctness contract
/// (finite differences to 1e-4 relative) needs the headroom.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;

  Tensor() = default;

  static Tensor zeros(std::vector<int> s) {
    Tensor t;
    t.shape = std::move(s);
    t.values.assign(size_t(count(t.shape)), 0.0);
    return t;
  }

  static int64_t count(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
      n *= d;
    }
    return n;
  }

  int64_t size() const { return int64_t(values.size()); }

  int dim(size_t i) const { return shape.at(i); }

  void reshape_like(const std::vector<int>& s) {
    shape = s;
    values.assign(size_t(count(s)), 0.0);
  }

  void zero_grad() { grad.assign(values.size(), 0.0); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
  }
};

}  // namespace wotf
