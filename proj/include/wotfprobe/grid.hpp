#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace wotf {

/// Dense row-major 2-D array. The workhorse container for images,
/// phase/intensity maps and frequency-domain grids.
template <class T>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("Grid2D: non-positive dimensions");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
  const T* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

  bool same_shape(const Grid2D& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool operator==(const Grid2D& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using RealGrid = Grid2D<double>;
using ComplexGrid = Grid2D<std::complex<double>>;
using ByteGrid = Grid2D<uint8_t>;

inline double grid_min(const RealGrid& g) {
  double m = g.data()[0];
  for (double v : g) m = std::min(m, v);
  return m;
}

inline double grid_max(const RealGrid& g) {
  double m = g.data()[0];
  for (double v : g) m = std::max(m, v);
  return m;
}

inline double grid_sum(const RealGrid& g) {
  double s = 0;
  for (double v : g) s += v;
  return s;
}

inline double grid_mean(const RealGrid& g) { return grid_sum(g) / double(g.size()); }

inline double max_abs(const RealGrid& g) {
  double m = 0;
  for (double v : g) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(const RealGrid& g) {
  for (double v : g)
    if (!std::isfinite(v)) return false;
  return true;
}

/// Relative L2 distance ||a-b|| / ||b||.
inline double rel_l2(const RealGrid& a, const RealGrid& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("rel_l2: shape mismatch");
  double num = 0, den = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a.data()[i] - b.data()[i];
    num += d * d;
    den += b.data()[i] * b.data()[i];
  }
  return std::sqrt(num) / std::sqrt(den);
}

/// Cyclic shift moving the DC sample between transform-native layout
/// (DC at [0,0]) and display layout (DC at [n/2, n/2]). For even
/// dimensions the shift is its own inverse.
template <class T>
Grid2D<T> fftshift(const Grid2D<T>& g) {
  Grid2D<T> out(g.rows(), g.cols());
  int hr = g.rows() / 2, hc = g.cols() / 2;
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c) out((r + hr) % g.rows(), (c + hc) % g.cols()) = g(r, c);
  return out;
}

}  // namespace wotf
