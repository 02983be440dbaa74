#pragma once

#include <fftw3.h>

#include <complex>
#include <cstring>
#include <map>
#include <mutex>
#include <tuple>

#include "wotfprobe/grid.hpp"

namespace wotf::fft {

namespace detail {

// Plans are cached per (rows, cols, sign). Creation is serialized (FFTW plan
// construction is not thread-safe); execution through fftw_execute_dft on
// private buffers is.
inline fftw_plan plan_for(int rows, int cols, int sign) {
  static std::mutex m;
  static std::map<std::tuple<int, int, int>, fftw_plan> cache;
  std::lock_guard<std::mutex> lk(m);
  auto key = std::make_tuple(rows, cols, sign);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  fftw_complex* buf = fftw_alloc_complex(size_t(rows) * cols);
  fftw_plan p = fftw_plan_dft_2d(rows, cols, buf, buf, sign, FFTW_ESTIMATE);
  fftw_free(buf);
  cache.emplace(key, p);
  return p;
}

inline ComplexGrid execute(const ComplexGrid& in, int sign, bool normalize) {
  const int rows = in.rows(), cols = in.cols();
  fftw_plan p = plan_for(rows, cols, sign);
  fftw_complex* a = fftw_alloc_complex(in.size());
  fftw_complex* b = fftw_alloc_complex(in.size());
  std::memcpy(a, in.data(), in.size() * sizeof(fftw_complex));
  fftw_execute_dft(p, a, b);
  ComplexGrid out(rows, cols);
  std::memcpy(out.data(), b, in.size() * sizeof(fftw_complex));
  fftw_free(a);
  fftw_free(b);
  if (normalize) {
    double inv = 1.0 / double(in.size());
    for (auto& v : out) v *= inv;
  }
  return out;
}

}  // namespace detail

/// Unnormalized forward DFT, transform-native layout (DC at [0,0]).
inline ComplexGrid forward(const ComplexGrid& in) {
  return detail::execute(in, FFTW_FORWARD, false);
}

inline ComplexGrid forward(const RealGrid& in) {
  ComplexGrid c(in.rows(), in.cols());
  for (size_t i = 0; i < in.size(); ++i) c.data()[i] = in.data()[i];
  return forward(c);
}

/// Inverse DFT normalized by 1/(rows*cols), so inverse(forward(x)) == x.
inline ComplexGrid inverse(const ComplexGrid& in) {
  return detail::execute(in, FFTW_BACKWARD, true);
}

inline RealGrid real_part(const ComplexGrid& g) {
  RealGrid out(g.rows(), g.cols());
  for (size_t i = 0; i < g.size(); ++i) out.data()[i] = g.data()[i].real();
  return out;
}

/// Frequency of native-layout bin k on an axis of n samples with step du.
inline double native_freq(int k, int n, double du) {
  return du * (k < n / 2 ? k : k - n);
}

}  // namespace wotf::fft
