#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "wotfprobe/binio.hpp"
#include "wotfprobe/datasets.hpp"
#include "wotfprobe/grid.hpp"

namespace wotf {

/// FNV-1a 64-bit content hash, used for the produced-files manifest.
inline uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write-temp-then-rename so partially written outputs are never observed.
inline void atomic_write_file(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

// Grid container: magic "WPGD", 4-byte dtype tag "f64 ", u32 rows, u32 cols,
// row-major float64 payload; everything little-endian.

inline std::string grid_to_bytes(const RealGrid& g) {
  std::ostringstream out(std::ios::binary);
  binio::put_magic(out, "WPGD");
  out.write("f64 ", 4);
  binio::put_u32(out, uint32_t(g.rows()));
  binio::put_u32(out, uint32_t(g.cols()));
  for (double v : g) binio::put_f64(out, v);
  return out.str();
}

inline void write_grid(const RealGrid& g, const std::string& path) {
  atomic_write_file(path, grid_to_bytes(g));
}

inline RealGrid read_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  binio::expect_magic(in, "WPGD", "grid file");
  char dtype[4];
  in.read(dtype, 4);
  if (!in || std::string(dtype, 4) != "f64 ")
    throw std::runtime_error("grid file: unsupported dtype in " + path);
  uint32_t rows = binio::get_u32(in);
  uint32_t cols = binio::get_u32(in);
  if (rows == 0 || cols == 0 || rows > 1u << 20 || cols > 1u << 20)
    throw std::runtime_error("grid file: implausible dimensions in " + path);
  RealGrid g{int(rows), int(cols)};
  for (auto& v : g) v = binio::get_f64(in);
  return g;
}

/// Lossy min-max scaled 8-bit preview alongside the binary grid, for eyeballing.
inline void save_preview_pgm(const RealGrid& g, const std::string& path) {
  double lo = grid_min(g), hi = grid_max(g);
  double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  Image8 img{ByteGrid(g.rows(), g.cols())};
  for (size_t i = 0; i < g.size(); ++i)
    img.pixels.data()[i] = uint8_t(std::lround((g.data()[i] - lo) * scale));
  save_pgm(img, path);
}

}  // namespace wotf
