#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wotfprobe/fft.hpp"
#include "wotfprobe/grid.hpp"
#include "wotfprobe/optics.hpp"
#include "wotfprobe/rng.hpp"

namespace wotf {

/// 8-bit grayscale image on the alphabet {0,...,255}.
struct Image8 {
  ByteGrid pixels;
};

/// Shannon entropy in bits of the empirical pixel-value distribution,
/// one histogram bin per alphabet symbol. Always in [0, 8].
inline double image_entropy(const Image8& img) {
  if (img.pixels.empty()) throw std::invalid_argument("image_entropy: empty image");
  size_t counts[256] = {};
  for (uint8_t v : img.pixels) ++counts[v];
  const double n = double(img.pixels.size());
  double h = 0;
  for (size_t c : counts) {
    if (c == 0) continue;
    double p = double(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

enum class Split { train, validation, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    default: return "test";
  }
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split name: " + s);
}

struct DatasetEntry {
  std::string id;
  uint64_t sub_seed = 0;  // generated entries
  std::string path;       // file-backed entries; empty for generated ones
  Split split = Split::train;
};

struct GeneratorDescriptor {
  std::string type;  // "texture", "glyph" or "pgm"
  int grid_n = 32;
  int count = 0;
};

/// Ordered image collection with split assignments. Generated datasets hold
/// no pixel data: entries regenerate byte-identically from (descriptor, seed).
struct DatasetManifest {
  int version = 1;
  GeneratorDescriptor descriptor;
  uint64_t seed = 0;
  std::vector<DatasetEntry> entries;

  std::vector<const DatasetEntry*> split_entries(Split s) const {
    std::vector<const DatasetEntry*> out;
    for (const auto& e : entries)
      if (e.split == s) out.push_back(&e);
    return out;
  }
};

// ---------------------------------------------------------------------------
// PGM (P5, maxval 255)

namespace detail {

inline int pgm_read_token(std::istream& in) {
  // skips whitespace and '#' comments
  int c = in.get();
  for (;;) {
    while (c != EOF && std::isspace(c)) c = in.get();
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
      continue;
    }
    break;
  }
  if (c == EOF) throw std::runtime_error("PGM: truncated header");
  std::string tok;
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(char(c));
    c = in.get();
  }
  try {
    return std::stoi(tok);
  } catch (...) {
    throw std::runtime_error("PGM: malformed header token '" + tok + "'");
  }
}

}  // namespace detail

inline Image8 load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("PGM: cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0).get(m1);
  if (m0 != 'P' || m1 != '5')
    throw std::runtime_error("PGM: " + path + " is not binary P5");
  int w = detail::pgm_read_token(in);
  int h = detail::pgm_read_token(in);
  int maxval = detail::pgm_read_token(in);
  if (w <= 0 || h <= 0) throw std::runtime_error("PGM: bad dimensions in " + path);
  if (maxval != 255)
    throw std::runtime_error("PGM: " + path + " has maxval " + std::to_string(maxval) +
                             ", only 255 supported");
  Image8 img{ByteGrid(h, w)};
  in.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
  if (in.gcount() != std::streamsize(img.pixels.size()))
    throw std::runtime_error("PGM: truncated payload in " + path);
  return img;
}

inline void save_pgm(const Image8& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("PGM: cannot write " + path);
  out << "P5\n" << img.pixels.cols() << " " << img.pixels.rows() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
  if (!out) throw std::runtime_error("PGM: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Generators

namespace detail {

/// Band-limited random field: white Gaussian noise low-passed with a radial
/// Gaussian of per-image cutoff, min-max stretched to the full 8-bit range.
inline Image8 render_texture(uint64_t sub_seed, int grid_n) {
  Rng rng(sub_seed);
  const int n = grid_n;
  // cutoff in cycles/pixel; the range keeps images smooth but value-rich
  double cutoff = rng.uniform(0.10, 0.35);
  ComplexGrid noise(n, n);
  for (auto& v : noise) v = std::complex<double>(rng.gaussian(), 0.0);
  ComplexGrid spec = fft::forward(noise);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double fu = fft::native_freq(c, n, 1.0 / n);  // cycles/pixel
      double fv = fft::native_freq(r, n, 1.0 / n);
      double rho2 = fu * fu + fv * fv;
      spec(r, c) *= std::exp(-rho2 / (2.0 * cutoff * cutoff));
    }
  RealGrid field = fft::real_part(fft::inverse(spec));
  double lo = grid_min(field), hi = grid_max(field);
  double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  Image8 img{ByteGrid(n, n)};
  for (size_t i = 0; i < field.size(); ++i)
    img.pixels.data()[i] = uint8_t(std::lround((field.data()[i] - lo) * scale));
  return img;
}

/// Near-binary glyph: 1-3 thick strokes on a black background, rendered from
/// capsule distance fields with the edge ramp quantized to two intermediate
/// levels so the value histogram stays close to binary.
inline Image8 render_glyph(uint64_t sub_seed, int grid_n) {
  Rng rng(sub_seed);
  const int n = grid_n;
  const double s = n / 32.0;  // stroke geometry scales with the grid

  struct Capsule {
    double x0, y0, x1, y1, radius;
  };
  std::vector<Capsule> caps;
  int n_strokes = rng.uniform_int(1, 3);
  for (int k = 0; k < n_strokes; ++k) {
    int n_seg = rng.uniform_int(2, 4);
    double x = rng.uniform(0.2 * n, 0.8 * n);
    double y = rng.uniform(0.2 * n, 0.8 * n);
    double ang = rng.uniform(0, 2 * kPi);
    double radius = rng.uniform(1.2, 2.0) * s;
    for (int j = 0; j < n_seg; ++j) {
      double len = rng.uniform(4.0, 9.0) * s;
      double x1 = std::clamp(x + len * std::cos(ang), 1.0, n - 2.0);
      double y1 = std::clamp(y + len * std::sin(ang), 1.0, n - 2.0);
      caps.push_back({x, y, x1, y1, radius});
      x = x1;
      y = y1;
      ang += rng.uniform(-0.9, 0.9);
    }
  }

  auto capsule_dist = [](const Capsule& c, double px, double py) {
    double dx = c.x1 - c.x0, dy = c.y1 - c.y0;
    double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? std::clamp(((px - c.x0) * dx + (py - c.y0) * dy) / len2, 0.0, 1.0) : 0.0;
    double ex = px - (c.x0 + t * dx), ey = py - (c.y0 + t * dy);
    return std::sqrt(ex * ex + ey * ey) - c.radius;
  };

  Image8 img{ByteGrid(n, n, 0)};
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double d = 1e9;
      for (const auto& cap : caps) d = std::min(d, capsule_dist(cap, c, r));
      double coverage = std::clamp(0.5 - d / 3.0, 0.0, 1.0);  // 3 px soft edge
      int level = int(std::lround(coverage * 3.0));           // 4 levels: 0, 85, 170, 255
      img.pixels(r, c) = uint8_t(level * 85);
    }
  return img;
}

inline DatasetManifest make_generated_manifest(const std::string& type, uint64_t seed, int count,
                                               int grid_n) {
  if (count < 1) throw std::invalid_argument("dataset generator: count must be >= 1");
  if (grid_n < 8) throw std::invalid_argument("dataset generator: grid_n must be >= 8");
  DatasetManifest m;
  m.descriptor = {type, grid_n, count};
  m.seed = seed;
  // 80/10/10 split by index; images are i.i.d. by construction
  int n_train = int(std::lround(count * 0.8));
  int n_val = int(std::lround(count * 0.1));
  for (int i = 0; i < count; ++i) {
    DatasetEntry e;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%06d", type.c_str(), i);
    e.id = buf;
    e.sub_seed = derive_seed(seed, uint64_t(i));
    e.split = i < n_train ? Split::train : (i < n_train + n_val ? Split::validation : Split::test);
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace detail

/// High-entropy stand-in for a generic natural-image corpus.
inline DatasetManifest gen_texture_dataset(uint64_t seed, int count, int grid_n) {
  return detail::make_generated_manifest("texture", seed, count, grid_n);
}

/// Low-entropy stand-in for a sparse glyph corpus.
inline DatasetManifest gen_glyph_dataset(uint64_t seed, int count, int grid_n) {
  return detail::make_generated_manifest("glyph", seed, count, grid_n);
}

/// Produces the pixels of one manifest entry, regenerating or loading.
inline Image8 materialize(const DatasetManifest& m, const DatasetEntry& e) {
  if (m.descriptor.type == "texture") return detail::render_texture(e.sub_seed, m.descriptor.grid_n);
  if (m.descriptor.type == "glyph") return detail::render_glyph(e.sub_seed, m.descriptor.grid_n);
  if (m.descriptor.type == "pgm") return load_pgm(e.path);
  throw std::runtime_error("materialize: unknown descriptor type '" + m.descriptor.type + "'");
}

// ---------------------------------------------------------------------------
// Entropy report

struct EntropyReport {
  std::vector<double> per_image_bits;
  std::vector<int> histogram;  // n_bins over [0, 8]
  double mean = 0;
  double std_dev = 0;
};

inline EntropyReport entropy_report(const DatasetManifest& m, int n_bins = 1000) {
  if (m.entries.empty()) throw std::invalid_argument("entropy_report: empty manifest");
  if (n_bins < 1) throw std::invalid_argument("entropy_report: n_bins must be >= 1");
  EntropyReport rep;
  rep.histogram.assign(size_t(n_bins), 0);
  for (const auto& e : m.entries) {
    double h = image_entropy(materialize(m, e));
    rep.per_image_bits.push_back(h);
    int bin = std::min(int(h / 8.0 * n_bins), n_bins - 1);
    ++rep.histogram[size_t(bin)];
  }
  double n = double(rep.per_image_bits.size());
  for (double h : rep.per_image_bits) rep.mean += h;
  rep.mean /= n;
  for (double h : rep.per_image_bits) rep.std_dev += (h - rep.mean) * (h - rep.mean);
  rep.std_dev = std::sqrt(rep.std_dev / n);
  return rep;
}

// ---------------------------------------------------------------------------
// Grayscale-to-phase calibration

/// Linear one-to-one calibration from the 8-bit alphabet to [0, max_phase]
/// radians: 0 -> 0, 255 -> max_phase. Entropy is invariant under this map.
inline PhaseMap calibrate_to_phase(const Image8& img, double max_phase = kWeakPhaseLimit) {
  if (!(max_phase > 0) || max_phase > kPi)
    throw std::invalid_argument("calibrate_to_phase: max_phase must be in (0, pi]");
  PhaseMap out{RealGrid(img.pixels.rows(), img.pixels.cols())};
  for (size_t i = 0; i < img.pixels.size(); ++i)
    out.values.data()[i] = double(img.pixels.data()[i]) / 255.0 * max_phase;
  return out;
}

// ---------------------------------------------------------------------------
// Manifest JSON (schema: version, descriptor, seed, entries[])

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["version"] = m.version;
  j["descriptor"] = {{"type", m.descriptor.type},
                     {"grid_n", m.descriptor.grid_n},
                     {"count", m.descriptor.count}};
  j["seed"] = m.seed;
  auto& entries = j["entries"] = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json je{{"id", e.id}, {"split", split_name(e.split)}};
    if (e.path.empty())
      je["sub_seed"] = e.sub_seed;
    else
      je["path"] = e.path;
    entries.push_back(std::move(je));
  }
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.version = j.at("version").get<int>();
  if (m.version != 1) throw std::runtime_error("manifest: unsupported version");
  m.descriptor.type = j.at("descriptor").at("type").get<std::string>();
  m.descriptor.grid_n = j.at("descriptor").at("grid_n").get<int>();
  m.descriptor.count = j.at("descriptor").at("count").get<int>();
  m.seed = j.at("seed").get<uint64_t>();
  for (const auto& je : j.at("entries")) {
    DatasetEntry e;
    e.id = je.at("id").get<std::string>();
    e.split = split_from_name(je.at("split").get<std::string>());
    if (je.contains("sub_seed")) e.sub_seed = je.at("sub_seed").get<uint64_t>();
    if (je.contains("path")) e.path = je.at("path").get<std::string>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace wotf
