#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "wotfprobe/datasets.hpp"
#include "wotfprobe/network.hpp"
#include "wotfprobe/registration.hpp"

using namespace wotf;

namespace {

RealGrid texture_grid(uint64_t seed, int n) {
  Image8 img = detail::render_texture(seed, n);
  RealGrid g(n, n);
  for (size_t i = 0; i < g.size(); ++i) g.data()[i] = double(img.pixels.data()[i]);
  return g;
}

// mean displacement of the four image corners under the composition of two
// affine maps, against the identity
double corner_error(const AffineParams& p, const AffineParams& q, int n) {
  const double cx = (n - 1) / 2.0, cy = (n - 1) / 2.0;
  double acc = 0;
  for (auto [x, y] : {std::pair{0.0, 0.0}, {n - 1.0, 0.0}, {0.0, n - 1.0}, {n - 1.0, n - 1.0}}) {
    double mx, my, fx, fy;
    p.map(cx, cy, x, y, mx, my);
    q.map(cx, cy, mx, my, fx, fy);
    acc += std::hypot(fx - x, fy - y);
  }
  return acc / 4.0;
}

}  // namespace

TEST_CASE("warp: identity, inverse translation, inverse rotation") {
  RealGrid img = texture_grid(31, 64);

  auto same = warp_affine(img, AffineParams{});
  for (size_t i = 0; i < img.size(); ++i)
    CHECK(same.data()[i] == Catch::Approx(img.data()[i]).margin(1e-12));

  AffineParams shift;
  shift.tx = 3.0;
  AffineParams unshift;
  unshift.tx = -3.0;
  auto round_trip = warp_affine(warp_affine(img, shift), unshift);
  for (int r = 0; r < 64; ++r)
    for (int c = 4; c < 60; ++c)
      CHECK(round_trip(r, c) == Catch::Approx(img(r, c)).margin(1e-9));

  // interpolation loses high frequencies, so measure on a smooth image
  RealGrid smooth(64, 64, 0.0);
  for (int r = 1; r < 63; ++r)
    for (int c = 1; c < 63; ++c) {
      double acc = 0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) acc += img(r + dr, c + dc);
      smooth(r, c) = acc / 9.0;
    }
  double th = 10.0 * kPi / 180.0;
  AffineParams rot{std::cos(th), -std::sin(th), std::sin(th), std::cos(th), 0, 0};
  AffineParams unrot{std::cos(th), std::sin(th), -std::sin(th), std::cos(th), 0, 0};
  auto back = warp_affine(warp_affine(smooth, rot), unrot);
  std::vector<double> a, b;
  for (int r = 12; r < 52; ++r)
    for (int c = 12; c < 52; ++c) {
      a.push_back(back(r, c));
      b.push_back(smooth(r, c));
    }
  CHECK(pearson(a.data(), b.data(), int64_t(a.size())) > 0.99);

  AffineParams singular{1.0, 2.0, 0.5, 1.0, 0, 0};  // det = 0
  CHECK_THROWS_AS(warp_affine(img, singular), std::invalid_argument);
}

TEST_CASE("nmi: self, independence, bijections, symmetry") {
  RealGrid img = texture_grid(7, 64);
  CHECK(nmi(img, img) == Catch::Approx(2.0).margin(1e-12));

  // independent uniform noise on 256^2 pixels: NMI ~ 1 within sampling error
  Rng rng(123);
  RealGrid u1(256, 256), u2(256, 256);
  for (auto& v : u1) v = rng.uniform();
  for (auto& v : u2) v = rng.uniform();
  CHECK(nmi(u1, u2) > 1.0);
  CHECK(nmi(u1, u2) < 1.05);

  // value permutation with one bin per 8-bit level keeps NMI at 2
  Image8 src = detail::render_texture(9, 64);
  uint8_t perm[256];
  for (int i = 0; i < 256; ++i) perm[i] = uint8_t(i);
  rng.shuffle(perm, perm + 256);
  RealGrid a(64, 64), b(64, 64);
  bool lo_seen = false, hi_seen = false;
  for (size_t i = 0; i < src.pixels.size(); ++i) {
    a.data()[i] = double(src.pixels.data()[i]);
    b.data()[i] = double(perm[src.pixels.data()[i]]);
  }
  (void)lo_seen;
  (void)hi_seen;
  CHECK(nmi(a, b, 256) == Catch::Approx(2.0).margin(1e-12));

  // identical monotone remap of both images leaves NMI unchanged
  RealGrid ra = a, rb = texture_grid(10, 64);
  double base = nmi(ra, rb);
  RealGrid ma = ra, mb = rb;
  for (auto& v : ma) v = 3.0 * v - 7.0;
  for (auto& v : mb) v = 3.0 * v - 7.0;
  CHECK(nmi(ma, mb) == Catch::Approx(base).margin(1e-12));

  CHECK(nmi(ra, rb) == Catch::Approx(nmi(rb, ra)).margin(1e-12));

  RealGrid flat(64, 64, 2.0);
  CHECK_THROWS_AS(nmi(flat, ra), std::domain_error);
}

TEST_CASE("nelder-mead minimizes a quadratic bowl") {
  std::vector<double> target{0.3, -0.7, 1.1, 0.0, -2.0, 0.5};
  auto objective = [&](const std::vector<double>& x) {
    double acc = 0;
    for (size_t i = 0; i < x.size(); ++i) acc += (x[i] - target[i]) * (x[i] - target[i]);
    return acc;
  };
  std::vector<double> init{0.0, 0.0, 1.0, 0.4, -1.8, 0.2};
  std::vector<double> step(6, 0.3);
  SimplexConfig cfg;
  cfg.max_iter = 2000;
  cfg.x_tol = 1e-9;
  cfg.f_tol = 1e-16;
  auto res = nelder_mead(objective, init, step, cfg);
  for (size_t i = 0; i < 6; ++i)
    CHECK(res.best_point[i] == Catch::Approx(target[i]).margin(1e-6));

  // best-ever value is non-increasing
  for (size_t i = 1; i < res.best_history.size(); ++i)
    CHECK(res.best_history[i] <= res.best_history[i - 1] + 1e-15);
}

TEST_CASE("nelder-mead keeps an already optimal start") {
  auto objective = [](const std::vector<double>& x) {
    double acc = 0;
    for (double v : x) acc += v * v;
    return acc;
  };
  std::vector<double> init(6, 0.0);
  auto res = nelder_mead(objective, init, std::vector<double>(6, 0.1));
  CHECK(res.best_value <= objective(init));
}

TEST_CASE("nelder-mead solves an embedded Rosenbrock valley") {
  auto objective = [](const std::vector<double>& x) {
    double ros = 100.0 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0]) +
                 (1.0 - x[0]) * (1.0 - x[0]);
    double rest = 0;
    for (size_t i = 2; i < x.size(); ++i) rest += x[i] * x[i];
    return ros + rest;
  };
  std::vector<double> init{-1.2, 1.0, 0.3, -0.2, 0.1, -0.1};
  SimplexConfig cfg;
  cfg.max_iter = 2000;
  cfg.x_tol = 1e-10;
  cfg.f_tol = 1e-14;
  auto res = nelder_mead(objective, init, std::vector<double>(6, 0.25), cfg);
  CHECK(res.iterations <= 2000);
  CHECK(res.best_value < 1e-8);
}

TEST_CASE("nelder-mead rejects non-finite objectives") {
  auto objective = [](const std::vector<double>& x) {
    return x[0] > 0.5 ? std::numeric_limits<double>::infinity() : x[0] * x[0];
  };
  CHECK_THROWS_AS(
      nelder_mead(objective, std::vector<double>{0.4}, std::vector<double>{0.3}),
      std::domain_error);
}

TEST_CASE("registration: identical images give the identity") {
  RealGrid img = texture_grid(21, 64);
  auto p = register_affine(img, img);
  CHECK(std::abs(p.tx) < 0.1);
  CHECK(std::abs(p.ty) < 0.1);
  CHECK(std::abs(p.a11 - 1.0) < 0.01);
  CHECK(std::abs(p.a22 - 1.0) < 0.01);
}

TEST_CASE("registration recovers a planted shift") {
  // joint histograms need pixel statistics; 128x128 textures keep them dense
  RealGrid fixed = texture_grid(22, 128);
  AffineParams plant;
  plant.tx = 3.0;
  plant.ty = -2.0;
  RealGrid moving = warp_affine(fixed, plant);
  auto rec = register_affine(moving, fixed);
  // recovered map composed with the plant returns pixels home
  CHECK(corner_error(rec, plant, 128) < 0.5);
}

TEST_CASE("registration recovers rotation and scale") {
  RealGrid fixed = texture_grid(23, 128);
  double th = 2.0 * kPi / 180.0, s = 1.02;
  AffineParams plant{s * std::cos(th), -s * std::sin(th), s * std::sin(th), s * std::cos(th),
                     0.0, 0.0};
  RealGrid moving = warp_affine(fixed, plant);
  auto rec = register_affine(moving, fixed);
  // linear part of the composition within 1% of the identity (Frobenius)
  double c11 = rec.a11 * plant.a11 + rec.a12 * plant.a21;
  double c12 = rec.a11 * plant.a12 + rec.a12 * plant.a22;
  double c21 = rec.a21 * plant.a11 + rec.a22 * plant.a21;
  double c22 = rec.a21 * plant.a12 + rec.a22 * plant.a22;
  double frob = std::sqrt((c11 - 1) * (c11 - 1) + c12 * c12 + c21 * c21 + (c22 - 1) * (c22 - 1));
  CHECK(frob < 0.014);  // 1% of ||I||_F = sqrt(2)
  CHECK(corner_error(rec, plant, 128) < 0.5);
}

TEST_CASE("registration requires matching shapes") {
  RealGrid a = texture_grid(1, 32);
  RealGrid b = texture_grid(1, 64);
  CHECK_THROWS_AS(register_affine(a, b), std::invalid_argument);
}
