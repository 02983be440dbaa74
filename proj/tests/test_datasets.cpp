#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "wotfprobe/datasets.hpp"

using namespace wotf;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto p = fs::temp_directory_path() / "wotfprobe_test_datasets";
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("entropy of canonical images") {
  Image8 constant{ByteGrid(16, 16, 42)};
  CHECK(image_entropy(constant) == 0.0);

  Image8 binary{ByteGrid(16, 16, 0)};
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 8; ++c) binary.pixels(r, c) = 255;
  CHECK(image_entropy(binary) == Catch::Approx(1.0).margin(1e-12));

  Image8 full{ByteGrid(16, 16, 0)};
  for (int i = 0; i < 256; ++i) full.pixels.data()[i] = uint8_t(i);
  CHECK(image_entropy(full) == Catch::Approx(8.0).margin(1e-12));
}

TEST_CASE("entropy is invariant under bijective remapping and pixel shuffles") {
  Rng rng(123);
  Image8 img = detail::render_texture(5, 32);
  double h0 = image_entropy(img);

  uint8_t perm[256];
  for (int i = 0; i < 256; ++i) perm[i] = uint8_t(i);
  rng.shuffle(perm, perm + 256);
  Image8 remapped = img;
  for (auto& v : remapped.pixels) v = perm[v];
  CHECK(image_entropy(remapped) == Catch::Approx(h0).margin(1e-12));

  Image8 shuffled = img;
  rng.shuffle(shuffled.pixels.begin(), shuffled.pixels.end());
  CHECK(image_entropy(shuffled) == Catch::Approx(h0).margin(1e-12));
}

TEST_CASE("entropy bounds hold for arbitrary images") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Image8 img{ByteGrid(13, 29)};
    for (auto& v : img.pixels) v = uint8_t(rng.next_u64() & 0xff);
    double h = image_entropy(img);
    CHECK(h >= 0.0);
    CHECK(h <= 8.0);
  }
}

TEST_CASE("texture dataset: high entropy, deterministic, distinct images") {
  auto m = gen_texture_dataset(77, 100, 32);
  REQUIRE(m.entries.size() == 100);
  auto rep = entropy_report(m);
  CHECK(rep.mean > 6.5);
  CHECK(rep.std_dev < 1.0);
  int hist_total = 0;
  for (int c : rep.histogram) hist_total += c;
  CHECK(hist_total == 100);
  CHECK(rep.histogram.size() == 1000);

  auto m2 = gen_texture_dataset(77, 100, 32);
  for (size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(m.entries[i].sub_seed == m2.entries[i].sub_seed);
    CHECK(materialize(m, m.entries[i]).pixels == materialize(m2, m2.entries[i]).pixels);
  }
  CHECK(!(materialize(m, m.entries[0]).pixels == materialize(m, m.entries[1]).pixels));
}

TEST_CASE("glyph dataset: low entropy, mostly background") {
  auto m = gen_glyph_dataset(31, 100, 32);
  auto rep = entropy_report(m);
  CHECK(rep.mean < 1.5);
  double mean_bg = 0;
  for (const auto& e : m.entries) {
    Image8 img = materialize(m, e);
    size_t zeros = 0;
    for (uint8_t v : img.pixels) zeros += (v == 0);
    mean_bg += double(zeros) / double(img.pixels.size());
  }
  mean_bg /= double(m.entries.size());
  CHECK(mean_bg >= 0.6);
}

TEST_CASE("split assignment is disjoint and 80/10/10") {
  auto m = gen_texture_dataset(5, 250, 32);
  int n_train = 0, n_val = 0, n_test = 0;
  for (const auto& e : m.entries) {
    if (e.split == Split::train) ++n_train;
    if (e.split == Split::validation) ++n_val;
    if (e.split == Split::test) ++n_test;
  }
  CHECK(n_train == 200);
  CHECK(n_val == 25);
  CHECK(n_test == 25);
}

TEST_CASE("entropy report on constant dataset") {
  DatasetManifest m = gen_glyph_dataset(1, 3, 16);
  // hand-build a degenerate "pgm" manifest of constant images
  auto dir = temp_dir();
  DatasetManifest constant;
  constant.descriptor = {"pgm", 16, 4};
  for (int i = 0; i < 4; ++i) {
    Image8 img{ByteGrid(16, 16, uint8_t(10 * i))};
    auto p = (dir / ("const" + std::to_string(i) + ".pgm")).string();
    save_pgm(img, p);
    constant.entries.push_back({"const-" + std::to_string(i), 0, p, Split::train});
  }
  auto rep = entropy_report(constant);
  CHECK(rep.mean == 0.0);
  CHECK(rep.std_dev == 0.0);
  CHECK(rep.histogram[0] == 4);
}

TEST_CASE("pgm round trip and rejection of unsupported formats") {
  auto dir = temp_dir();
  Image8 img = detail::render_glyph(9, 24);
  auto path = (dir / "roundtrip.pgm").string();
  save_pgm(img, path);
  Image8 back = load_pgm(path);
  CHECK(back.pixels == img.pixels);

  auto p2 = (dir / "ascii.pgm").string();
  {
    std::ofstream f(p2);
    f << "P2\n2 2\n255\n0 1 2 3\n";
  }
  CHECK_THROWS(load_pgm(p2));

  auto p16 = (dir / "deep.pgm").string();
  {
    std::ofstream f(p16, std::ios::binary);
    f << "P5\n2 2\n65535\n";
    for (int i = 0; i < 8; ++i) f.put(char(i));
  }
  CHECK_THROWS_WITH(load_pgm(p16), Catch::Matchers::ContainsSubstring("maxval"));

  auto ptrunc = (dir / "trunc.pgm").string();
  {
    std::ofstream f(ptrunc, std::ios::binary);
    f << "P5\n4 4\n255\n";
    f.put(char(0));
  }
  CHECK_THROWS_WITH(load_pgm(ptrunc), Catch::Matchers::ContainsSubstring("truncated"));

  // comments in the header are fine
  auto pcomment = (dir / "comment.pgm").string();
  {
    std::ofstream f(pcomment, std::ios::binary);
    f << "P5\n# a comment\n2 2\n255\n";
    for (int i = 0; i < 4; ++i) f.put(char(i));
  }
  CHECK(load_pgm(pcomment).pixels.rows() == 2);
}

TEST_CASE("grayscale-to-phase calibration") {
  Image8 img{ByteGrid(2, 2, 0)};
  img.pixels(0, 1) = 255;
  img.pixels(1, 0) = 128;
  auto phase = calibrate_to_phase(img);
  CHECK(phase.values(0, 0) == 0.0);
  CHECK(phase.values(0, 1) == Catch::Approx(0.1 * kPi));
  CHECK(phase.values(1, 0) < phase.values(0, 1));

  CHECK_THROWS_AS(calibrate_to_phase(img, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(calibrate_to_phase(img, -1.0), std::invalid_argument);

  // entropy is preserved through the one-to-one map: re-quantizing the phase
  // map recovers the source image exactly
  Image8 tex = detail::render_texture(17, 32);
  auto ph = calibrate_to_phase(tex);
  Image8 restored{ByteGrid(32, 32)};
  for (size_t i = 0; i < ph.values.size(); ++i)
    restored.pixels.data()[i] =
        uint8_t(std::lround(ph.values.data()[i] / (0.1 * kPi) * 255.0));
  CHECK(restored.pixels == tex.pixels);
  CHECK(image_entropy(restored) == image_entropy(tex));
}

TEST_CASE("manifest JSON round trip") {
  auto m = gen_texture_dataset(42, 20, 16);
  auto j = manifest_to_json(m);
  auto m2 = manifest_from_json(j);
  CHECK(m2.seed == m.seed);
  CHECK(m2.descriptor.type == m.descriptor.type);
  CHECK(m2.descriptor.grid_n == m.descriptor.grid_n);
  REQUIRE(m2.entries.size() == m.entries.size());
  for (size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(m2.entries[i].id == m.entries[i].id);
    CHECK(m2.entries[i].sub_seed == m.entries[i].sub_seed);
    CHECK(m2.entries[i].split == m.entries[i].split);
  }
  CHECK(manifest_to_json(m2) == j);
}

TEST_CASE("entropy report propagates unreadable entries") {
  DatasetManifest broken;
  broken.descriptor = {"pgm", 16, 1};
  broken.entries.push_back({"missing", 0, "/nonexistent/missing.pgm", Split::train});
  CHECK_THROWS(entropy_report(broken));
}

TEST_CASE("generator argument validation") {
  CHECK_THROWS_AS(gen_texture_dataset(1, 0, 32), std::invalid_argument);
  CHECK_THROWS_AS(gen_glyph_dataset(1, -2, 32), std::invalid_argument);
}
