#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "wotfprobe/datasets.hpp"
#include "wotfprobe/gridio.hpp"
#include "wotfprobe/registration.hpp"

using namespace wotf;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct RunResult {
  int exit_code;
  std::string stderr_text;
};

RunResult run_cli(const std::string& args) {
  auto err_file = fs::temp_directory_path() / "wotfprobe_cli_stderr.txt";
  std::string cmd = std::string(WOTFPROBE_CLI_PATH) + " " + args + " >/dev/null 2>" +
                    err_file.string();
  int rc = std::system(cmd.c_str());
  std::ifstream err(err_file);
  std::string text((std::istreambuf_iterator<char>(err)), std::istreambuf_iterator<char>());
  return {WEXITSTATUS(rc), text};
}

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("wotfprobe_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  return json::parse(in);
}

}  // namespace

TEST_CASE("cli: gen-data is deterministic for a fixed seed") {
  auto d1 = fresh_dir("gen1"), d2 = fresh_dir("gen2"), d3 = fresh_dir("gen3");
  REQUIRE(run_cli("--seed 5 --out " + d1.string() + " gen-data").exit_code == 0);
  REQUIRE(run_cli("--seed 5 --out " + d2.string() + " gen-data").exit_code == 0);
  REQUIRE(run_cli("--seed 6 --out " + d3.string() + " gen-data").exit_code == 0);
  auto f1 = read_json(d1 / "files.json");
  auto f2 = read_json(d2 / "files.json");
  auto f3 = read_json(d3 / "files.json");
  CHECK(f1 == f2);
  CHECK(f1 != f3);

  // the recorded hash matches the bytes on disk
  for (const auto& entry : f1["files"]) {
    auto bytes = read_file_bytes((d1 / entry["path"].get<std::string>()).string());
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)fnv1a64(bytes));
    CHECK(entry["fnv1a64"].get<std::string>() == buf);
  }
}

TEST_CASE("cli: glyph entropy report stays below 1.5 bits") {
  auto dir = fresh_dir("entropy");
  REQUIRE(run_cli("--seed 3 --out " + dir.string() + " entropy --type glyph").exit_code == 0);
  auto j = read_json(dir / "entropy_glyph.json");
  CHECK(j["mean_bits"].get<double>() < 1.5);
  CHECK(j["n_images"].get<int>() == 250);
  int total = 0;
  for (int c : j["histogram"]) total += c;
  CHECK(total == 250);
}

TEST_CASE("cli: simulating a zero phase yields unit intensity") {
  auto dir = fresh_dir("simulate");
  REQUIRE(run_cli("--out " + dir.string() + " simulate").exit_code == 0);
  RealGrid g = read_grid((dir / "intensity.wpgd").string());
  REQUIRE(g.rows() == 32);
  for (double v : g) CHECK(v == Catch::Approx(1.0).margin(1e-12));
  CHECK(fs::exists(dir / "intensity_preview.pgm"));
}

TEST_CASE("cli: tikhonov reconstruction round trip through grid files") {
  auto dir = fresh_dir("recon");
  REQUIRE(run_cli("--out " + dir.string() + " simulate").exit_code == 0);
  auto rr = run_cli("--out " + dir.string() + " reconstruct --method tikhonov --input " +
                    (dir / "intensity.wpgd").string());
  REQUIRE(rr.exit_code == 0);
  RealGrid est = read_grid((dir / "phase_estimate.wpgd").string());
  for (double v : est) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("cli: config validation rejects unknown keys and bad values") {
  auto dir = fresh_dir("config");
  auto cfg_path = dir / "bad.json";
  {
    std::ofstream f(cfg_path);
    f << R"({"optics": {"grid_n": 32}, "bogus_key": 1})";
  }
  auto r = run_cli("--config " + cfg_path.string() + " --out " + dir.string() + " simulate");
  CHECK(r.exit_code != 0);
  CHECK(r.stderr_text.find("unknown key") != std::string::npos);
  CHECK(r.stderr_text.find("bogus_key") != std::string::npos);

  {
    std::ofstream f(cfg_path);
    f << R"({"optics": {"grid_n": 31}})";
  }
  r = run_cli("--config " + cfg_path.string() + " --out " + dir.string() + " simulate");
  CHECK(r.exit_code != 0);
  CHECK(r.stderr_text.find("error") != std::string::npos);
}

TEST_CASE("cli: registration of generated images recovers a planted shift") {
  auto dir = fresh_dir("register");
  Image8 img = detail::render_texture(77, 128);
  RealGrid fixed(128, 128);
  for (size_t i = 0; i < fixed.size(); ++i) fixed.data()[i] = double(img.pixels.data()[i]);
  AffineParams plant;
  plant.tx = 2.0;
  plant.ty = -3.0;
  RealGrid moving = warp_affine(fixed, plant);
  Image8 moving_img{ByteGrid(128, 128)};
  for (size_t i = 0; i < moving.size(); ++i)
    moving_img.pixels.data()[i] = uint8_t(std::clamp(std::lround(moving.data()[i]), 0l, 255l));
  save_pgm(img, (dir / "fixed.pgm").string());
  save_pgm(moving_img, (dir / "moving.pgm").string());

  auto r = run_cli("--out " + dir.string() + " register --moving " +
                   (dir / "moving.pgm").string() + " --fixed " + (dir / "fixed.pgm").string());
  REQUIRE(r.exit_code == 0);
  auto j = read_json(dir / "registration.json");
  CHECK(std::abs(j["tx"].get<double>() + 2.0) < 0.5);
  CHECK(std::abs(j["ty"].get<double>() - 3.0) < 0.5);
  CHECK(fs::exists(dir / "warped.pgm"));
}

TEST_CASE("cli: evaluate with the oracle row produces the matrix files") {
  auto dir = fresh_dir("evaluate");
  auto r = run_cli("--seed 2 --out " + dir.string() + " evaluate --oracle");
  REQUIRE(r.exit_code == 0);
  std::ifstream csv(dir / "cross_domain.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "train_set,test_set,metric,mean,std,n");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == 4);  // 1 model x 2 test sets x 2 metrics
  CHECK(fs::exists(dir / "cross_domain.txt"));
}

TEST_CASE("cli: missing subcommand or inputs fail cleanly") {
  CHECK(run_cli("").exit_code != 0);
  auto r = run_cli("reconstruct --input /nonexistent.wpgd");
  CHECK(r.exit_code != 0);
}
