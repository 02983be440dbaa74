// Command-line front end: experiment configuration, deterministic
// orchestration and all file emission.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "wotfprobe/datasets.hpp"
#include "wotfprobe/diagnostics.hpp"
#include "wotfprobe/evaluation.hpp"
#include "wotfprobe/gridio.hpp"
#include "wotfprobe/network.hpp"
#include "wotfprobe/optics.hpp"
#include "wotfprobe/reconstruct.hpp"
#include "wotfprobe/registration.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace wotf;

namespace {

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
  OpticalConfig optics;  // experiment-scale imaging geometry
  int dataset_count = 250;
  uint64_t seed = 1;
  NetworkConfig network;
  TrainConfig train;
  // star-test geometry: its own grid so the nulls land in a resolvable band
  OpticalConfig star_optics;
  StarPattern star;
  double lwotf_mask_threshold = 0.05;
  double noise_sigma = 0.0;  // optional detector noise, relative to mean
  std::string output_dir = "out";
};

ExperimentConfig preset(const std::string& scale) {
  ExperimentConfig cfg;
  if (scale == "desk") {
    cfg.optics = {633e-9, 15e-3, 20e-6, 32};
    cfg.network.input_side = 32;
    cfg.star_optics = {633e-9, 7e-3, 20e-6, 256};
  } else if (scale == "paper") {
    cfg.optics = {633e-9, 100e-3, 20e-6, 256};
    cfg.network = {4, 4, 2, 16, 256, 3, 2, 1};
    cfg.train.epochs = 50;
    cfg.star_optics = {633e-9, 150e-3, 20e-6, 512};
  } else {
    throw std::invalid_argument("unknown scale '" + scale + "' (use desk or paper)");
  }
  return cfg;
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void maybe(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

ExperimentConfig load_config(const std::string& path, const std::string& scale) {
  ExperimentConfig cfg = preset(scale);
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json j = json::parse(in);
  reject_unknown_keys(j,
                      {"optics", "datasets", "network", "train", "diagnostics", "output_dir",
                       "seed", "noise_sigma"},
                      "top level");
  if (j.contains("optics")) {
    const auto& o = j["optics"];
    reject_unknown_keys(o, {"wavelength", "defocus", "pixel_pitch", "grid_n"}, "optics");
    maybe(o, "wavelength", cfg.optics.wavelength);
    maybe(o, "defocus", cfg.optics.defocus);
    maybe(o, "pixel_pitch", cfg.optics.pixel_pitch);
    maybe(o, "grid_n", cfg.optics.grid_n);
    cfg.network.input_side = cfg.optics.grid_n;
  }
  if (j.contains("datasets")) {
    const auto& d = j["datasets"];
    reject_unknown_keys(d, {"count"}, "datasets");
    maybe(d, "count", cfg.dataset_count);
  }
  if (j.contains("network")) {
    const auto& n = j["network"];
    reject_unknown_keys(n,
                        {"n_down_blocks", "n_up_blocks", "n_res_blocks", "base_channels",
                         "input_side", "main_kernel", "up_side_kernel", "res_side_kernel"},
                        "network");
    maybe(n, "n_down_blocks", cfg.network.n_down_blocks);
    maybe(n, "n_up_blocks", cfg.network.n_up_blocks);
    maybe(n, "n_res_blocks", cfg.network.n_res_blocks);
    maybe(n, "base_channels", cfg.network.base_channels);
    maybe(n, "input_side", cfg.network.input_side);
    maybe(n, "main_kernel", cfg.network.main_kernel);
    maybe(n, "up_side_kernel", cfg.network.up_side_kernel);
    maybe(n, "res_side_kernel", cfg.network.res_side_kernel);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown_keys(t, {"learning_rate", "beta1", "beta2", "batch_size", "epochs"}, "train");
    maybe(t, "learning_rate", cfg.train.learning_rate);
    maybe(t, "beta1", cfg.train.beta1);
    maybe(t, "beta2", cfg.train.beta2);
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "epochs", cfg.train.epochs);
  }
  if (j.contains("diagnostics")) {
    const auto& d = j["diagnostics"];
    reject_unknown_keys(
        d, {"star_periods", "star_depth", "star_grid_n", "star_defocus", "mask_threshold"},
        "diagnostics");
    maybe(d, "star_periods", cfg.star.periods);
    maybe(d, "star_depth", cfg.star.depth);
    maybe(d, "star_grid_n", cfg.star_optics.grid_n);
    maybe(d, "star_defocus", cfg.star_optics.defocus);
    maybe(d, "mask_threshold", cfg.lwotf_mask_threshold);
  }
  maybe(j, "output_dir", cfg.output_dir);
  maybe(j, "seed", cfg.seed);
  maybe(j, "noise_sigma", cfg.noise_sigma);
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  cfg.optics.validate();
  cfg.star_optics.validate();
  cfg.network.validate();
  cfg.train.validate();
  cfg.star.validate();
  if (cfg.dataset_count < 10)
    throw std::invalid_argument("config: datasets.count must be >= 10 for the 80/10/10 split");
  if (cfg.network.input_side != cfg.optics.grid_n)
    throw std::invalid_argument("config: network.input_side must equal optics.grid_n");
  if (cfg.noise_sigma < 0) throw std::invalid_argument("config: noise_sigma must be >= 0");
}

// ---------------------------------------------------------------------------
// Output emission: atomic writes, hashed file manifest

class Emitter {
 public:
  explicit Emitter(std::string dir) : dir_(std::move(dir)) {}

  std::string path(const std::string& rel) const { return (fs::path(dir_) / rel).string(); }

  void bytes(const std::string& rel, const std::string& data) {
    atomic_write_file(path(rel), data);
    record(rel, data);
  }

  void grid(const std::string& rel, const RealGrid& g, bool preview = true) {
    bytes(rel, grid_to_bytes(g));
    if (preview) {
      // lossy min-max preview for eyeballing; clearly a derived artifact
      std::string prel = rel.substr(0, rel.rfind('.')) + "_preview.pgm";
      save_preview_pgm(g, path(prel));
      record(prel, read_file_bytes(path(prel)));
    }
  }

  void js(const std::string& rel, const json& j) { bytes(rel, j.dump(2) + "\n"); }

  void pgm(const std::string& rel, const Image8& img) {
    fs::create_directories(fs::path(path(rel)).parent_path());
    save_pgm(img, path(rel));
    record(rel, read_file_bytes(path(rel)));
  }

  void finish() {
    json files = json::array();
    for (const auto& [rel, hash] : produced_)
      files.push_back({{"path", rel}, {"fnv1a64", hash}});
    atomic_write_file(path("files.json"), json{{"files", files}}.dump(2) + "\n");
  }

 private:
  void record(const std::string& rel, const std::string& data) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(data)));
    produced_.emplace_back(rel, buf);
  }

  std::string dir_;
  std::vector<std::pair<std::string, std::string>> produced_;
};

json optics_to_json(const OpticalConfig& o) {
  return {{"wavelength", o.wavelength},
          {"defocus", o.defocus},
          {"pixel_pitch", o.pixel_pitch},
          {"grid_n", o.grid_n},
          {"fresnel_sampling_ratio", o.fresnel_sampling_ratio()}};
}

// ---------------------------------------------------------------------------
// Shared pipeline steps

DatasetManifest make_dataset(const ExperimentConfig& cfg, const std::string& type,
                             uint64_t stream) {
  uint64_t seed = derive_seed(cfg.seed, stream);
  if (type == "texture") return gen_texture_dataset(seed, cfg.dataset_count, cfg.optics.grid_n);
  if (type == "glyph") return gen_glyph_dataset(seed, cfg.dataset_count, cfg.optics.grid_n);
  throw std::invalid_argument("unknown dataset type '" + type + "'");
}

IntensityMap forward_measurement(const PhaseMap& phase, const ExperimentConfig& cfg,
                                 uint64_t noise_stream) {
  IntensityMap g = propagate(phase, cfg.optics);
  if (cfg.noise_sigma > 0)
    g = add_detector_noise(g, cfg.noise_sigma, derive_seed(cfg.seed, noise_stream));
  return g;
}

struct TrainedModel {
  std::shared_ptr<Network> net;
  std::pair<double, double> affine{1.0, 0.0};
  TrainResult history;
};

TrainedModel train_domain(const ExperimentConfig& cfg, const DatasetManifest& data,
                          uint64_t stream, const std::string& checkpoint_path) {
  TrainedModel model;
  model.net = std::make_shared<Network>(cfg.network, derive_seed(cfg.seed, stream));
  TrainConfig tcfg = cfg.train;
  tcfg.seed = derive_seed(cfg.seed, stream + 1);
  model.history = train_network(*model.net, data, cfg.optics, tcfg, checkpoint_path);
  std::vector<PhaseMap> ests, truths;
  for (const auto* e : data.split_entries(Split::validation)) {
    PhaseMap truth = calibrate_to_phase(materialize(data, *e));
    ests.push_back(neural_reconstruct(propagate(truth, cfg.optics), *model.net, {1.0, 0.0}));
    truths.push_back(std::move(truth));
  }
  model.affine = fit_affine_scale(ests, truths);
  return model;
}

json affine_to_json(std::pair<double, double> ab) {
  return {{"a", ab.first}, {"b", ab.second}};
}

std::pair<double, double> affine_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open affine file " + path);
  json j = json::parse(in);
  return {j.at("a").get<double>(), j.at("b").get<double>()};
}

/// Mixed LWOTF probe set: equal parts texture test split, glyph test split,
/// and fresh held-out images from both generators.
std::vector<IntensityMap> mixed_test_measurements(const ExperimentConfig& cfg,
                                                  const DatasetManifest& tex,
                                                  const DatasetManifest& gly) {
  std::vector<IntensityMap> meas;
  auto add_split = [&](const DatasetManifest& m) {
    for (const auto* e : m.split_entries(Split::test))
      meas.push_back(forward_measurement(calibrate_to_phase(materialize(m, *e)), cfg, 900));
  };
  add_split(tex);
  add_split(gly);
  int held = int(tex.split_entries(Split::test).size());
  auto held_tex =
      gen_texture_dataset(derive_seed(cfg.seed, 41), (held + 1) / 2, cfg.optics.grid_n);
  auto held_gly = gen_glyph_dataset(derive_seed(cfg.seed, 42), held / 2 + 1, cfg.optics.grid_n);
  int added = 0;
  for (const auto& e : held_tex.entries) {
    if (added >= (held + 1) / 2) break;
    meas.push_back(forward_measurement(calibrate_to_phase(materialize(held_tex, e)), cfg, 901));
    ++added;
  }
  added = 0;
  for (const auto& e : held_gly.entries) {
    if (added >= held / 2) break;
    meas.push_back(forward_measurement(calibrate_to_phase(materialize(held_gly, e)), cfg, 902));
    ++added;
  }
  return meas;
}

json lwotf_run(const ExperimentConfig& cfg, Emitter& out, const std::string& tag,
               const std::function<PhaseMap(const IntensityMap&)>& recon,
               const std::vector<IntensityMap>& meas) {
  auto res = extract_lwotf(recon, meas, cfg.optics, cfg.lwotf_mask_threshold);
  out.grid(tag + "_lwotf.wpgd", res.grid, false);
  out.bytes(tag + "_lwotf_diagonal.csv",
            profile_to_csv(diagonal_profile(res.grid, res.freq_step)));
  double band_hi = std::min(cfg.optics.first_null_freq(), cfg.optics.nyquist());
  double rmse = lwotf_fidelity(res, cfg.optics, 0.0, band_hi);
  int n_valid = 0;
  for (auto v : res.valid) n_valid += v;
  return {{"images", res.n_images},
          {"band_hi_per_m", band_hi},
          {"rmse_vs_theory", rmse},
          {"valid_bins", n_valid}};
}

json star_run(const ExperimentConfig& cfg, Emitter& out, const std::string& tag, double defocus,
              const std::function<PhaseMap(const IntensityMap&)>* recon) {
  OpticalConfig optics = cfg.star_optics;
  optics.defocus = defocus;
  auto phase = make_star(cfg.star, optics);
  auto g = propagate(phase, optics);
  if (cfg.noise_sigma > 0) g = add_detector_noise(g, cfg.noise_sigma, derive_seed(cfg.seed, 77));
  out.grid(tag + "_star_object.wpgd", phase.values);
  out.grid(tag + "_star_measurement.wpgd", g.values);

  auto pred = predict_null_radii(optics, cfg.star.periods, 8);
  const double r_lo = star_inner_radius(optics, cfg.star.periods) * 1.025;
  const double r_hi = pred.empty() ? star_outer_radius(optics) * 0.95
                                   : std::min(star_outer_radius(optics) * 0.95,
                                              pred[0] + 15 * optics.pixel_pitch);
  std::vector<double> in_band;
  for (double r : pred)
    if (r > r_lo && r < r_hi) in_band.push_back(r);
  if (in_band.empty()) std::cerr << "warning: no predicted null radii inside the scan band\n";
  auto det = detect_discontinuities(g.values, cfg.star.periods, optics, r_lo, r_hi);

  std::ostringstream csv;
  csv.precision(12);
  csv << "k,radius_m\n";
  for (size_t i = 0; i < det.size(); ++i) csv << (i + 1) << "," << det[i] << "\n";
  out.bytes(tag + "_star_detected_radii.csv", csv.str());

  json j{{"defocus", defocus},
         {"periods", cfg.star.periods},
         {"predicted_radii_in_band", in_band},
         {"detected_radii", det}};
  if (recon) {
    PhaseMap est = (*recon)(IntensityMap{g.values});
    out.grid(tag + "_star_reconstruction.wpgd", est.values);
    std::vector<double> rec_flips;
    try {
      rec_flips = detect_discontinuities(est.values, cfg.star.periods, optics, r_lo, r_hi);
    } catch (const std::domain_error&) {
      // no fringe contrast in the reconstruction counts as no flips
    }
    j["reconstruction_flips"] = rec_flips;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen_data(const ExperimentConfig& cfg, const std::string& type, bool write_pgm) {
  Emitter out(cfg.output_dir);
  for (const std::string& t : type == "both" ? std::vector<std::string>{"texture", "glyph"}
                                             : std::vector<std::string>{type}) {
    auto m = make_dataset(cfg, t, t == "texture" ? 1 : 2);
    out.js(t + "_manifest.json", manifest_to_json(m));
    if (write_pgm) {
      for (const auto& e : m.entries) out.pgm(t + "/" + e.id + ".pgm", materialize(m, e));
    }
    std::cout << t << ": " << m.entries.size() << " images, grid " << m.descriptor.grid_n << "\n";
  }
  out.finish();
  return 0;
}

int cmd_entropy(const ExperimentConfig& cfg, const std::string& manifest_path,
                const std::string& type, int bins) {
  DatasetManifest m;
  if (!manifest_path.empty()) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open manifest " + manifest_path);
    m = manifest_from_json(json::parse(in));
  } else {
    m = make_dataset(cfg, type, type == "texture" ? 1 : 2);
  }
  auto rep = entropy_report(m, bins);
  Emitter out(cfg.output_dir);
  out.js("entropy_" + m.descriptor.type + ".json",
         json{{"n_images", m.entries.size()},
              {"n_bins", bins},
              {"mean_bits", rep.mean},
              {"std_dev_bits", rep.std_dev},
              {"histogram", rep.histogram}});
  out.finish();
  std::cout << m.descriptor.type << " entropy: mean " << rep.mean << " bits, std " << rep.std_dev
            << " bits over " << m.entries.size() << " images\n";
  return 0;
}

int cmd_simulate(const ExperimentConfig& cfg, const std::string& phase_path, bool star) {
  Emitter out(cfg.output_dir);
  OpticalConfig optics = cfg.optics;
  PhaseMap phase{RealGrid(optics.grid_n, optics.grid_n, 0.0)};
  if (star) {
    optics = cfg.star_optics;
    phase = make_star(cfg.star, optics);
  } else if (!phase_path.empty()) {
    if (phase_path.size() > 4 && phase_path.substr(phase_path.size() - 4) == ".pgm")
      phase = calibrate_to_phase(load_pgm(phase_path));
    else
      phase = PhaseMap{read_grid(phase_path)};
    if (phase.values.rows() != optics.grid_n)
      throw std::invalid_argument("simulate: phase grid does not match optics.grid_n");
  }
  std::cout << "fresnel sampling ratio lambda*z/(pitch^2*N) = " << optics.fresnel_sampling_ratio()
            << "\n";
  IntensityMap g = propagate(phase, optics);
  if (cfg.noise_sigma > 0) g = add_detector_noise(g, cfg.noise_sigma, derive_seed(cfg.seed, 7));
  out.grid("phase.wpgd", phase.values);
  out.grid("intensity.wpgd", g.values);
  out.finish();
  std::cout << "mean intensity " << grid_mean(g.values) << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& type) {
  Emitter out(cfg.output_dir);
  auto data = make_dataset(cfg, type, type == "texture" ? 1 : 2);
  out.js(type + "_manifest.json", manifest_to_json(data));
  auto model = train_domain(cfg, data, type == "texture" ? 10 : 20, out.path(type + "_net.wpnn"));
  out.bytes(type + "_net.wpnn", read_file_bytes(out.path(type + "_net.wpnn")));
  out.js(type + "_affine.json", affine_to_json(model.affine));
  out.js(type + "_loss.json", json{{"epoch_npcc", model.history.epoch_loss}});
  out.finish();
  std::cout << type << " final training NPCC " << model.history.epoch_loss.back() << "\n";
  return 0;
}

int cmd_reconstruct(const ExperimentConfig& cfg, const std::string& input,
                    const std::string& model_path, const std::string& affine_path,
                    const std::string& method, double eps) {
  Emitter out(cfg.output_dir);
  IntensityMap g{read_grid(input)};
  PhaseMap est{RealGrid(1, 1)};
  if (method == "tikhonov") {
    OpticalConfig optics = cfg.optics;
    optics.grid_n = g.values.rows();
    est = tikhonov_inverse(g, optics, eps);
  } else {
    if (model_path.empty())
      throw std::invalid_argument("reconstruct: --model required for the neural method");
    Network net = Network::load_checkpoint(model_path);
    std::pair<double, double> ab{1.0, 0.0};
    if (!affine_path.empty()) ab = affine_from_json_file(affine_path);
    est = neural_reconstruct(g, net, ab);
  }
  out.grid("phase_estimate.wpgd", est.values);
  out.finish();
  return 0;
}

int cmd_lwotf(const ExperimentConfig& cfg, const std::string& model_path,
              const std::string& affine_path, const std::string& method, double eps) {
  Emitter out(cfg.output_dir);
  auto tex = make_dataset(cfg, "texture", 1);
  auto gly = make_dataset(cfg, "glyph", 2);
  auto meas = mixed_test_measurements(cfg, tex, gly);

  std::function<PhaseMap(const IntensityMap&)> recon;
  std::string tag;
  if (method == "tikhonov") {
    recon = [&cfg, eps](const IntensityMap& m) { return tikhonov_inverse(m, cfg.optics, eps); };
    tag = "oracle";
  } else {
    if (model_path.empty())
      throw std::invalid_argument("lwotf: --model required for the neural method");
    auto net = std::make_shared<Network>(Network::load_checkpoint(model_path));
    std::pair<double, double> ab{1.0, 0.0};
    if (!affine_path.empty()) ab = affine_from_json_file(affine_path);
    recon = [net, ab](const IntensityMap& m) { return neural_reconstruct(m, *net, ab); };
    tag = fs::path(model_path).stem().string();
  }
  json j = lwotf_run(cfg, out, tag, recon, meas);
  out.js(tag + "_lwotf.json", j);
  out.finish();
  std::cout << tag << " LWOTF RMSE vs theory (below first null): " << j["rmse_vs_theory"] << "\n";
  return 0;
}

int cmd_star_test(const ExperimentConfig& cfg, const std::string& model_path,
                  const std::string& affine_path) {
  Emitter out(cfg.output_dir);
  std::unique_ptr<std::function<PhaseMap(const IntensityMap&)>> recon_ptr;
  if (!model_path.empty()) {
    auto net = std::make_shared<Network>(Network::load_checkpoint(model_path));
    std::pair<double, double> ab{1.0, 0.0};
    if (!affine_path.empty()) ab = affine_from_json_file(affine_path);
    recon_ptr = std::make_unique<std::function<PhaseMap(const IntensityMap&)>>(
        [net, ab](const IntensityMap& m) { return neural_reconstruct(m, *net, ab); });
  }
  json j1 = star_run(cfg, out, "z1", cfg.star_optics.defocus, recon_ptr.get());
  json j2 = star_run(cfg, out, "z2", 2.0 * cfg.star_optics.defocus, recon_ptr.get());
  out.js("star_test.json", json{{"base", j1}, {"doubled_z", j2}});
  out.finish();
  auto print = [](const char* tag, const json& jj) {
    std::cout << tag << " predicted:";
    for (double r : jj["predicted_radii_in_band"]) std::cout << " " << r;
    std::cout << "\n" << tag << " detected :";
    for (double r : jj["detected_radii"]) std::cout << " " << r;
    std::cout << "\n";
  };
  print("z1", j1);
  print("z2", j2);
  return 0;
}

int cmd_register(const ExperimentConfig& cfg, const std::string& moving_path,
                 const std::string& fixed_path) {
  Emitter out(cfg.output_dir);
  Image8 moving = load_pgm(moving_path);
  Image8 fixed = load_pgm(fixed_path);
  RealGrid mg(moving.pixels.rows(), moving.pixels.cols());
  RealGrid fg(fixed.pixels.rows(), fixed.pixels.cols());
  for (size_t i = 0; i < mg.size(); ++i) mg.data()[i] = double(moving.pixels.data()[i]);
  for (size_t i = 0; i < fg.size(); ++i) fg.data()[i] = double(fixed.pixels.data()[i]);
  auto p = register_affine(mg, fg);
  RealGrid warped = warp_affine(mg, p);
  json j{{"a11", p.a11}, {"a12", p.a12}, {"a21", p.a21}, {"a22", p.a22},
         {"tx", p.tx},   {"ty", p.ty},   {"nmi", nmi(warped, fg)}};
  out.js("registration.json", j);
  Image8 warped_img{ByteGrid(warped.rows(), warped.cols())};
  for (size_t i = 0; i < warped.size(); ++i)
    warped_img.pixels.data()[i] = uint8_t(std::clamp(std::lround(warped.data()[i]), 0l, 255l));
  out.pgm("warped.pgm", warped_img);
  out.finish();
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::vector<std::string>& model_specs,
                 bool include_oracle, double eps) {
  Emitter out(cfg.output_dir);
  auto tex = make_dataset(cfg, "texture", 1);
  auto gly = make_dataset(cfg, "glyph", 2);
  std::vector<const DatasetManifest*> tests{&tex, &gly};

  std::vector<EvalModel> models;
  for (const auto& spec : model_specs) {
    // "name=checkpoint.wpnn[:affine.json]"
    auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("model spec must be name=checkpoint[:affine_json]");
    std::string name = spec.substr(0, eq);
    std::string rest = spec.substr(eq + 1);
    auto colon = rest.find(':');
    std::string ckpt = colon == std::string::npos ? rest : rest.substr(0, colon);
    std::pair<double, double> ab{1.0, 0.0};
    if (colon != std::string::npos) ab = affine_from_json_file(rest.substr(colon + 1));
    auto net = std::make_shared<Network>(Network::load_checkpoint(ckpt));
    models.push_back(
        {name, [net, ab](const IntensityMap& g) { return neural_reconstruct(g, *net, ab); }});
  }
  if (include_oracle)
    models.push_back(calibrated_model(
        "oracle",
        [&cfg, eps](const IntensityMap& g) { return tikhonov_inverse(g, cfg.optics, eps); },
        tests, cfg.optics));
  if (models.empty()) throw std::invalid_argument("evaluate: no models given");

  auto table = cross_domain_matrix(models, tests, cfg.optics);
  out.bytes("cross_domain.csv", score_table_to_csv(table));
  out.bytes("cross_domain.txt", score_table_to_text(table));
  out.finish();
  std::cout << score_table_to_text(table);
  return 0;
}

int cmd_reproduce(const ExperimentConfig& cfg) {
  Emitter out(cfg.output_dir);
  std::cout << "[1/5] generating entropy-controlled datasets\n";
  auto tex = make_dataset(cfg, "texture", 1);
  auto gly = make_dataset(cfg, "glyph", 2);
  out.js("texture_manifest.json", manifest_to_json(tex));
  out.js("glyph_manifest.json", manifest_to_json(gly));
  auto rep_tex = entropy_report(tex);
  auto rep_gly = entropy_report(gly);
  std::cout << "  texture entropy " << rep_tex.mean << " bits, glyph entropy " << rep_gly.mean
            << " bits\n";

  std::cout << "[2/5] training one reconstructor per domain (" << cfg.train.epochs
            << " epochs each)\n";
  auto m_tex = train_domain(cfg, tex, 10, out.path("texture_net.wpnn"));
  std::cout << "  texture net final training NPCC " << m_tex.history.epoch_loss.back() << "\n";
  auto m_gly = train_domain(cfg, gly, 20, out.path("glyph_net.wpnn"));
  std::cout << "  glyph net final training NPCC " << m_gly.history.epoch_loss.back() << "\n";
  out.bytes("texture_net.wpnn", read_file_bytes(out.path("texture_net.wpnn")));
  out.bytes("glyph_net.wpnn", read_file_bytes(out.path("glyph_net.wpnn")));
  out.js("texture_affine.json", affine_to_json(m_tex.affine));
  out.js("glyph_affine.json", affine_to_json(m_gly.affine));
  out.js("texture_loss.json", json{{"epoch_npcc", m_tex.history.epoch_loss}});
  out.js("glyph_loss.json", json{{"epoch_npcc", m_gly.history.epoch_loss}});

  std::cout << "[3/5] cross-domain evaluation\n";
  auto net_tex = m_tex.net;
  auto ab_tex = m_tex.affine;
  auto net_gly = m_gly.net;
  auto ab_gly = m_gly.affine;
  std::vector<EvalModel> models;
  models.push_back({"texture-net", [net_tex, ab_tex](const IntensityMap& g) {
                      return neural_reconstruct(g, *net_tex, ab_tex);
                    }});
  models.push_back({"glyph-net", [net_gly, ab_gly](const IntensityMap& g) {
                      return neural_reconstruct(g, *net_gly, ab_gly);
                    }});
  std::vector<const DatasetManifest*> tests{&tex, &gly};
  models.push_back(calibrated_model(
      "oracle", [&cfg](const IntensityMap& g) { return tikhonov_inverse(g, cfg.optics, 1e-3); },
      tests, cfg.optics));
  auto table = cross_domain_matrix(models, tests, cfg.optics);
  out.bytes("cross_domain.csv", score_table_to_csv(table));
  out.bytes("cross_domain.txt", score_table_to_text(table));
  std::cout << score_table_to_text(table);
  double tex_on_gly = table.cells[1][0].pcc_mean;
  double gly_on_tex = table.cells[0][1].pcc_mean;

  std::cout << "[4/5] learned transfer function extraction\n";
  auto meas = mixed_test_measurements(cfg, tex, gly);
  json lw_tex = lwotf_run(
      cfg, out, "texture",
      [net_tex, ab_tex](const IntensityMap& g) { return neural_reconstruct(g, *net_tex, ab_tex); },
      meas);
  json lw_gly = lwotf_run(
      cfg, out, "glyph",
      [net_gly, ab_gly](const IntensityMap& g) { return neural_reconstruct(g, *net_gly, ab_gly); },
      meas);
  // theory cross-section alongside, for plotting
  auto w = wotf::wotf(cfg.optics);
  RealGrid theory(cfg.optics.grid_n, cfg.optics.grid_n);
  for (size_t i = 0; i < theory.size(); ++i) theory.data()[i] = 2.0 * w.values.data()[i];
  out.bytes("theory_diagonal.csv", profile_to_csv(diagonal_profile(theory, w.freq_step)));
  std::cout << "  LWOTF RMSE below first null: texture-net " << lw_tex["rmse_vs_theory"]
            << ", glyph-net " << lw_gly["rmse_vs_theory"] << "\n";

  std::cout << "[5/5] star-pattern null test\n";
  json star = star_run(cfg, out, "star", cfg.star_optics.defocus, nullptr);

  json summary{
      {"optics", optics_to_json(cfg.optics)},
      {"seed", cfg.seed},
      {"entropy", {{"texture_mean_bits", rep_tex.mean}, {"glyph_mean_bits", rep_gly.mean}}},
      {"training",
       {{"texture_final_npcc", m_tex.history.epoch_loss.back()},
        {"glyph_final_npcc", m_gly.history.epoch_loss.back()}}},
      {"cross_domain",
       {{"texture_net_on_glyph_pcc", tex_on_gly},
        {"glyph_net_on_texture_pcc", gly_on_tex},
        {"asymmetry", tex_on_gly - gly_on_tex}}},
      {"lwotf",
       {{"texture_net_rmse", lw_tex["rmse_vs_theory"]},
        {"glyph_net_rmse", lw_gly["rmse_vs_theory"]}}},
      {"star", star}};
  out.js("summary.json", summary);
  out.finish();
  std::cout << "asymmetry (texture-net on glyphs minus glyph-net on textures): "
            << tex_on_gly - gly_on_tex << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wotfprobe: lensless phase imaging simulation and learned-transfer diagnostics"};
  app.require_subcommand(1);

  std::string config_path, scale = "desk", out_dir;
  uint64_t seed_override = 0;
  app.add_option("--config", config_path, "experiment config JSON");
  app.add_option("--scale", scale, "preset scale")->check(CLI::IsMember({"desk", "paper"}));
  auto* seed_opt = app.add_option("--seed", seed_override, "global seed override");
  app.add_option("--out", out_dir, "output directory override");

  auto* gen = app.add_subcommand("gen-data", "generate entropy-controlled datasets");
  std::string gen_type = "both";
  bool gen_pgm = false;
  gen->add_option("--type", gen_type)->check(CLI::IsMember({"texture", "glyph", "both"}));
  gen->add_flag("--write-pgm", gen_pgm, "also write every image as PGM");

  auto* ent = app.add_subcommand("entropy", "per-image Shannon entropy report");
  std::string ent_manifest, ent_type = "glyph";
  int ent_bins = 1000;
  ent->add_option("--manifest", ent_manifest, "dataset manifest JSON");
  ent->add_option("--type", ent_type)->check(CLI::IsMember({"texture", "glyph"}));
  ent->add_option("--bins", ent_bins);

  auto* sim = app.add_subcommand("simulate", "forward-model simulation");
  std::string sim_phase;
  bool sim_star = false;
  sim->add_option("--phase", sim_phase, "phase input (.wpgd radians or .pgm calibrated)");
  sim->add_flag("--star", sim_star, "simulate the configured star pattern");

  auto* trn = app.add_subcommand("train", "train a reconstructor on one domain");
  std::string trn_type = "texture";
  trn->add_option("--type", trn_type)->check(CLI::IsMember({"texture", "glyph"}));

  auto* rec = app.add_subcommand("reconstruct", "reconstruct a phase from an intensity grid");
  std::string rec_input, rec_model, rec_affine, rec_method = "neural";
  double rec_eps = 1e-3;
  rec->add_option("--input", rec_input)->required();
  rec->add_option("--model", rec_model, "network checkpoint (.wpnn)");
  rec->add_option("--affine", rec_affine, "affine correction JSON");
  rec->add_option("--method", rec_method)->check(CLI::IsMember({"neural", "tikhonov"}));
  rec->add_option("--eps", rec_eps, "Tikhonov regularization");

  auto* lw = app.add_subcommand("lwotf", "extract the learned transfer function");
  std::string lw_model, lw_affine, lw_method = "neural";
  double lw_eps = 1e-3;
  lw->add_option("--model", lw_model);
  lw->add_option("--affine", lw_affine);
  lw->add_option("--method", lw_method)->check(CLI::IsMember({"neural", "tikhonov"}));
  lw->add_option("--eps", lw_eps);

  auto* star = app.add_subcommand("star-test", "star-pattern discontinuity test");
  std::string star_model, star_affine;
  star->add_option("--model", star_model, "optionally reconstruct with this checkpoint");
  star->add_option("--affine", star_affine);

  auto* reg = app.add_subcommand("register", "affine registration of two PGM images");
  std::string reg_moving, reg_fixed;
  reg->add_option("--moving", reg_moving)->required();
  reg->add_option("--fixed", reg_fixed)->required();

  auto* ev = app.add_subcommand("evaluate", "cross-domain generalization matrix");
  std::vector<std::string> ev_models;
  bool ev_oracle = false;
  double ev_eps = 1e-3;
  ev->add_option("--model", ev_models, "name=checkpoint[:affine_json] (repeatable)");
  ev->add_flag("--oracle", ev_oracle, "include the calibrated linear-inverse row");
  ev->add_option("--eps", ev_eps);

  auto* rep = app.add_subcommand("reproduce", "full pipeline: data, training, diagnostics");
  (void)rep;

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = load_config(config_path, scale);
    if (seed_opt->count() > 0) cfg.seed = seed_override;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    validate(cfg);

    if (*gen) return cmd_gen_data(cfg, gen_type, gen_pgm);
    if (*ent) return cmd_entropy(cfg, ent_manifest, ent_type, ent_bins);
    if (*sim) return cmd_simulate(cfg, sim_phase, sim_star);
    if (*trn) return cmd_train(cfg, trn_type);
    if (*rec) return cmd_reconstruct(cfg, rec_input, rec_model, rec_affine, rec_method, rec_eps);
    if (*lw) return cmd_lwotf(cfg, lw_model, lw_affine, lw_method, lw_eps);
    if (*star) return cmd_star_test(cfg, star_model, star_affine);
    if (*reg) return cmd_register(cfg, reg_moving, reg_fixed);
    if (*ev) return cmd_evaluate(cfg, ev_models, ev_oracle, ev_eps);
    if (*rep) return cmd_reproduce(cfg);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"what", e.what()}}}}.dump() << "\n";
    return 1;
  }
}
