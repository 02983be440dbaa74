#pragma once

#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wotfprobe/datasets.hpp"
#include "wotfprobe/network.hpp"
#include "wotfprobe/optics.hpp"
#include "wotfprobe/reconstruct.hpp"

namespace wotf {

/// Pearson correlation over all pixels; shares the statistic kernel with the
/// NPCC training loss, so pcc(x, y) == -npcc for the same pair.
inline double pcc(const RealGrid& est, const RealGrid& truth) {
  if (!est.same_shape(truth)) throw std::invalid_argument("pcc: shape mismatch");
  return pearson(est.data(), truth.data(), int64_t(est.size()));
}

/// Mean absolute pixel difference, in radians for phase maps.
inline double mae(const RealGrid& est, const RealGrid& truth) {
  if (!est.same_shape(truth)) throw std::invalid_argument("mae: shape mismatch");
  double acc = 0;
  for (size_t i = 0; i < est.size(); ++i) acc += std::abs(est.data()[i] - truth.data()[i]);
  return acc / double(est.size());
}

struct CellStats {
  double pcc_mean = 0, pcc_std = 0;
  double mae_mean = 0, mae_std = 0;
  int n = 0;
};

/// Cross-domain generalization matrix: rows are test datasets, columns are
/// models (reconstructors). Each cell aggregates the full test split of the
/// row's dataset.
struct ScoreTable {
  std::vector<std::string> model_ids;  // columns
  std::vector<std::string> test_ids;   // rows
  std::vector<std::vector<CellStats>> cells;  // [row][col]
};

struct EvalModel {
  std::string id;
  std::function<PhaseMap(const IntensityMap&)> reconstruct;
};

/// Wraps a base reconstructor with the affine scale correction fitted on the
/// validation splits of the given datasets (pooled pixels).
inline EvalModel calibrated_model(std::string id,
                                  std::function<PhaseMap(const IntensityMap&)> base,
                                  const std::vector<const DatasetManifest*>& fit_sets,
                                  const OpticalConfig& optics) {
  std::vector<PhaseMap> ests, truths;
  for (const auto* m : fit_sets)
    for (const auto* e : m->split_entries(Split::validation)) {
      PhaseMap truth = calibrate_to_phase(materialize(*m, *e));
      ests.push_back(base(propagate(truth, optics)));
      truths.push_back(std::move(truth));
    }
  auto ab = fit_affine_scale(ests, truths);
  return {std::move(id), [base = std::move(base), ab](const IntensityMap& g) {
            PhaseMap est = base(g);
            for (auto& v : est.values) v = ab.first * v + ab.second;
            return est;
          }};
}

inline ScoreTable cross_domain_matrix(const std::vector<EvalModel>& models,
                                      const std::vector<const DatasetManifest*>& test_sets,
                                      const OpticalConfig& optics) {
  optics.validate();
  if (models.empty() || test_sets.empty())
    throw std::invalid_argument("cross_domain_matrix: need at least one model and test set");
  ScoreTable table;
  for (const auto& m : models) table.model_ids.push_back(m.id);
  for (const auto* t : test_sets) table.test_ids.push_back(t->descriptor.type);
  for (const auto* manifest : test_sets) {
    auto entries = manifest->split_entries(Split::test);
    if (entries.empty())
      throw std::invalid_argument("cross_domain_matrix: empty test split in dataset '" +
                                  manifest->descriptor.type + "'");
    std::vector<PhaseMap> truths;
    std::vector<IntensityMap> meas;
    for (const auto* e : entries) {
      PhaseMap phase = calibrate_to_phase(materialize(*manifest, *e));
      meas.push_back(propagate(phase, optics));
      truths.push_back(std::move(phase));
    }
    std::vector<CellStats> row;
    for (const auto& model : models) {
      CellStats cell;
      std::vector<double> pccs, maes;
      for (size_t i = 0; i < meas.size(); ++i) {
        try {
          PhaseMap est = model.reconstruct(meas[i]);
          pccs.push_back(pcc(est.values, truths[i].values));
          maes.push_back(mae(est.values, truths[i].values));
        } catch (const std::exception& e) {
          throw std::runtime_error("cross_domain_matrix: cell (" + model.id + ", " +
                                   manifest->descriptor.type + ") failed on image " +
                                   entries[i]->id + ": " + e.what());
        }
      }
      cell.n = int(pccs.size());
      for (double v : pccs) cell.pcc_mean += v;
      for (double v : maes) cell.mae_mean += v;
      cell.pcc_mean /= cell.n;
      cell.mae_mean /= cell.n;
      for (double v : pccs) cell.pcc_std += (v - cell.pcc_mean) * (v - cell.pcc_mean);
      for (double v : maes) cell.mae_std += (v - cell.mae_mean) * (v - cell.mae_mean);
      cell.pcc_std = std::sqrt(cell.pcc_std / cell.n);  // population std across test images
      cell.mae_std = std::sqrt(cell.mae_std / cell.n);
      row.push_back(cell);
    }
    table.cells.push_back(std::move(row));
  }
  return table;
}

/// CSV schema: train_set, test_set, metric, mean, std, n.
inline std::string score_table_to_csv(const ScoreTable& t) {
  std::ostringstream ss;
  ss.precision(12);
  ss << "train_set,test_set,metric,mean,std,n\n";
  for (size_t r = 0; r < t.test_ids.size(); ++r)
    for (size_t c = 0; c < t.model_ids.size(); ++c) {
      const auto& cell = t.cells[r][c];
      ss << t.model_ids[c] << "," << t.test_ids[r] << ",pcc," << cell.pcc_mean << ","
         << cell.pcc_std << "," << cell.n << "\n";
      ss << t.model_ids[c] << "," << t.test_ids[r] << ",mae," << cell.mae_mean << ","
         << cell.mae_std << "," << cell.n << "\n";
    }
  return ss.str();
}

inline std::string score_table_to_text(const ScoreTable& t) {
  std::ostringstream ss;
  ss.precision(4);
  ss << "PCC (mean +- std)\n";
  ss << "test \\ model";
  for (const auto& id : t.model_ids) ss << "\t" << id;
  ss << "\n";
  for (size_t r = 0; r < t.test_ids.size(); ++r) {
    ss << t.test_ids[r];
    for (size_t c = 0; c < t.model_ids.size(); ++c)
      ss << "\t" << t.cells[r][c].pcc_mean << " +- " << t.cells[r][c].pcc_std;
    ss << "\n";
  }
  ss << "MAE (mean +- std)\n";
  ss << "test \\ model";
  for (const auto& id : t.model_ids) ss << "\t" << id;
  ss << "\n";
  for (size_t r = 0; r < t.test_ids.size(); ++r) {
    ss << t.test_ids[r];
    for (size_t c = 0; c < t.model_ids.size(); ++c)
      ss << "\t" << t.cells[r][c].mae_mean << " +- " << t.cells[r][c].mae_std;
    ss << "\n";
  }
  return ss.str();
}

}  // namespace wotf
