#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "assim/core.hpp"
#include "assim/metrics.hpp"
#include "assim/rforest.hpp"

namespace assim {

/// Differences between every unordered pair of members. Row r holds
/// member i2 minus member i1 with i2 < i1; rows run over i1 = 1..n_e-1 and,
/// within each i1, over i2 = 0..i1-1.
struct DifferenceDataset {
  FeatureMatrix delta_lnK;  // n_e' x n_p
  FeatureMatrix delta_h;    // n_e' x n_o
  std::vector<std::pair<int, int>> pairs;  // row -> (i2, i1)

  std::size_t rows() const { return pairs.size(); }
  /// Row of the unordered pair {a, b}; a != b.
  static std::size_t row_of(int a, int b);
};

/// n_e (n_e - 1) / 2.
std::size_t difference_count(std::size_t n_e);

/// `h_at_obs` is n_o x n_e with column i the forecast of member i.
DifferenceDataset build_difference_dataset(const Ensemble& lnK, const Eigen::MatrixXd& h_at_obs);

struct LocalizationSpec {
  double range = 12.0;  // cut-off distance a, m
  LocalizationForm form = LocalizationForm::Gaussian;
  double floor = 1e-6;
  QueryWeighting query = QueryWeighting::Raw;

  void validate() const;
};

/// max(floor, exp(-3 r^2 / a^2)), or max(floor, 1 - exp(-r^2 / (3 a))) for the literal form.
double localization_weight(double r, const LocalizationSpec& spec);

/// dh_k / lambda(r_jk) for every observation k, r measured from cell j.
std::vector<double> weight_head_differences(std::span<const double> delta_h, std::size_t cell,
                                            const ObservationNetwork& network, const GridSpec& grid,
                                            const LocalizationSpec& spec);

/// One assimilation step's shared state: the difference dataset with its
/// head differences presorted once, plus the members' innovations.
class ErffStep {
 public:
  ErffStep(const Ensemble& lnK, const Eigen::MatrixXd& h_at_obs, const Eigen::VectorXd& y_obs,
           const ObservationNetwork& network, const LocalizationSpec& spec, const ForestHyperparams& hp, int step);

  const DifferenceDataset& dataset() const { return data_; }
  std::size_t members() const { return static_cast<std::size_t>(innovation_.cols()); }

  /// Forest for `cell` trained on the given targets (one per dataset row).
  Forest forest(std::size_t cell, std::span<const double> targets) const;

  /// Query vector of member i at `cell`.
  std::vector<double> query(std::size_t cell, std::size_t member) const;

  /// Correction of every member at `cell` from a forest on `targets`.
  std::vector<double> corrections(std::size_t cell, std::span<const double> targets) const;
  /// Same with the cell's own log-conductivity differences as targets.
  std::vector<double> corrections(std::size_t cell) const;

 private:
  GridSpec grid_;
  std::vector<std::size_t> obs_cells_;
  LocalizationSpec spec_;
  ForestHyperparams hp_;
  int step_;
  DifferenceDataset data_;
  PresortedFeatures presorted_;
  Eigen::MatrixXd innovation_;  // n_o x n_e, y_obs - forecast
};

Ensemble erff_update(const Ensemble& lnK, const Eigen::MatrixXd& h_at_obs, const Eigen::VectorXd& y_obs,
                     const ObservationNetwork& network, const LocalizationSpec& spec, const ForestHyperparams& hp,
                     int step = 0, int threads = 1);

LocalizationSpec localization_from(const ScenarioConfig& cfg);
ForestHyperparams forest_from(const ScenarioConfig& cfg);

struct ScenarioInputs;

AssimilationResult run_erff(const ScenarioInputs& inputs, int threads = 1);

}  // namespace assim
