#pragma once

#include <map>
#include <string>
#include <vector>

#include "assim/core.hpp"

namespace assim {

enum class Phase { Initial, Assimilation, Validation };
std::string to_string(Phase p);

struct StepMetrics {
  int step = 0;
  Phase phase = Phase::Initial;
  double rmse = 0.0;
  double asd = 0.0;
};

struct FieldSnapshot {
  CellField mean;
  CellField variance;
};

/// Head curves at the control points, one row per time step 1..total_steps.
struct ControlPointTable {
  std::vector<Cell> points;
  std::vector<int> steps;
  // [row][point]
  std::vector<std::vector<double>> reference;
  std::vector<std::vector<double>> initial_mean;
  std::vector<std::vector<double>> final_mean;
  std::vector<std::string> warnings;

  std::size_t rows() const { return steps.size(); }
};

struct AssimilationResult {
  ScenarioConfig config;
  std::vector<StepMetrics> metrics;         // steps 0..total_steps
  std::map<int, FieldSnapshot> snapshots;   // at the configured checkpoints
  std::map<int, double> mean_correlation;   // Pearson(mean, reference) at checkpoints
  ControlPointTable control;
  CellField reference;
  Ensemble final_ensemble;
  double max_mass_balance_residual = 0.0;
  std::map<std::string, double> phase_seconds;

  const StepMetrics& at_step(int step) const { return metrics.at(static_cast<std::size_t>(step)); }
};

/// sqrt(mean over members and cells of (x - x_ref)^2).
double rmse(const Ensemble& ensemble, const CellField& reference);

/// Mean over cells of the per-cell sample standard deviation (n_e - 1 normalization).
double asd(const Ensemble& ensemble);

CellField ensemble_mean(const Ensemble& ensemble);
CellField ensemble_variance(const Ensemble& ensemble);

/// (reference - mean) / scenario_std, per cell.
CellField standardized_discrepancy(const CellField& mean_field, const CellField& reference, double scenario_std);

double pearson_correlation(const CellField& a, const CellField& b);

/// Per-step reference, initial-ensemble mean and final-ensemble mean heads.
/// Inputs are indexed [member][step][point] for the ensembles and
/// [step][point] for the reference, with step 0 the initial condition.
ControlPointTable control_point_series(const std::vector<Cell>& points, const ObservationNetwork& network,
                                       const std::vector<std::vector<double>>& reference_heads,
                                       const std::vector<std::vector<std::vector<double>>>& initial_heads,
                                       const std::vector<std::vector<std::vector<double>>>& final_heads);

}  // namespace assim
