#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "assim/core.hpp"
#include "assim/flow.hpp"
#include "assim/metrics.hpp"

namespace assim {

/// Everything a filter run needs, prepared once per scenario.
struct ScenarioInputs {
  ScenarioConfig config;
  CellField reference;
  ObservationNetwork network;
  FlowProblem problem;
  std::vector<Cell> control_points;
  HeadSeries reference_heads;                     // t = 0..total_steps
  std::vector<Eigen::VectorXd> observations;      // observations[t - 1] for t = 1..assimilation_steps
  Ensemble initial_ensemble;
  std::function<void(const StepMetrics&)> on_step;  // optional progress hook, called for steps 0..assimilation_steps
};

/// Member forecasts at the observation cells after `step` steps from the
/// initial condition; column i belongs to member i.
Eigen::MatrixXd forecast_at_observations(const FlowProblem& problem, const Ensemble& lnK,
                                         const ObservationNetwork& network, int step, int threads,
                                         double* worst_mass_balance = nullptr);

/// Parameter update for one assimilation step.
using ParameterUpdate =
    std::function<Ensemble(const Ensemble& lnK, const Eigen::MatrixXd& forecast, const Eigen::VectorXd& y_obs, int step)>;

/// Forecast-update loop over the assimilation steps, then a validation run of
/// the final ensemble to total_steps. Forecasts always restart from t = 0.
AssimilationResult run_restart_loop(const ScenarioInputs& inputs, const ParameterUpdate& update, int threads);

}  // namespace assim
