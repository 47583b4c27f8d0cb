#include "assim/assimilation.hpp"

#include <algorithm>
#include <chrono>
#include <mutex>
#include <string>

#include "assim/parallel.hpp"

namespace assim {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Heads at `cells` for every step 0..n_steps of every member: [member][step][point].
std::vector<std::vector<std::vector<double>>> member_head_series(const FlowProblem& problem, const Ensemble& lnK,
                                                                 const std::vector<std::size_t>& cells, int n_steps,
                                                                 int threads, double& worst) {
  std::vector<std::vector<std::vector<double>>> out(lnK.size());
  std::vector<double> balance(lnK.size(), 0.0);
  parallel_for(lnK.size(), threads, [&](std::size_t i) {
    const TransientSolver solver(problem, lnK[i]);
    auto& series = out[i];
    series.reserve(static_cast<std::size_t>(n_steps) + 1);
    balance[i] = solver.run(n_steps, [&](int, const CellField& h) {
      std::vector<double> row(cells.size());
      for (std::size_t p = 0; p < cells.size(); ++p) row[p] = h[cells[p]];
      series.push_back(std::move(row));
    });
  });
  for (double b : balance) worst = std::max(worst, b);
  return out;
}

}  // namespace

Eigen::MatrixXd forecast_at_observations(const FlowProblem& problem, const Ensemble& lnK,
                                         const ObservationNetwork& network, int step, int threads,
                                         double* worst_mass_balance) {
  const auto obs = network.indices(lnK.grid());
  Eigen::MatrixXd y(static_cast<Eigen::Index>(obs.size()), static_cast<Eigen::Index>(lnK.size()));
  std::vector<double> balance(lnK.size(), 0.0);
  parallel_for(lnK.size(), threads, [&](std::size_t i) {
    const TransientSolver solver(problem, lnK[i]);
    balance[i] = solver.run(step, [&](int t, const CellField& h) {
      if (t != step) return;
      for (std::size_t k = 0; k < obs.size(); ++k)
        y(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = h[obs[k]];
    });
  });
  if (worst_mass_balance) {
    for (double b : balance) *worst_mass_balance = std::max(*worst_mass_balance, b);
  }
  return y;
}

AssimilationResult run_restart_loop(const ScenarioInputs& inputs, const ParameterUpdate& update, int threads) {
  const ScenarioConfig& cfg = inputs.config;
  const int n_assim = cfg.assimilation_steps;
  const int n_total = cfg.total_steps;
  if (static_cast<int>(inputs.observations.size()) < n_assim)
    throw std::invalid_argument("fewer observation vectors than assimilation steps");
  if (inputs.reference_heads.steps() < n_total) throw std::invalid_argument("reference head series is too short");

  AssimilationResult result;
  result.config = cfg;
  result.reference = inputs.reference;
  result.max_mass_balance_residual = inputs.reference_heads.max_mass_balance_residual;

  std::vector<std::size_t> control_cells;
  for (const auto& c : inputs.control_points) control_cells.push_back(cell_index(c, cfg.grid));

  auto record = [&](int step, Phase phase, const Ensemble& ens) {
    result.metrics.push_back({step, phase, rmse(ens, inputs.reference), asd(ens)});
    if (inputs.on_step && phase != Phase::Validation) inputs.on_step(result.metrics.back());
  };
  auto snapshot = [&](int step, const Ensemble& ens) {
    if (std::find(cfg.checkpoints.begin(), cfg.checkpoints.end(), step) == cfg.checkpoints.end()) return;
    FieldSnapshot s{ensemble_mean(ens), ensemble_variance(ens)};
    result.mean_correlation[step] = pearson_correlation(s.mean, inputs.reference);
    result.snapshots[step] = std::move(s);
  };

  auto t0 = Clock::now();
  const auto initial_heads = member_head_series(inputs.problem, inputs.initial_ensemble, control_cells, n_total, threads,
                                                result.max_mass_balance_residual);
  result.phase_seconds["initial_forecast"] = seconds_since(t0);

  Ensemble current = inputs.initial_ensemble;
  record(0, Phase::Initial, current);
  snapshot(0, current);

  double forecast_s = 0.0;
  double update_s = 0.0;
  for (int t = 1; t <= n_assim; ++t) {
    t0 = Clock::now();
    const Eigen::MatrixXd forecast =
        forecast_at_observations(inputs.problem, current, inputs.network, t, threads, &result.max_mass_balance_residual);
    forecast_s += seconds_since(t0);

    t0 = Clock::now();
    current = update(current, forecast, inputs.observations[static_cast<std::size_t>(t - 1)], t);
    update_s += seconds_since(t0);

    record(t, Phase::Assimilation, current);
    snapshot(t, current);
  }
  result.phase_seconds["forecast"] = forecast_s;
  result.phase_seconds["update"] = update_s;

  t0 = Clock::now();
  const auto final_heads =
      member_head_series(inputs.problem, current, control_cells, n_total, threads, result.max_mass_balance_residual);
  for (int t = n_assim + 1; t <= n_total; ++t) {
    record(t, Phase::Validation, current);
    snapshot(t, current);
  }
  result.phase_seconds["validation"] = seconds_since(t0);

  std::vector<std::vector<double>> reference_heads;
  reference_heads.reserve(static_cast<std::size_t>(n_total) + 1);
  for (int t = 0; t <= n_total; ++t) {
    std::vector<double> row;
    for (std::size_t c : control_cells) row.push_back(inputs.reference_heads.at(t)[c]);
    reference_heads.push_back(std::move(row));
  }
  result.control =
      control_point_series(inputs.control_points, inputs.network, reference_heads, initial_heads, final_heads);
  result.final_ensemble = std::move(current);
  return result;
}

}  // namespace assim
