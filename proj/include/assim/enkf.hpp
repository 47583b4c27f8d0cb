#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Dense>

#include "assim/core.hpp"
#include "assim/flow.hpp"
#include "assim/metrics.hpp"

namespace assim {

struct EnsembleStats {
  Eigen::MatrixXd cxy;  // n_p x n_o
  Eigen::MatrixXd cyy;  // n_o x n_o
  Eigen::VectorXd x_mean;
  Eigen::VectorXd y_mean;
};

/// Sample covariances with 1/(n_e - 1) normalization. Columns are realizations.
EnsembleStats ensemble_covariances(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

/// K = Cxy (Cyy + R)^-1. A singular Cyy + R gets a diagonal jitter of
/// 1e-12 * trace / n_o before giving up with NumericalError.
Eigen::MatrixXd kalman_gain(const EnsembleStats& stats, const Eigen::MatrixXd& r);

/// Distance tapers multiplied elementwise into Cxy (parameter-observation)
/// and Cyy (observation-observation). Empty matrices mean no tapering.
struct CovarianceTaper {
  Eigen::MatrixXd xy;
  Eigen::MatrixXd yy;

  bool empty() const { return xy.size() == 0 && yy.size() == 0; }
};

/// rho = max(floor, exp(-3 r^2 / range^2)) between cell centers.
CovarianceTaper distance_taper(const GridSpec& grid, const ObservationNetwork& network, double range, double floor);

/// x_u,i = x_f,i + K (y_obs + eps_i - y_f,i). eps_i ~ N(0, R) is drawn only
/// when a seed is given and R is nonzero.
Eigen::MatrixXd enkf_update(const Eigen::MatrixXd& x_f, const Eigen::MatrixXd& y_f, const Eigen::VectorXd& y_obs,
                            const Eigen::MatrixXd& r, std::optional<std::uint64_t> perturbation_seed = std::nullopt,
                            const CovarianceTaper& taper = {});

/// Columns of the returned matrix are the members' fields.
Eigen::MatrixXd ensemble_matrix(const Ensemble& ensemble);
Ensemble ensemble_from_matrix(const Eigen::MatrixXd& x, const GridSpec& grid);

struct ScenarioInputs;

/// Restart EnKF: every forecast starts again from t = 0 with the current fields.
AssimilationResult run_renkf(const ScenarioInputs& inputs, int threads = 1);

}  // namespace assim
