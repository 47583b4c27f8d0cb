#include "assim/enkf.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "assim/assimilation.hpp"
#include "assim/erff.hpp"
#include "assim/parallel.hpp"

namespace assim {

EnsembleStats ensemble_covariances(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const Eigen::Index n_e = x.cols();
  if (n_e < 2) throw std::invalid_argument("ensemble covariances need at least 2 members");
  if (y.cols() != n_e) throw std::invalid_argument("parameter and prediction matrices have different member counts");
  EnsembleStats s;
  s.x_mean = x.rowwise().mean();
  s.y_mean = y.rowwise().mean();
  const Eigen::MatrixXd ax = x.colwise() - s.x_mean;
  const Eigen::MatrixXd ay = y.colwise() - s.y_mean;
  const double norm = 1.0 / static_cast<double>(n_e - 1);
  s.cxy = norm * ax * ay.transpose();
  s.cyy = norm * ay * ay.transpose();
  // Symmetric by construction, but rounding in the product is not guaranteed to be.
  s.cyy = 0.5 * (s.cyy + s.cyy.transpose()).eval();
  return s;
}

Eigen::MatrixXd kalman_gain(const EnsembleStats& stats, const Eigen::MatrixXd& r) {
  const Eigen::Index n_o = stats.cyy.rows();
  if (r.rows() != n_o || r.cols() != n_o) throw std::invalid_argument("R has the wrong shape");
  if (stats.cxy.cols() != n_o) throw std::invalid_argument("Cxy has the wrong shape");
  if (stats.cxy.isZero(0.0)) return Eigen::MatrixXd::Zero(stats.cxy.rows(), n_o);

  Eigen::MatrixXd c = stats.cyy + r;
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-12 * c.trace() / static_cast<double>(n_o);
    if (!(jitter > 0.0)) throw NumericalError("Cyy + R is singular and has no scale for a jitter");
    c.diagonal().array() += jitter;
    llt.compute(c);
    if (llt.info() != Eigen::Success) throw NumericalError("Cyy + R is singular even after diagonal jitter");
  }
  // K^T = C^-1 Cxy^T since C is symmetric.
  return llt.solve(stats.cxy.transpose()).transpose();
}

CovarianceTaper distance_taper(const GridSpec& grid, const ObservationNetwork& network, double range, double floor) {
  LocalizationSpec spec;
  spec.range = range;
  spec.floor = floor;
  spec.validate();
  const auto obs = network.indices(grid);
  const auto n_o = static_cast<Eigen::Index>(obs.size());
  CovarianceTaper t;
  t.xy.resize(static_cast<Eigen::Index>(grid.size()), n_o);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    for (std::size_t k = 0; k < obs.size(); ++k) {
      t.xy(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
          localization_weight(cell_distance(j, obs[k], grid), spec);
    }
  }
  t.yy.resize(n_o, n_o);
  for (std::size_t k = 0; k < obs.size(); ++k) {
    for (std::size_t l = 0; l < obs.size(); ++l) {
      t.yy(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) =
          localization_weight(cell_distance(obs[k], obs[l], grid), spec);
    }
  }
  return t;
}

Eigen::MatrixXd enkf_update(const Eigen::MatrixXd& x_f, const Eigen::MatrixXd& y_f, const Eigen::VectorXd& y_obs,
                            const Eigen::MatrixXd& r, std::optional<std::uint64_t> perturbation_seed,
                            const CovarianceTaper& taper) {
  if (y_f.cols() != x_f.cols()) throw std::invalid_argument("forecast parameter and prediction member counts differ");
  if (y_obs.size() != y_f.rows()) throw std::invalid_argument("observation vector length differs from predictions");
  EnsembleStats stats = ensemble_covariances(x_f, y_f);
  if (taper.xy.size() != 0) {
    if (taper.xy.rows() != stats.cxy.rows() || taper.xy.cols() != stats.cxy.cols())
      throw std::invalid_argument("Cxy taper has the wrong shape");
    stats.cxy = stats.cxy.cwiseProduct(taper.xy);
  }
  if (taper.yy.size() != 0) {
    if (taper.yy.rows() != stats.cyy.rows() || taper.yy.cols() != stats.cyy.cols())
      throw std::invalid_argument("Cyy taper has the wrong shape");
    stats.cyy = stats.cyy.cwiseProduct(taper.yy);
  }
  const Eigen::MatrixXd k = kalman_gain(stats, r);

  Eigen::MatrixXd innovation = (-y_f).colwise() + y_obs;
  if (perturbation_seed && !r.isZero(0.0)) {
    Eigen::LLT<Eigen::MatrixXd> chol(r);
    if (chol.info() != Eigen::Success) throw NumericalError("observation error covariance is not positive definite");
    const Eigen::MatrixXd l = chol.matrixL();
    Rng rng(*perturbation_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(y_obs.size());
    for (Eigen::Index i = 0; i < innovation.cols(); ++i) {
      for (Eigen::Index o = 0; o < z.size(); ++o) z(o) = normal(rng);
      innovation.col(i) += l * z;
    }
  }
  return x_f + k * innovation;
}

Eigen::MatrixXd ensemble_matrix(const Ensemble& ensemble) {
  const auto n_p = static_cast<Eigen::Index>(ensemble.grid().size());
  Eigen::MatrixXd x(n_p, static_cast<Eigen::Index>(ensemble.size()));
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(ensemble[i].values().data(), n_p);
  }
  return x;
}

Ensemble ensemble_from_matrix(const Eigen::MatrixXd& x, const GridSpec& grid) {
  if (x.rows() != static_cast<Eigen::Index>(grid.size())) throw std::invalid_argument("matrix rows differ from grid size");
  std::vector<CellField> members;
  members.reserve(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const auto col = x.col(i);
    members.emplace_back(grid, std::vector<double>(col.data(), col.data() + col.size()));
  }
  return Ensemble(std::move(members));
}

AssimilationResult run_renkf(const ScenarioInputs& inputs, int threads) {
  const ScenarioConfig& cfg = inputs.config;
  const auto n_o = static_cast<Eigen::Index>(inputs.network.size());
  const Eigen::MatrixXd r = Eigen::MatrixXd::Identity(n_o, n_o) * cfg.enkf_obs_variance;
  CovarianceTaper taper;
  if (cfg.enkf_localization == GainLocalization::Distance) {
    taper = distance_taper(cfg.grid, inputs.network, cfg.localization_range, cfg.localization_floor);
  }
  const ParameterUpdate update = [&](const Ensemble& lnK, const Eigen::MatrixXd& forecast, const Eigen::VectorXd& y_obs,
                                     int step) {
    std::optional<std::uint64_t> seed;
    if (cfg.perturb_observations) seed = derive_seed(cfg.seed, 0x656e6b66, static_cast<std::uint64_t>(step));
    const Eigen::MatrixXd x_u = enkf_update(ensemble_matrix(lnK), forecast, y_obs, r, seed, taper);
    if (!x_u.allFinite()) throw NumericalError("r-EnKF update produced non-finite values at step " + std::to_string(step));
    return ensemble_from_matrix(x_u, lnK.grid());
  };
  return run_restart_loop(inputs, update, threads);
}

}  // namespace assim
