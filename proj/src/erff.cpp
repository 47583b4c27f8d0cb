#include "assim/erff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "assim/assimilation.hpp"
#include "assim/parallel.hpp"

namespace assim {

std::size_t difference_count(std::size_t n_e) { return n_e * (n_e - 1) / 2; }

std::size_t DifferenceDataset::row_of(int a, int b) {
  if (a == b || a < 0 || b < 0) throw std::invalid_argument("pair needs two distinct members");
  const auto hi = static_cast<std::size_t>(std::max(a, b));
  const auto lo = static_cast<std::size_t>(std::min(a, b));
  return hi * (hi - 1) / 2 + lo;
}

DifferenceDataset build_difference_dataset(const Ensemble& lnK, const Eigen::MatrixXd& h_at_obs) {
  const std::size_t n_e = lnK.size();
  if (n_e < 2) throw std::invalid_argument("difference dataset needs at least 2 members");
  if (static_cast<std::size_t>(h_at_obs.cols()) != n_e)
    throw std::invalid_argument("forecast columns differ from ensemble size");
  const std::size_t n_p = lnK.grid().size();
  const auto n_o = static_cast<std::size_t>(h_at_obs.rows());
  const std::size_t rows = difference_count(n_e);

  DifferenceDataset d;
  d.delta_lnK = FeatureMatrix(rows, n_p);
  d.delta_h = FeatureMatrix(rows, n_o);
  d.pairs.reserve(rows);
  std::size_t r = 0;
  for (std::size_t i1 = 1; i1 < n_e; ++i1) {
    for (std::size_t i2 = 0; i2 < i1; ++i2, ++r) {
      d.pairs.emplace_back(static_cast<int>(i2), static_cast<int>(i1));
      for (std::size_t c = 0; c < n_p; ++c) d.delta_lnK(r, c) = lnK[i2][c] - lnK[i1][c];
      for (std::size_t k = 0; k < n_o; ++k) {
        d.delta_h(r, k) = h_at_obs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i2)) -
                          h_at_obs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i1));
      }
    }
  }
  return d;
}

void LocalizationSpec::validate() const {
  if (!(range > 0.0)) throw ConfigError("localization range must be positive");
  if (!(floor > 0.0) || floor > 1.0) throw ConfigError("localization floor must be in (0, 1]");
}

double localization_weight(double r, const LocalizationSpec& spec) {
  if (!(r >= 0.0)) throw std::invalid_argument("distance must be nonnegative");
  const double a = spec.range;
  const double raw = spec.form == LocalizationForm::Gaussian ? std::exp(-3.0 * r * r / (a * a))
                                                                    : 1.0 - std::exp(-r * r / (3.0 * a));
  return std::max(spec.floor, raw);
}

namespace {

std::vector<double> inverse_weights(std::size_t cell, const std::vector<std::size_t>& obs, const GridSpec& grid,
                                    const LocalizationSpec& spec) {
  std::vector<double> s(obs.size());
  for (std::size_t k = 0; k < obs.size(); ++k) s[k] = 1.0 / localization_weight(cell_distance(cell, obs[k], grid), spec);
  return s;
}

}  // namespace

std::vector<double> weight_head_differences(std::span<const double> delta_h, std::size_t cell,
                                            const ObservationNetwork& network, const GridSpec& grid,
                                            const LocalizationSpec& spec) {
  if (delta_h.size() != network.size()) throw std::invalid_argument("head difference length differs from network");
  if (cell >= grid.size()) throw std::out_of_range("cell outside grid");
  const auto s = inverse_weights(cell, network.indices(grid), grid, spec);
  std::vector<double> out(delta_h.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = delta_h[k] * s[k];
  return out;
}

ErffStep::ErffStep(const Ensemble& lnK, const Eigen::MatrixXd& h_at_obs, const Eigen::VectorXd& y_obs,
                   const ObservationNetwork& network, const LocalizationSpec& spec, const ForestHyperparams& hp,
                   int step)
    : grid_(lnK.grid()),
      obs_cells_(network.indices(lnK.grid())),
      spec_(spec),
      hp_(hp),
      step_(step),
      data_(build_difference_dataset(lnK, h_at_obs)),
      presorted_(data_.delta_h) {
  spec_.validate();
  hp_.validate();
  if (static_cast<std::size_t>(h_at_obs.rows()) != network.size())
    throw std::invalid_argument("forecast rows differ from network size");
  if (y_obs.size() != h_at_obs.rows()) throw std::invalid_argument("observation vector length differs from network");
  innovation_ = (-h_at_obs).colwise() + y_obs;
}

Forest ErffStep::forest(std::size_t cell, std::span<const double> targets) const {
  if (cell >= grid_.size()) throw std::out_of_range("cell outside grid");
  const auto scale = inverse_weights(cell, obs_cells_, grid_, spec_);
  ForestHyperparams hp = hp_;
  hp.seed = derive_seed(hp_.seed, cell, static_cast<std::uint64_t>(step_));
  return fit_forest(presorted_, scale, targets, hp);
}

std::vector<double> ErffStep::query(std::size_t cell, std::size_t member) const {
  std::vector<double> q(obs_cells_.size());
  for (std::size_t k = 0; k < q.size(); ++k)
    q[k] = innovation_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(member));
  if (spec_.query == QueryWeighting::Consistent) {
    const auto scale = inverse_weights(cell, obs_cells_, grid_, spec_);
    for (std::size_t k = 0; k < q.size(); ++k) q[k] *= scale[k];
  }
  return q;
}

std::vector<double> ErffStep::corrections(std::size_t cell, std::span<const double> targets) const {
  const Forest f = forest(cell, targets);
  std::vector<double> out(members());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f.predict(query(cell, i));
  return out;
}

std::vector<double> ErffStep::corrections(std::size_t cell) const {
  return corrections(cell, data_.delta_lnK.column(cell));
}

Ensemble erff_update(const Ensemble& lnK, const Eigen::MatrixXd& h_at_obs, const Eigen::VectorXd& y_obs,
                     const ObservationNetwork& network, const LocalizationSpec& spec, const ForestHyperparams& hp,
                     int step, int threads) {
  const ErffStep erff(lnK, h_at_obs, y_obs, network, spec, hp, step);
  const std::size_t n_p = lnK.grid().size();
  std::vector<std::vector<double>> delta(n_p);
  parallel_for(n_p, threads, [&](std::size_t cell) { delta[cell] = erff.corrections(cell); });

  Ensemble out = lnK;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t cell = 0; cell < n_p; ++cell) out[i][cell] += delta[cell][i];
  }
  return out;
}

LocalizationSpec localization_from(const ScenarioConfig& cfg) {
  LocalizationSpec spec;
  spec.range = cfg.localization_range;
  spec.form = cfg.localization_form;
  spec.floor = cfg.localization_floor;
  spec.query = cfg.query_weighting;
  return spec;
}

ForestHyperparams forest_from(const ScenarioConfig& cfg) {
  ForestHyperparams hp;
  hp.n_trees = cfg.n_trees;
  hp.min_samples_split = cfg.min_samples_split;
  hp.min_samples_leaf = cfg.min_samples_leaf;
  hp.max_features_fraction = cfg.max_features_fraction;
  hp.seed = cfg.forest_seed;
  return hp;
}

AssimilationResult run_erff(const ScenarioInputs& inputs, int threads) {
  const LocalizationSpec spec = localization_from(inputs.config);
  const ForestHyperparams hp = forest_from(inputs.config);
  const ParameterUpdate update = [&](const Ensemble& lnK, const Eigen::MatrixXd& forecast, const Eigen::VectorXd& y_obs,
                                     int step) {
    Ensemble next = erff_update(lnK, forecast, y_obs, inputs.network, spec, hp, step, threads);
    for (const auto& m : next.members()) {
      if (!m.all_finite()) throw NumericalError("ERFF update produced non-finite values at step " + std::to_string(step));
    }
    return next;
  };
  return run_restart_loop(inputs, update, threads);
}

}  // namespace assim
