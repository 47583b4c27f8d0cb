#include "assim/geostat.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "assim/parallel.hpp"

namespace assim {

void VariogramModel::validate() const {
  if (!(sill > 0.0)) throw ConfigError("variogram sill must be positive");
  if (!(min_range > 0.0) || !(max_range >= min_range)) throw ConfigError("variogram needs max_range >= min_range > 0");
}

double anisotropic_lag(double dxv, double dyv, const VariogramModel& v) {
  const double theta = v.azimuth_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double along = (dxv * c + dyv * s) / v.max_range;
  const double across = (-dxv * s + dyv * c) / v.min_range;
  return std::hypot(along, across);
}

double spherical_covariance(double h_norm, double sill) {
  if (h_norm >= 1.0) return 0.0;
  return sill * (1.0 - 1.5 * h_norm + 0.5 * h_norm * h_norm * h_norm);
}

CellField generate_reference_field(const GridSpec& grid, double mean, double std, const VariogramModel& v,
                                   std::uint64_t seed) {
  grid.validate();
  if (!(std >= 0.0)) throw ConfigError("field standard deviation must be nonnegative");
  const std::size_t n = grid.size();
  if (n > 10000) throw ConfigError("grid too large for dense covariance factorization (limit 10^4 cells)");
  if (std == 0.0) return CellField(grid, mean);

  VariogramModel model = v;
  model.sill = std * std;
  model.validate();

  Eigen::MatrixXd cov(n, n);
  for (std::size_t p = 0; p < n; ++p) {
    const Cell a = cell_coords(p, grid);
    for (std::size_t q = 0; q <= p; ++q) {
      const Cell b = cell_coords(q, grid);
      const double h = anisotropic_lag((a.i - b.i) * grid.dx, (a.j - b.j) * grid.dy, model);
      const double c = spherical_covariance(h, model.sill);
      cov(p, q) = c;
      cov(q, p) = c;
    }
  }
  cov.diagonal().array() += 1e-10 * model.sill;

  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance matrix is not positive definite after jitter");

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (std::size_t k = 0; k < n; ++k) z(k) = normal(rng);
  const Eigen::VectorXd x = llt.matrixL() * z;

  CellField field(grid, mean);
  for (std::size_t k = 0; k < n; ++k) field[k] += x(k);
  return field;
}

Ensemble generate_initial_ensemble(const GridSpec& grid, int n_e, double mean, double std, std::uint64_t seed) {
  if (n_e < 2) throw ConfigError("n_e must be at least 2");
  if (!(std >= 0.0)) throw ConfigError("prior standard deviation must be nonnegative");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<CellField> members;
  members.reserve(n_e);
  for (int k = 0; k < n_e; ++k) members.emplace_back(grid, mean + std * normal(rng));
  return Ensemble(std::move(members));
}

}  // namespace assim
