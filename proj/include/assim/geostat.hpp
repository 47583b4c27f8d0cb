#pragma once

#include <cstdint>

#include "assim/core.hpp"

namespace assim {

/// Spherical variogram with geometric anisotropy. Azimuth is measured in
/// degrees counterclockwise from east and gives the major-axis direction.
struct VariogramModel {
  double sill = 1.0;
  double max_range = 20.0;
  double min_range = 10.0;
  double azimuth_deg = 30.0;

  void validate() const;
};

/// Lag normalized so that 1 falls exactly on the anisotropic range ellipse.
double anisotropic_lag(double dxv, double dyv, const VariogramModel& v);

double spherical_covariance(double h_norm, double sill);

/// Unconditional Gaussian field by dense Cholesky factorization of the
/// cell-center covariance. The variogram's sill is replaced by std^2.
CellField generate_reference_field(const GridSpec& grid, double mean, double std, const VariogramModel& v,
                                   std::uint64_t seed);

/// n_e spatially constant fields whose levels are iid Gaussian(mean, std^2).
Ensemble generate_initial_ensemble(const GridSpec& grid, int n_e, double mean, double std, std::uint64_t seed);

}  // namespace assim
