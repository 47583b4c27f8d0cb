#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace assim {

/// Raised for malformed configuration or invalid arguments.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a numerical kernel (factorization, linear solve) breaks down.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// (i, j) cell coordinates: i along x (west to east), j along y (south to north).
struct Cell {
  int i = 0;
  int j = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Regular rectangular grid. Flat ordering is row-major with x fastest.
struct GridSpec {
  int nx = 30;
  int ny = 10;
  double dx = 1.0;
  double dy = 1.0;

  GridSpec() = default;
  GridSpec(int nx_, int ny_, double dx_ = 1.0, double dy_ = 1.0);

  std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  bool contains(Cell c) const { return c.i >= 0 && c.i < nx && c.j >= 0 && c.j < ny; }
  void validate() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

std::size_t cell_index(int i, int j, const GridSpec& grid);
inline std::size_t cell_index(Cell c, const GridSpec& grid) { return cell_index(c.i, c.j, grid); }
Cell cell_coords(std::size_t index, const GridSpec& grid);

/// Euclidean distance between the centers of two cells, in meters.
double cell_distance(std::size_t p, std::size_t q, const GridSpec& grid);

/// One scalar per grid cell: log-conductivity ln(m/d) or head (m).
class CellField {
 public:
  CellField() = default;
  CellField(GridSpec grid, double fill = 0.0);
  CellField(GridSpec grid, std::vector<double> values);

  const GridSpec& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }

  double operator[](std::size_t k) const { return values_[k]; }
  double& operator[](std::size_t k) { return values_[k]; }
  double at(int i, int j) const { return values_[cell_index(i, j, grid_)]; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool all_finite() const;

 private:
  GridSpec grid_;
  std::vector<double> values_;
};

/// Ordered realizations sharing one grid.
class Ensemble {
 public:
  Ensemble() = default;
  explicit Ensemble(std::vector<CellField> members);

  std::size_t size() const { return members_.size(); }
  const GridSpec& grid() const { return members_.front().grid(); }
  const CellField& operator[](std::size_t k) const { return members_[k]; }
  CellField& operator[](std::size_t k) { return members_[k]; }
  const std::vector<CellField>& members() const { return members_; }

 private:
  std::vector<CellField> members_;
};

struct ObservationNetwork {
  std::vector<Cell> locations;
  double obs_error_std = 0.0;

  std::size_t size() const { return locations.size(); }
  std::vector<std::size_t> indices(const GridSpec& grid) const;
  void validate(const GridSpec& grid) const;
};

enum class Method { Erff, Renkf };
enum class LocalizationForm { Gaussian, Complement };
enum class QueryWeighting { Raw, Consistent };
// Distance tapers both Cxy and Cyy of the r-EnKF gain.
enum class GainLocalization { None, Distance };

std::string to_string(Method m);
std::string to_string(LocalizationForm f);
std::string to_string(QueryWeighting q);
std::string to_string(GainLocalization g);

/// Everything needed to reproduce one assimilation experiment. The first
/// block mirrors the scenario table; the rest are materialized defaults.
struct ScenarioConfig {
  std::string scenario_id = "S1";
  int n_o = 18;
  int n_e = 50;
  double reference_std = 1.7;
  double prior_mean = 4.0;
  int assimilation_steps = 26;
  int total_steps = 100;
  double localization_range = 12.0;
  Method method = Method::Erff;
  std::uint64_t seed = 20240101;

  // Prior spread of the homogeneous initial ensemble; negative means "same as reference_std".
  double prior_std = -1.0;
  double reference_mean = 4.0;
  std::optional<std::uint64_t> reference_seed;
  std::optional<std::string> reference_csv;

  GridSpec grid;
  double variogram_max_range = 20.0;
  double variogram_min_range = 10.0;
  double variogram_azimuth = 30.0;

  double storativity = 0.01;
  double thickness = 1.0;
  double total_time = 5.0;
  double east_flux = -200.0;
  bool east_flux_per_cell = false;

  double obs_error_std = 0.0;
  double enkf_obs_variance = 1e-4;
  bool perturb_observations = false;
  GainLocalization enkf_localization = GainLocalization::None;

  LocalizationForm localization_form = LocalizationForm::Gaussian;
  QueryWeighting query_weighting = QueryWeighting::Raw;
  double localization_floor = 1e-6;

  int n_trees = 120;
  int min_samples_split = 2;
  int min_samples_leaf = 3;
  double max_features_fraction = 0.65;
  std::uint64_t forest_seed = 10;

  std::vector<Cell> observation_locations;
  std::vector<Cell> control_points;
  std::vector<int> checkpoints{0, 10, 20, 26};

  double effective_prior_std() const { return prior_std < 0.0 ? reference_std : prior_std; }
  std::uint64_t effective_reference_seed() const;
  void validate() const;
};

/// Parses a scenario from JSON. Unknown keys raise ConfigError.
ScenarioConfig scenario_from_json(const nlohmann::json& doc);
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig load_scenario(const std::string& path);

}  // namespace assim
