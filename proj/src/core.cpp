#include "assim/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace assim {

GridSpec::GridSpec(int nx_, int ny_, double dx_, double dy_) : nx(nx_), ny(ny_), dx(dx_), dy(dy_) {
  validate();
}

void GridSpec::validate() const {
  if (nx < 1 || ny < 1) throw ConfigError("grid needs nx >= 1 and ny >= 1");
  if (!(dx > 0.0) || !(dy > 0.0)) throw ConfigError("grid cell sizes must be positive");
}

std::size_t cell_index(int i, int j, const GridSpec& grid) {
  if (i < 0 || i >= grid.nx || j < 0 || j >= grid.ny) {
    std::ostringstream msg;
    msg << "cell (" << i << ", " << j << ") outside " << grid.nx << "x" << grid.ny << " grid";
    throw std::out_of_range(msg.str());
  }
  return static_cast<std::size_t>(j) * static_cast<std::size_t>(grid.nx) + static_cast<std::size_t>(i);
}

Cell cell_coords(std::size_t index, const GridSpec& grid) {
  if (index >= grid.size()) throw std::out_of_range("flat cell index outside grid");
  const auto nx = static_cast<std::size_t>(grid.nx);
  return {static_cast<int>(index % nx), static_cast<int>(index / nx)};
}

double cell_distance(std::size_t p, std::size_t q, const GridSpec& grid) {
  const Cell a = cell_coords(p, grid);
  const Cell b = cell_coords(q, grid);
  const double ddx = (a.i - b.i) * grid.dx;
  const double ddy = (a.j - b.j) * grid.dy;
  return std::hypot(ddx, ddy);
}

CellField::CellField(GridSpec grid, double fill) : grid_(grid), values_(grid.size(), fill) {}

CellField::CellField(GridSpec grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) throw std::invalid_argument("field length does not match grid");
}

bool CellField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Ensemble::Ensemble(std::vector<CellField> members) : members_(std::move(members)) {
  if (members_.size() < 2) throw std::invalid_argument("an ensemble needs at least two members");
  for (const auto& m : members_) {
    if (!(m.grid() == members_.front().grid())) throw std::invalid_argument("ensemble members on different grids");
  }
}

std::vector<std::size_t> ObservationNetwork::indices(const GridSpec& grid) const {
  std::vector<std::size_t> out;
  out.reserve(locations.size());
  for (const auto& c : locations) out.push_back(cell_index(c, grid));
  return out;
}

void ObservationNetwork::validate(const GridSpec& grid) const {
  if (locations.empty()) throw ConfigError("observation network is empty");
  if (!(obs_error_std >= 0.0)) throw ConfigError("observation error std must be nonnegative");
  std::set<std::size_t> seen;
  for (const auto& c : locations) {
    if (!grid.contains(c)) throw ConfigError("observation location outside grid");
    if (!seen.insert(cell_index(c, grid)).second) throw ConfigError("duplicate observation location");
  }
}

std::string to_string(Method m) { return m == Method::Erff ? "erff" : "renkf"; }
std::string to_string(LocalizationForm f) {
  return f == LocalizationForm::Gaussian ? "gaussian" : "complement";
}
std::string to_string(QueryWeighting q) { return q == QueryWeighting::Raw ? "raw" : "consistent"; }
std::string to_string(GainLocalization g) { return g == GainLocalization::None ? "none" : "distance"; }

std::uint64_t ScenarioConfig::effective_reference_seed() const {
  if (reference_seed) return *reference_seed;
  // One fixed seed per reference standard deviation: 1.0 -> 1010, 1.7 -> 1017, 2.5 -> 1025.
  return 1000u + static_cast<std::uint64_t>(std::llround(reference_std * 10.0));
}

void ScenarioConfig::validate() const {
  grid.validate();
  if (n_e < 2) throw ConfigError("n_e must be at least 2");
  if (!(reference_std > 0.0)) throw ConfigError("reference_std must be positive");
  if (!(localization_range > 0.0)) throw ConfigError("localization_range must be positive");
  if (assimilation_steps < 0 || total_steps < 1 || assimilation_steps > total_steps)
    throw ConfigError("need 0 <= assimilation_steps <= total_steps and total_steps >= 1");
  if (!(storativity > 0.0) || !(thickness > 0.0) || !(total_time > 0.0))
    throw ConfigError("storativity, thickness and total_time must be positive");
  if (grid.nx < 2) throw ConfigError("grid needs nx >= 2 for disjoint west/east boundaries");
  if (!(obs_error_std >= 0.0) || !(enkf_obs_variance >= 0.0)) throw ConfigError("error variances must be nonnegative");
  if (!(localization_floor > 0.0)) throw ConfigError("localization_floor must be positive");
  if (n_trees < 1 || min_samples_leaf < 1 || min_samples_split < 2) throw ConfigError("invalid forest hyperparameters");
  if (!(max_features_fraction > 0.0 && max_features_fraction <= 1.0))
    throw ConfigError("max_features_fraction must be in (0, 1]");
  if (observation_locations.empty() && n_o != 18 && n_o != 36)
    throw ConfigError("n_o must be 18 or 36 unless observation_locations are given");
  if (!observation_locations.empty() && static_cast<int>(observation_locations.size()) != n_o)
    throw ConfigError("n_o does not match the number of observation_locations");
  for (int c : checkpoints) {
    if (c < 0 || c > assimilation_steps) throw ConfigError("checkpoints must lie in [0, assimilation_steps]");
  }
}

namespace {

using nlohmann::json;

std::vector<Cell> cells_from_json(const json& arr, const char* key) {
  if (!arr.is_array()) throw ConfigError(std::string(key) + " must be an array of [i, j] pairs");
  std::vector<Cell> out;
  for (const auto& p : arr) {
    if (!p.is_array() || p.size() != 2) throw ConfigError(std::string(key) + " entries must be [i, j] pairs");
    out.push_back({p[0].get<int>(), p[1].get<int>()});
  }
  return out;
}

json cells_to_json(const std::vector<Cell>& cells) {
  json arr = json::array();
  for (const auto& c : cells) arr.push_back({c.i, c.j});
  return arr;
}

template <typename Enum>
Enum enum_from(const json& v, std::initializer_list<std::pair<const char*, Enum>> table, const char* key) {
  const auto s = v.get<std::string>();
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  throw ConfigError(std::string("invalid value '") + s + "' for " + key);
}

}  // namespace

ScenarioConfig scenario_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("scenario config must be a JSON object");
  ScenarioConfig cfg;
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "scenario_id") cfg.scenario_id = v.get<std::string>();
      else if (key == "n_o") cfg.n_o = v.get<int>();
      else if (key == "n_e") cfg.n_e = v.get<int>();
      else if (key == "reference_std") cfg.reference_std = v.get<double>();
      else if (key == "prior_mean") cfg.prior_mean = v.get<double>();
      else if (key == "assimilation_steps") cfg.assimilation_steps = v.get<int>();
      else if (key == "total_steps") cfg.total_steps = v.get<int>();
      else if (key == "localization_range") cfg.localization_range = v.get<double>();
      else if (key == "method")
        cfg.method = enum_from<Method>(v, {{"erff", Method::Erff}, {"renkf", Method::Renkf}}, "method");
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "prior_std") cfg.prior_std = v.get<double>();
      else if (key == "reference_mean") cfg.reference_mean = v.get<double>();
      else if (key == "reference_seed") cfg.reference_seed = v.get<std::uint64_t>();
      else if (key == "reference_csv") cfg.reference_csv = v.get<std::string>();
      else if (key == "grid") {
        if (!v.is_object()) throw ConfigError("grid must be an object");
        for (const auto& [gk, gv] : v.items()) {
          if (gk == "nx") cfg.grid.nx = gv.get<int>();
          else if (gk == "ny") cfg.grid.ny = gv.get<int>();
          else if (gk == "dx") cfg.grid.dx = gv.get<double>();
          else if (gk == "dy") cfg.grid.dy = gv.get<double>();
          else throw ConfigError("unknown grid key '" + gk + "'");
        }
      }
      else if (key == "variogram_max_range") cfg.variogram_max_range = v.get<double>();
      else if (key == "variogram_min_range") cfg.variogram_min_range = v.get<double>();
      else if (key == "variogram_azimuth") cfg.variogram_azimuth = v.get<double>();
      else if (key == "storativity") cfg.storativity = v.get<double>();
      else if (key == "thickness") cfg.thickness = v.get<double>();
      else if (key == "total_time") cfg.total_time = v.get<double>();
      else if (key == "east_flux") cfg.east_flux = v.get<double>();
      else if (key == "east_flux_per_cell") cfg.east_flux_per_cell = v.get<bool>();
      else if (key == "obs_error_std") cfg.obs_error_std = v.get<double>();
      else if (key == "enkf_obs_variance") cfg.enkf_obs_variance = v.get<double>();
      else if (key == "perturb_observations") cfg.perturb_observations = v.get<bool>();
      else if (key == "enkf_localization")
        cfg.enkf_localization = enum_from<GainLocalization>(
            v, {{"none", GainLocalization::None}, {"distance", GainLocalization::Distance}}, "enkf_localization");
      else if (key == "localization_form")
        cfg.localization_form = enum_from<LocalizationForm>(
            v,
            {{"gaussian", LocalizationForm::Gaussian}, {"complement", LocalizationForm::Complement}},
            "localization_form");
      else if (key == "query_weighting")
        cfg.query_weighting =
            enum_from<QueryWeighting>(v, {{"raw", QueryWeighting::Raw}, {"consistent", QueryWeighting::Consistent}}, "query_weighting");
      else if (key == "localization_floor") cfg.localization_floor = v.get<double>();
      else if (key == "n_trees") cfg.n_trees = v.get<int>();
      else if (key == "min_samples_split") cfg.min_samples_split = v.get<int>();
      else if (key == "min_samples_leaf") cfg.min_samples_leaf = v.get<int>();
      else if (key == "max_features_fraction") cfg.max_features_fraction = v.get<double>();
      else if (key == "forest_seed") cfg.forest_seed = v.get<std::uint64_t>();
      else if (key == "observation_locations") cfg.observation_locations = cells_from_json(v, "observation_locations");
      else if (key == "control_points") cfg.control_points = cells_from_json(v, "control_points");
      else if (key == "checkpoints") cfg.checkpoints = v.get<std::vector<int>>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json scenario_to_json(const ScenarioConfig& cfg) {
  json j;
  j["scenario_id"] = cfg.scenario_id;
  j["n_o"] = cfg.n_o;
  j["n_e"] = cfg.n_e;
  j["reference_std"] = cfg.reference_std;
  j["prior_mean"] = cfg.prior_mean;
  j["assimilation_steps"] = cfg.assimilation_steps;
  j["total_steps"] = cfg.total_steps;
  j["localization_range"] = cfg.localization_range;
  j["method"] = to_string(cfg.method);
  j["seed"] = cfg.seed;
  j["prior_std"] = cfg.effective_prior_std();
  j["reference_mean"] = cfg.reference_mean;
  j["reference_seed"] = cfg.effective_reference_seed();
  if (cfg.reference_csv) j["reference_csv"] = *cfg.reference_csv;
  j["grid"] = {{"nx", cfg.grid.nx}, {"ny", cfg.grid.ny}, {"dx", cfg.grid.dx}, {"dy", cfg.grid.dy}};
  j["variogram_max_range"] = cfg.variogram_max_range;
  j["variogram_min_range"] = cfg.variogram_min_range;
  j["variogram_azimuth"] = cfg.variogram_azimuth;
  j["storativity"] = cfg.storativity;
  j["thickness"] = cfg.thickness;
  j["total_time"] = cfg.total_time;
  j["east_flux"] = cfg.east_flux;
  j["east_flux_per_cell"] = cfg.east_flux_per_cell;
  j["obs_error_std"] = cfg.obs_error_std;
  j["enkf_obs_variance"] = cfg.enkf_obs_variance;
  j["perturb_observations"] = cfg.perturb_observations;
  j["enkf_localization"] = to_string(cfg.enkf_localization);
  j["localization_form"] = to_string(cfg.localization_form);
  j["query_weighting"] = to_string(cfg.query_weighting);
  j["localization_floor"] = cfg.localization_floor;
  j["n_trees"] = cfg.n_trees;
  j["min_samples_split"] = cfg.min_samples_split;
  j["min_samples_leaf"] = cfg.min_samples_leaf;
  j["max_features_fraction"] = cfg.max_features_fraction;
  j["forest_seed"] = cfg.forest_seed;
  j["observation_locations"] = cells_to_json(cfg.observation_locations);
  j["control_points"] = cells_to_json(cfg.control_points);
  j["checkpoints"] = cfg.checkpoints;
  return j;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in '" + path + "': " + e.what());
  }
  // A run manifest carries its fully resolved config.
  if (doc.is_object() && doc.contains("manifest_version")) {
    if (!doc.contains("config")) throw ConfigError("manifest '" + path + "' has no config");
    return scenario_from_json(doc["config"]);
  }
  return scenario_from_json(doc);
}

}  // namespace assim
