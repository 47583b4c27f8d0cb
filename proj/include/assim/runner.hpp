#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "assim/assimilation.hpp"
#include "assim/core.hpp"
#include "assim/metrics.hpp"

namespace assim {

inline constexpr const char* kVersion = "0.1.0";

/// Exit statuses of run_scenario and run_suite.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitNumerical = 3 };

/// Regular lattices on the 30 x 10 grid: 6 x 3 points for 18 observations,
/// 9 x 4 points for 36.
ObservationNetwork default_network(int n_o, const GridSpec& grid, double obs_error_std = 0.0);

/// (7, 4), (15, 6), (24, 3). Throws ConfigError if one coincides with `network`.
std::vector<Cell> default_control_points(const GridSpec& grid, const ObservationNetwork* network = nullptr);

/// Network, control points, reference field and its head series, observations
/// and initial ensemble for a validated config. The reference forward model
/// is solved once here.
ScenarioInputs prepare_scenario(const ScenarioConfig& cfg);

/// Dispatches to the configured filter.
AssimilationResult run_assimilation(const ScenarioInputs& inputs, int threads);

/// Field as ny rows of nx values; the first row is the southmost (j = 0).
void write_field_csv(const CellField& field, const std::filesystem::path& path);
CellField read_field_csv(const std::filesystem::path& path, const GridSpec& grid);

/// Round-trip decimal representation used in every CSV.
std::string format_number(double v);

/// Writes the metric CSVs of a result into `dir`; returns the file names.
std::vector<std::string> write_outputs(const AssimilationResult& result, const std::filesystem::path& dir);

struct RunManifest {
  ScenarioConfig config;
  std::map<std::string, std::uint64_t> seeds;
  std::string version = kVersion;
  std::string status = "running";
  std::string message;
  int threads = 1;
  std::map<std::string, double> phase_seconds;
  std::optional<double> max_mass_balance_residual;  // worst per-step residual over every solve of the run
  std::vector<std::string> outputs;

  nlohmann::json to_json() const;
};

/// Loads a config (or manifest), runs it and writes outputs into `out_dir`.
/// Config errors return kExitConfig before anything is written; numerical
/// failures return kExitNumerical. Messages go to `log`.
int run_scenario(const std::string& config_path, const std::filesystem::path& out_dir, int threads = 1,
                 std::optional<std::uint64_t> seed = std::nullopt, std::ostream* log = nullptr);
int run_scenario(ScenarioConfig cfg, const std::filesystem::path& out_dir, int threads = 1,
                 std::ostream* log = nullptr);

struct SuiteRow {
  std::string scenario_id;
  std::string method;
  int n_o = 0;
  int n_e = 0;
  double reference_std = 0.0;
  double final_rmse = 0.0;
  double final_asd = 0.0;
  std::string status;
  double runtime_s = 0.0;
};

/// Scenarios of a suite file: {"defaults": {...}, "scenarios": [{...}, ...]},
/// each entry merged over the defaults.
std::vector<ScenarioConfig> load_suite(const std::string& path);

/// Runs every scenario into out_dir/<scenario_id>, then writes
/// suite_summary.csv (deterministic) and suite_timing.csv (wall-clock).
/// A failing scenario is recorded and the suite continues.
std::vector<SuiteRow> run_suite(const std::vector<ScenarioConfig>& scenarios, const std::filesystem::path& out_dir,
                                int threads = 1, std::ostream* log = nullptr);
int run_suite(const std::string& suite_path, const std::filesystem::path& out_dir, int threads = 1,
              std::optional<std::uint64_t> seed = std::nullopt, std::ostream* log = nullptr);

}  // namespace assim
