#include "assim/runner.hpp"

#include <algorithm>
#include <chrono>
#include <charconv>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "assim/enkf.hpp"
#include "assim/erff.hpp"
#include "assim/flow.hpp"
#include "assim/geostat.hpp"
#include "assim/parallel.hpp"

namespace assim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kEnsembleStream = 1;
constexpr std::uint64_t kObservationStream = 2;

bool is_default_grid(const GridSpec& g) { return g.nx == 30 && g.ny == 10; }

std::ostream& out_or_null(std::ostream* log) {
  static std::ostream null(nullptr);
  return log ? *log : null;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace

ObservationNetwork default_network(int n_o, const GridSpec& grid, double obs_error_std) {
  if (!is_default_grid(grid)) throw ConfigError("default observation networks need the 30 x 10 grid");
  std::vector<int> xs, ys;
  if (n_o == 18) {
    xs = {3, 8, 13, 18, 23, 28};
    ys = {2, 5, 8};
  } else if (n_o == 36) {
    xs = {2, 5, 8, 11, 14, 17, 20, 23, 26};
    ys = {1, 3, 6, 8};
  } else {
    throw ConfigError("no default network for n_o = " + std::to_string(n_o));
  }
  ObservationNetwork net;
  net.obs_error_std = obs_error_std;
  for (int y : ys) {
    for (int x : xs) net.locations.push_back({x, y});
  }
  return net;
}

std::vector<Cell> default_control_points(const GridSpec& grid, const ObservationNetwork* network) {
  if (!is_default_grid(grid)) throw ConfigError("default control points need the 30 x 10 grid");
  std::vector<Cell> cps{{7, 4}, {15, 6}, {24, 3}};
  if (network) {
    for (const auto& c : cps) {
      if (std::find(network->locations.begin(), network->locations.end(), c) != network->locations.end())
        throw ConfigError("control point (" + std::to_string(c.i) + ", " + std::to_string(c.j) +
                          ") coincides with an observation location");
    }
  }
  return cps;
}

ScenarioInputs prepare_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  ScenarioInputs in;
  in.config = cfg;
  if (cfg.observation_locations.empty()) {
    in.network = default_network(cfg.n_o, cfg.grid, cfg.obs_error_std);
  } else {
    in.network.locations = cfg.observation_locations;
    in.network.obs_error_std = cfg.obs_error_std;
  }
  in.network.validate(cfg.grid);
  if (cfg.control_points.empty()) {
    in.control_points = default_control_points(cfg.grid, &in.network);
  } else {
    in.control_points = cfg.control_points;
    for (const auto& c : in.control_points) {
      if (!cfg.grid.contains(c)) throw ConfigError("control point outside the grid");
    }
  }

  if (cfg.reference_csv) {
    in.reference = read_field_csv(*cfg.reference_csv, cfg.grid);
  } else {
    VariogramModel v;
    v.sill = cfg.reference_std * cfg.reference_std;
    v.max_range = cfg.variogram_max_range;
    v.min_range = cfg.variogram_min_range;
    v.azimuth_deg = cfg.variogram_azimuth;
    in.reference =
        generate_reference_field(cfg.grid, cfg.reference_mean, cfg.reference_std, v, cfg.effective_reference_seed());
  }

  in.problem = FlowProblem::standard(cfg.grid, cfg.east_flux, cfg.east_flux_per_cell, cfg.storativity, cfg.thickness,
                                     cfg.total_time, cfg.total_steps);
  in.reference_heads = solve_transient(in.problem, in.reference, cfg.total_steps);
  for (int t = 1; t <= cfg.assimilation_steps; ++t) {
    const auto y = observe(in.reference_heads.at(t), in.network,
                           derive_seed(cfg.seed, kObservationStream, static_cast<std::uint64_t>(t)));
    in.observations.push_back(Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())));
  }
  in.initial_ensemble = generate_initial_ensemble(cfg.grid, cfg.n_e, cfg.prior_mean, cfg.effective_prior_std(),
                                                  derive_seed(cfg.seed, kEnsembleStream));
  return in;
}

AssimilationResult run_assimilation(const ScenarioInputs& inputs, int threads) {
  return inputs.config.method == Method::Erff ? run_erff(inputs, threads) : run_renkf(inputs, threads);
}

std::string format_number(double v) {
  if (v == 0.0) return "0";  // folds -0 into 0
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_field_csv(const CellField& field, const fs::path& path) {
  const GridSpec& g = field.grid();
  std::string text;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (i) text += ',';
      text += format_number(field.at(i, j));
    }
    text += '\n';
  }
  write_text(path, text);
}

CellField read_field_csv(const fs::path& path, const GridSpec& grid) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open field CSV '" + path.string() + "'");
  std::vector<double> values;
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string tok;
    int cols = 0;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(tok, &used));
      } catch (const std::exception&) {
        throw ConfigError("bad number '" + tok + "' in '" + path.string() + "'");
      }
      ++cols;
    }
    if (cols != grid.nx) throw ConfigError("field CSV '" + path.string() + "' row has " + std::to_string(cols) +
                                           " values, expected " + std::to_string(grid.nx));
    ++rows;
  }
  if (rows != grid.ny)
    throw ConfigError("field CSV '" + path.string() + "' has " + std::to_string(rows) + " rows, expected " +
                      std::to_string(grid.ny));
  CellField f(grid, std::move(values));
  if (!f.all_finite()) throw ConfigError("field CSV '" + path.string() + "' has non-finite values");
  return f;
}

std::vector<std::string> write_outputs(const AssimilationResult& result, const fs::path& dir) {
  std::vector<std::string> files;
  auto add = [&](const std::string& name) {
    files.push_back(name);
    return dir / name;
  };

  std::string text = "step,phase,rmse,asd\n";
  for (const auto& m : result.metrics) {
    text += std::to_string(m.step) + ',' + to_string(m.phase) + ',' + format_number(m.rmse) + ',' +
            format_number(m.asd) + '\n';
  }
  write_text(add("rmse_asd.csv"), text);

  for (const auto& [step, snap] : result.snapshots) {
    write_field_csv(snap.mean, add("mean_field_step" + std::to_string(step) + ".csv"));
    write_field_csv(snap.variance, add("variance_field_step" + std::to_string(step) + ".csv"));
  }

  text = "step,pearson_mean_reference\n";
  for (const auto& [step, r] : result.mean_correlation) text += std::to_string(step) + ',' + format_number(r) + '\n';
  write_text(add("checkpoint_correlation.csv"), text);

  const ControlPointTable& cp = result.control;
  text = "step";
  for (std::size_t p = 0; p < cp.points.size(); ++p) {
    const std::string tag = "cp" + std::to_string(p + 1) + "_i" + std::to_string(cp.points[p].i) + "_j" +
                            std::to_string(cp.points[p].j);
    text += ',' + tag + "_reference," + tag + "_initial_mean," + tag + "_final_mean";
  }
  text += '\n';
  for (std::size_t r = 0; r < cp.rows(); ++r) {
    text += std::to_string(cp.steps[r]);
    for (std::size_t p = 0; p < cp.points.size(); ++p) {
      text += ',' + format_number(cp.reference[r][p]) + ',' + format_number(cp.initial_mean[r][p]) + ',' +
              format_number(cp.final_mean[r][p]);
    }
    text += '\n';
  }
  write_text(add("control_points.csv"), text);

  const int last = result.config.assimilation_steps;
  const CellField final_mean = ensemble_mean(result.final_ensemble);
  write_field_csv(standardized_discrepancy(final_mean, result.reference, result.config.reference_std),
                  add("discrepancy_step" + std::to_string(last) + ".csv"));
  write_field_csv(result.reference, add("reference_field.csv"));
  return files;
}

json RunManifest::to_json() const {
  json j;
  j["manifest_version"] = 1;
  j["version"] = version;
  j["status"] = status;
  if (!message.empty()) j["message"] = message;
  j["threads"] = threads;
  j["config"] = scenario_to_json(config);
  j["seeds"] = seeds;
  j["phase_seconds"] = phase_seconds;
  if (max_mass_balance_residual) j["max_mass_balance_residual"] = *max_mass_balance_residual;
  j["outputs"] = outputs;
  return j;
}

namespace {

RunManifest manifest_for(const ScenarioConfig& cfg, int threads) {
  RunManifest m;
  m.config = cfg;
  m.threads = threads;
  m.seeds["master"] = cfg.seed;
  m.seeds["reference"] = cfg.effective_reference_seed();
  m.seeds["initial_ensemble"] = derive_seed(cfg.seed, kEnsembleStream);
  m.seeds["forest"] = cfg.forest_seed;
  return m;
}

void write_manifest(const RunManifest& m, const fs::path& dir) {
  write_text(dir / "manifest.json", m.to_json().dump(2) + "\n");
}

}  // namespace

int run_scenario(ScenarioConfig cfg, const fs::path& out_dir, int threads, std::ostream* log) {
  std::ostream& os = out_or_null(log);
  threads = resolve_threads(threads);
  ScenarioInputs inputs;
  try {
    cfg.validate();
    if (cfg.reference_csv) read_field_csv(*cfg.reference_csv, cfg.grid);
    if (cfg.observation_locations.empty()) default_network(cfg.n_o, cfg.grid);
    if (cfg.control_points.empty() && !is_default_grid(cfg.grid))
      throw ConfigError("control_points are required on a non-default grid");
  } catch (const ConfigError& e) {
    os << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  RunManifest manifest = manifest_for(cfg, threads);
  try {
    fs::create_directories(out_dir);
    write_manifest(manifest, out_dir);
    const auto start = std::chrono::steady_clock::now();
    inputs = prepare_scenario(cfg);
    inputs.on_step = [&os, &cfg](const StepMetrics& m) {
      os << cfg.scenario_id << " step " << m.step << ": rmse " << m.rmse << ", asd " << m.asd << std::endl;
    };
    manifest.phase_seconds["prepare"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const AssimilationResult result = run_assimilation(inputs, threads);
    for (const auto& w : result.control.warnings) os << "warning: " << w << '\n';
    for (const auto& [k, v] : result.phase_seconds) manifest.phase_seconds[k] = v;
    manifest.max_mass_balance_residual = result.max_mass_balance_residual;
    manifest.outputs = write_outputs(result, out_dir);
    manifest.status = "complete";
    write_manifest(manifest, out_dir);
    return kExitOk;
  } catch (const ConfigError& e) {
    manifest.status = "failed";
    manifest.message = std::string("config error: ") + e.what();
    os << manifest.message << '\n';
    write_manifest(manifest, out_dir);
    return kExitConfig;
  } catch (const NumericalError& e) {
    manifest.status = "failed";
    manifest.message = std::string("numerical failure: ") + e.what();
    os << manifest.message << '\n';
    write_manifest(manifest, out_dir);
    return kExitNumerical;
  }
}

int run_scenario(const std::string& config_path, const fs::path& out_dir, int threads,
                 std::optional<std::uint64_t> seed, std::ostream* log) {
  ScenarioConfig cfg;
  try {
    cfg = load_scenario(config_path);
  } catch (const ConfigError& e) {
    out_or_null(log) << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (seed) cfg.seed = *seed;
  return run_scenario(std::move(cfg), out_dir, threads, log);
}

std::vector<ScenarioConfig> load_suite(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open suite file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in '" + path + "': " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("suite file must hold an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "defaults" && key != "scenarios") throw ConfigError("unknown suite key '" + key + "'");
  }
  const json defaults = doc.value("defaults", json::object());
  const json list = doc.value("scenarios", json::array());
  if (!defaults.is_object() || !list.is_array()) throw ConfigError("suite needs a defaults object and a scenarios array");
  std::vector<ScenarioConfig> out;
  std::set<std::string> ids;
  for (const auto& entry : list) {
    json merged = defaults;
    merged.merge_patch(entry);
    ScenarioConfig cfg = scenario_from_json(merged);
    if (!ids.insert(cfg.scenario_id).second) throw ConfigError("duplicate scenario_id '" + cfg.scenario_id + "'");
    out.push_back(std::move(cfg));
  }
  return out;
}

std::vector<SuiteRow> run_suite(const std::vector<ScenarioConfig>& scenarios, const fs::path& out_dir, int threads,
                                std::ostream* log) {
  std::ostream& os = out_or_null(log);
  fs::create_directories(out_dir);
  std::vector<SuiteRow> rows;
  for (const auto& cfg : scenarios) {
    SuiteRow row;
    row.scenario_id = cfg.scenario_id;
    row.method = to_string(cfg.method);
    row.n_o = cfg.n_o;
    row.n_e = cfg.n_e;
    row.reference_std = cfg.reference_std;
    os << "scenario " << cfg.scenario_id << " ..." << std::endl;
    const auto start = std::chrono::steady_clock::now();
    int code = kExitFailure;
    std::string msg;
    try {
      code = run_scenario(cfg, out_dir / cfg.scenario_id, threads, log);
      if (code != kExitOk) {
        std::ifstream in(out_dir / cfg.scenario_id / "manifest.json");
        if (in) msg = nlohmann::json::parse(in).value("message", "");
      }
    } catch (const std::exception& e) {
      msg = e.what();
    }
    row.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (code == kExitOk) {
      std::ifstream in(out_dir / cfg.scenario_id / "rmse_asd.csv");
      std::string line, last;
      while (std::getline(in, line)) {
        if (!line.empty()) last = line;
      }
      std::stringstream ss(last);
      std::string step, phase, r, a;
      std::getline(ss, step, ',');
      std::getline(ss, phase, ',');
      std::getline(ss, r, ',');
      std::getline(ss, a, ',');
      row.final_rmse = std::stod(r);
      row.final_asd = std::stod(a);
      row.status = "ok";
    } else {
      msg.erase(std::remove(msg.begin(), msg.end(), '\n'), msg.end());
      std::replace(msg.begin(), msg.end(), ',', ';');
      row.status = "failed (exit " + std::to_string(code) + "): " + msg;
    }
    os << "scenario " << cfg.scenario_id << ": " << row.status << std::endl;
    rows.push_back(std::move(row));
  }

  std::string summary = "scenario,method,n_o,n_e,reference_std,final_rmse,final_asd,status\n";
  std::string timing = "scenario,runtime_s\n";
  for (const auto& r : rows) {
    summary += r.scenario_id + ',' + r.method + ',' + std::to_string(r.n_o) + ',' + std::to_string(r.n_e) + ',' +
               format_number(r.reference_std) + ',' + format_number(r.final_rmse) + ',' + format_number(r.final_asd) +
               ',' + r.status + '\n';
    timing += r.scenario_id + ',' + format_number(r.runtime_s) + '\n';
  }
  write_text(out_dir / "suite_summary.csv", summary);
  write_text(out_dir / "suite_timing.csv", timing);
  return rows;
}

int run_suite(const std::string& suite_path, const fs::path& out_dir, int threads, std::optional<std::uint64_t> seed,
              std::ostream* log) {
  std::vector<ScenarioConfig> scenarios;
  try {
    scenarios = load_suite(suite_path);
  } catch (const ConfigError& e) {
    out_or_null(log) << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (seed) {
    for (auto& s : scenarios) s.seed = *seed;
  }
  const auto rows = run_suite(scenarios, out_dir, threads, log);
  const bool all_ok = std::all_of(rows.begin(), rows.end(), [](const SuiteRow& r) { return r.status == "ok"; });
  return all_ok ? kExitOk : kExitFailure;
}

}  // namespace assim
