#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "assim/assimilation.hpp"
#include "assim/erff.hpp"
#include "assim/runner.hpp"

using namespace assim;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("assim_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ScenarioConfig tiny(Method method) {
  ScenarioConfig cfg;
  cfg.scenario_id = method == Method::Erff ? "tiny_erff" : "tiny_renkf";
  cfg.method = method;
  cfg.n_e = 6;
  cfg.n_trees = 6;
  cfg.assimilation_steps = 3;
  cfg.total_steps = 8;
  cfg.checkpoints = {0, 2, 3};
  return cfg;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  out << j.dump(2);
}

}  // namespace

TEST_SUITE("runner") {
  TEST_CASE("default networks") {
    const GridSpec g;
    for (int n_o : {18, 36}) {
      const ObservationNetwork net = default_network(n_o, g);
      CHECK(net.size() == static_cast<std::size_t>(n_o));
      CHECK_NOTHROW(net.validate(g));
      std::set<std::size_t> distinct;
      for (auto c : net.indices(g)) distinct.insert(c);
      CHECK(distinct.size() == static_cast<std::size_t>(n_o));
    }
    CHECK_THROWS_AS(default_network(20, g), ConfigError);
    CHECK_THROWS_AS(default_network(18, GridSpec(20, 10)), ConfigError);
  }

  TEST_CASE("the 18-point lattice leaves no cell farther than 4 m from an observation") {
    const GridSpec g;
    const auto obs = default_network(18, g).indices(g);
    for (std::size_t c = 0; c < g.size(); ++c) {
      double best = 1e9;
      for (auto o : obs) best = std::min(best, cell_distance(c, o, g));
      REQUIRE(best <= 4.0);
    }
  }

  TEST_CASE("default control points avoid both networks") {
    const GridSpec g;
    const auto cps = default_control_points(g);
    CHECK(cps.size() == 3);
    CHECK(cps == std::vector<Cell>{{7, 4}, {15, 6}, {24, 3}});
    for (int n_o : {18, 36}) {
      const ObservationNetwork net = default_network(n_o, g);
      CHECK_NOTHROW(default_control_points(g, &net));
      for (const auto& c : cps)
        CHECK(std::find(net.locations.begin(), net.locations.end(), c) == net.locations.end());
    }
    const ObservationNetwork clash{{{15, 6}}, 0.0};
    CHECK_THROWS_AS(default_control_points(g, &clash), ConfigError);
  }

  TEST_CASE("field CSV round trip and orientation") {
    const GridSpec g(3, 2);
    const CellField f(g, std::vector<double>{0.1, 1.0 / 3.0, -2.0, 1e-17, 5.0, 6.25});
    const fs::path dir = scratch_dir("csv");
    fs::create_directories(dir);
    write_field_csv(f, dir / "f.csv");
    CHECK(slurp(dir / "f.csv").substr(0, 4) == "0.1,");
    const CellField back = read_field_csv(dir / "f.csv", g);
    CHECK(back.values() == f.values());
    CHECK_THROWS_AS(read_field_csv(dir / "f.csv", GridSpec(2, 3)), ConfigError);
    CHECK_THROWS_AS(read_field_csv(dir / "missing.csv", g), ConfigError);
    CHECK(format_number(-0.0) == "0");
  }

  TEST_CASE("prepared scenario holds consistent inputs") {
    const ScenarioConfig cfg = tiny(Method::Erff);
    const ScenarioInputs in = prepare_scenario(cfg);
    CHECK(in.network.size() == 18);
    CHECK(in.control_points.size() == 3);
    CHECK(in.observations.size() == 3);
    CHECK(in.reference_heads.steps() == 8);
    CHECK(in.initial_ensemble.size() == 6);
    for (int t = 1; t <= 3; ++t) {
      const auto expect = observe(in.reference_heads.at(t), in.network);
      for (std::size_t k = 0; k < expect.size(); ++k)
        REQUIRE(in.observations[static_cast<std::size_t>(t - 1)](static_cast<Eigen::Index>(k)) == expect[k]);
    }
  }

  TEST_CASE("forecasts restart from the initial condition") {
    const ScenarioInputs in = prepare_scenario(tiny(Method::Erff));
    const Ensemble& e = in.initial_ensemble;
    for (int t : {1, 3, 8}) {
      const Eigen::MatrixXd y = forecast_at_observations(in.problem, e, in.network, t, 2);
      for (std::size_t i = 0; i < e.size(); ++i) {
        const HeadSeries s = solve_transient(in.problem, e[i], t);
        const auto expect = observe(s.at(t), in.network);
        for (std::size_t k = 0; k < expect.size(); ++k)
          REQUIRE(y(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) == expect[k]);
      }
    }
  }

  TEST_CASE("assimilation result layout") {
    const ScenarioInputs in = prepare_scenario(tiny(Method::Erff));
    const AssimilationResult r = run_assimilation(in, 1);
    CHECK(r.metrics.size() == 9);
    CHECK(r.at_step(0).phase == Phase::Initial);
    CHECK(r.at_step(3).phase == Phase::Assimilation);
    CHECK(r.at_step(4).phase == Phase::Validation);
    CHECK(r.at_step(8).rmse == r.at_step(3).rmse);
    CHECK(r.snapshots.size() == 3);
    CHECK(r.control.rows() == 8);
    CHECK(r.max_mass_balance_residual <= 1e-8);
    CHECK(r.at_step(0).rmse == doctest::Approx(rmse(in.initial_ensemble, in.reference)));
  }

  TEST_CASE("zero-spread prior and reference drawn from it give zero updates") {
    for (Method m : {Method::Erff, Method::Renkf}) {
      ScenarioConfig cfg = tiny(m);
      cfg.prior_std = 0.0;
      const fs::path dir = scratch_dir("flat");
      fs::create_directories(dir);
      write_field_csv(CellField(cfg.grid, cfg.prior_mean), dir / "ref.csv");
      cfg.reference_csv = (dir / "ref.csv").string();
      const AssimilationResult r = run_assimilation(prepare_scenario(cfg), 1);
      for (const auto& m2 : r.final_ensemble.members())
        for (double v : m2.values()) REQUIRE(v == cfg.prior_mean);
      CHECK(r.at_step(3).rmse == 0.0);
    }
  }

  TEST_CASE("scenario runs write every output and are byte-identical across thread counts") {
    for (Method m : {Method::Erff, Method::Renkf}) {
      const ScenarioConfig cfg = tiny(m);
      const fs::path a = scratch_dir("one"), b = scratch_dir("three");
      REQUIRE(run_scenario(cfg, a, 1) == kExitOk);
      REQUIRE(run_scenario(cfg, b, 3) == kExitOk);
      const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
      CHECK(manifest["status"] == "complete");
      std::vector<std::string> files = manifest["outputs"];
      for (const char* name : {"rmse_asd.csv", "control_points.csv", "discrepancy_step3.csv", "mean_field_step2.csv",
                               "variance_field_step3.csv", "reference_field.csv"}) {
        CHECK(std::find(files.begin(), files.end(), name) != files.end());
      }
      for (const auto& f : files) REQUIRE(slurp(a / f) == slurp(b / f));

      std::istringstream rows(slurp(a / "rmse_asd.csv"));
      std::string line;
      int n = 0, assim = 0, valid = 0;
      while (std::getline(rows, line)) {
        ++n;
        assim += line.find(",assimilation,") != std::string::npos;
        valid += line.find(",validation,") != std::string::npos;
      }
      CHECK(n == 10);
      CHECK(assim == 3);
      CHECK(valid == 5);

      // Rerunning from the manifest reproduces the outputs.
      const fs::path c = scratch_dir("again");
      REQUIRE(run_scenario((a / "manifest.json").string(), c, 1) == kExitOk);
      for (const auto& f : files) REQUIRE(slurp(a / f) == slurp(c / f));
    }
  }

  TEST_CASE("seed override changes results") {
    const fs::path a = scratch_dir("seed_a"), b = scratch_dir("seed_b");
    fs::create_directories(a);
    write_json(a / "cfg.json", scenario_to_json(tiny(Method::Renkf)));
    REQUIRE(run_scenario((a / "cfg.json").string(), a / "out", 1) == kExitOk);
    REQUIRE(run_scenario((a / "cfg.json").string(), b, 1, 999u) == kExitOk);
    CHECK(slurp(a / "out" / "rmse_asd.csv") != slurp(b / "rmse_asd.csv"));
  }

  TEST_CASE("config errors exit 2 without writing outputs") {
    const fs::path dir = scratch_dir("bad");
    fs::create_directories(dir);
    {
      std::ofstream(dir / "broken.json") << "{ \"n_e\": 50, ";
      std::ofstream(dir / "typo.json") << "{ \"n_ee\": 50 }";
    }
    std::ostringstream log;
    CHECK(run_scenario((dir / "broken.json").string(), dir / "out1", 1, std::nullopt, &log) == kExitConfig);
    CHECK_FALSE(fs::exists(dir / "out1"));
    CHECK(run_scenario((dir / "typo.json").string(), dir / "out2", 1, std::nullopt, &log) == kExitConfig);
    CHECK_FALSE(fs::exists(dir / "out2"));
    CHECK(run_scenario((dir / "nope.json").string(), dir / "out3", 1, std::nullopt, &log) == kExitConfig);
    CHECK(log.str().find("n_ee") != std::string::npos);
  }

  TEST_CASE("numerical failures exit 3") {
    ScenarioConfig cfg = tiny(Method::Erff);
    const fs::path dir = scratch_dir("numerical");
    fs::create_directories(dir);
    write_field_csv(CellField(cfg.grid, 800.0), dir / "ref.csv");
    cfg.reference_csv = (dir / "ref.csv").string();
    std::ostringstream log;
    CHECK(run_scenario(cfg, dir / "out", 1, &log) == kExitNumerical);
    const auto manifest = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
    CHECK(manifest["status"] == "failed");
  }

  TEST_CASE("suites record every scenario and keep going after failures") {
    const fs::path dir = scratch_dir("suite");
    fs::create_directories(dir);
    nlohmann::json suite;
    suite["defaults"] = {{"n_e", 5}, {"n_trees", 4}, {"assimilation_steps", 2}, {"total_steps", 4}, {"checkpoints", {0, 2}}};
    suite["scenarios"] = {{{"scenario_id", "A"}},
                          {{"scenario_id", "B"}, {"method", "renkf"}},
                          {{"scenario_id", "C"}, {"reference_csv", (dir / "missing.csv").string()}}};
    write_json(dir / "suite.json", suite);
    CHECK(run_suite((dir / "suite.json").string(), dir / "out") == kExitFailure);
    const std::string summary = slurp(dir / "out" / "suite_summary.csv");
    std::istringstream rows(summary);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(rows, line)) lines.push_back(line);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "scenario,method,n_o,n_e,reference_std,final_rmse,final_asd,status");
    CHECK(lines[1].substr(0, 7) == "A,erff,");
    CHECK(lines[1].ends_with(",ok"));
    CHECK(lines[2].substr(0, 8) == "B,renkf,");
    CHECK(lines[3].find("failed (exit 2)") != std::string::npos);
    CHECK(fs::exists(dir / "out" / "suite_timing.csv"));

    write_json(dir / "empty.json", nlohmann::json{{"scenarios", nlohmann::json::array()}});
    CHECK(run_suite((dir / "empty.json").string(), dir / "empty") == kExitOk);
    CHECK(slurp(dir / "empty" / "suite_summary.csv") ==
          "scenario,method,n_o,n_e,reference_std,final_rmse,final_asd,status\n");

    write_json(dir / "dup.json", nlohmann::json{{"scenarios", {{{"scenario_id", "A"}}, {{"scenario_id", "A"}}}}});
    CHECK(run_suite((dir / "dup.json").string(), dir / "dup") == kExitConfig);
  }
}
