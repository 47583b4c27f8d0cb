#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "assim/core.hpp"
#include "assim/enkf.hpp"
#include "assim/erff.hpp"
#include "assim/flow.hpp"
#include "assim/geostat.hpp"
#include "assim/rforest.hpp"
#include "assim/runner.hpp"

namespace py = pybind11;
using namespace assim;

namespace {

using Array2 = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Fields travel as (ny, nx) arrays; flat order is x fastest, so a C-order
// reshape is exact.
py::array_t<double> field_to_array(const CellField& f) {
  py::array_t<double> out({f.grid().ny, f.grid().nx});
  std::copy(f.values().begin(), f.values().end(), out.mutable_data());
  return out;
}

CellField array_to_field(const Array2& a, double dx, double dy) {
  if (a.ndim() != 2) throw std::invalid_argument("field must be a 2-d (ny, nx) array");
  const GridSpec g(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), dx, dy);
  return CellField(g, std::vector<double>(a.data(), a.data() + a.size()));
}

FeatureMatrix to_features(const Array2& x) {
  if (x.ndim() != 2) throw std::invalid_argument("features must be a 2-d (n, d) array");
  const auto n = static_cast<std::size_t>(x.shape(0)), d = static_cast<std::size_t>(x.shape(1));
  FeatureMatrix m(n, d);
  const auto v = x.unchecked<2>();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) m(r, c) = v(static_cast<py::ssize_t>(r), static_cast<py::ssize_t>(c));
  return m;
}

}  // namespace

PYBIND11_MODULE(_assim, m) {
  m.doc() = "Log-conductivity identification with ensemble random forest filtering and restart EnKF";
  m.attr("__version__") = kVersion;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("default_config_json", [] { return scenario_to_json(ScenarioConfig{}).dump(); },
        "Every scenario key with its default, as JSON text.");
  m.def("normalize_config_json", [](const std::string& text) {
    return scenario_to_json(scenario_from_json(nlohmann::json::parse(text))).dump();
  }, py::arg("config_json"), "Validates a config and fills in defaults.");

  m.def("run_scenario",
        [](const std::string& text, const std::filesystem::path& out_dir, int threads) {
          ScenarioConfig cfg = scenario_from_json(nlohmann::json::parse(text));
          py::gil_scoped_release release;
          return run_scenario(std::move(cfg), out_dir, threads, nullptr);
        },
        py::arg("config_json"), py::arg("out_dir"), py::arg("threads") = 1,
        "Runs one scenario into out_dir and returns the CLI exit code.");

  m.def("difference_count", &difference_count, py::arg("n_e"));

  m.def("localization_weight",
        [](double r, double range, double floor, bool complement) {
          LocalizationSpec s;
          s.range = range;
          s.floor = floor;
          s.form = complement ? LocalizationForm::Complement : LocalizationForm::Gaussian;
          s.validate();
          return localization_weight(r, s);
        },
        py::arg("r"), py::arg("range") = 12.0, py::arg("floor") = 1e-6, py::arg("complement") = false);

  m.def("reference_field",
        [](double mean, double std, std::uint64_t seed, int nx, int ny, double max_range, double min_range,
           double azimuth_deg) {
          VariogramModel v;
          v.max_range = max_range;
          v.min_range = min_range;
          v.azimuth_deg = azimuth_deg;
          return field_to_array(generate_reference_field(GridSpec(nx, ny), mean, std, v, seed));
        },
        py::arg("mean") = 4.0, py::arg("std") = 1.7, py::arg("seed") = 1017, py::arg("nx") = 30, py::arg("ny") = 10,
        py::arg("max_range") = 20.0, py::arg("min_range") = 10.0, py::arg("azimuth_deg") = 30.0,
        "Gaussian log-conductivity field as an (ny, nx) array.");

  m.def("solve_heads",
        [](const Array2& lnK, int steps, double east_flux, double storativity, double total_time) {
          const CellField f = array_to_field(lnK, 1.0, 1.0);
          const FlowProblem p = FlowProblem::standard(f.grid(), east_flux, false, storativity, 1.0, total_time, steps);
          const HeadSeries s = solve_transient(p, f, steps);
          const auto ny = f.grid().ny, nx = f.grid().nx;
          py::array_t<double> out({steps + 1, ny, nx});
          double* dst = out.mutable_data();
          for (int t = 0; t <= steps; ++t) dst = std::copy(s.at(t).values().begin(), s.at(t).values().end(), dst);
          return py::make_tuple(out, s.max_mass_balance_residual);
        },
        py::arg("lnK"), py::arg("steps") = 100, py::arg("east_flux") = -200.0, py::arg("storativity") = 0.01,
        py::arg("total_time") = 5.0,
        "Transient heads (steps + 1, ny, nx) and the worst per-step mass-balance residual.");

  m.def("enkf_update",
        [](const Eigen::MatrixXd& x_f, const Eigen::MatrixXd& y_f, const Eigen::VectorXd& y_obs,
           const Eigen::MatrixXd& r, std::optional<std::uint64_t> seed) { return enkf_update(x_f, y_f, y_obs, r, seed); },
        py::arg("x_f"), py::arg("y_f"), py::arg("y_obs"), py::arg("r"), py::arg("perturbation_seed") = py::none(),
        "One EnKF analysis; columns are members.");

  py::class_<Forest>(m, "Forest")
      .def_property_readonly("n_trees", [](const Forest& f) { return f.trees.size(); })
      .def_readonly("n_features", &Forest::n_features)
      .def("predict", [](const Forest& f, const Array2& x) {
        if (x.ndim() != 2 || static_cast<std::size_t>(x.shape(1)) != f.n_features)
          throw std::invalid_argument("queries must be an (n, n_features) array");
        py::array_t<double> out(x.shape(0));
        const auto v = x.unchecked<2>();
        std::vector<double> row(f.n_features);
        for (py::ssize_t r = 0; r < x.shape(0); ++r) {
          for (std::size_t c = 0; c < f.n_features; ++c) row[c] = v(r, static_cast<py::ssize_t>(c));
          out.mutable_at(r) = f.predict(row);
        }
        return out;
      }, py::arg("x"));

  m.def("fit_forest",
        [](const Array2& x, const std::vector<double>& y, int n_trees, int min_samples_split, int min_samples_leaf,
           double max_features_fraction, std::uint64_t seed) {
          ForestHyperparams hp;
          hp.n_trees = n_trees;
          hp.min_samples_split = min_samples_split;
          hp.min_samples_leaf = min_samples_leaf;
          hp.max_features_fraction = max_features_fraction;
          hp.seed = seed;
          const FeatureMatrix fm = to_features(x);
          if (fm.rows() != y.size()) throw std::invalid_argument("x and y have different row counts");
          return fit_forest(fm, y, hp);
        },
        py::arg("x"), py::arg("y"), py::arg("n_trees") = 120, py::arg("min_samples_split") = 2,
        py::arg("min_samples_leaf") = 3, py::arg("max_features_fraction") = 0.65, py::arg("seed") = 10);
}
