#include "assim/flow.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "assim/parallel.hpp"

namespace assim {

FlowProblem FlowProblem::standard(const GridSpec& grid, double east_flux, bool per_cell, double storativity,
                                  double thickness, double total_time, int total_steps) {
  grid.validate();
  if (total_steps < 1) throw ConfigError("total_steps must be positive");
  FlowProblem p;
  p.grid = grid;
  for (int j = 0; j < grid.ny; ++j) {
    p.head_cells.push_back(cell_index(0, j, grid));
    p.head_values.push_back(0.0);
  }
  const double per_cell_flux = per_cell ? east_flux : east_flux / grid.ny;
  for (int j = 0; j < grid.ny; ++j) {
    p.flux_cells.push_back(cell_index(grid.nx - 1, j, grid));
    p.flux_values.push_back(per_cell_flux);
  }
  p.storativity = storativity;
  p.thickness = thickness;
  p.total_steps = total_steps;
  p.dt = total_time / total_steps;
  p.initial_heads = CellField(grid, 0.0);
  p.validate();
  return p;
}

void FlowProblem::validate() const {
  grid.validate();
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  if (!(storativity > 0.0)) throw ConfigError("storativity must be positive");
  if (!(thickness > 0.0)) throw ConfigError("thickness must be positive");
  if (head_cells.size() != head_values.size() || flux_cells.size() != flux_values.size())
    throw ConfigError("boundary cell and value lists differ in length");
  if (initial_heads.size() != grid.size()) throw ConfigError("initial heads do not match grid");
  std::set<std::size_t> fixed(head_cells.begin(), head_cells.end());
  for (auto c : head_cells) {
    if (c >= grid.size()) throw ConfigError("prescribed-head cell outside grid");
  }
  for (auto c : flux_cells) {
    if (c >= grid.size()) throw ConfigError("prescribed-flux cell outside grid");
    if (fixed.count(c)) throw ConfigError("prescribed-head and prescribed-flux cells overlap");
  }
}

namespace {

struct Discretization {
  struct Link {
    std::size_t a, b;
    double conductance;
  };
  std::vector<Link> links;
  std::vector<char> fixed;
  Eigen::VectorXd fixed_value;
  Eigen::VectorXd storage;
  Eigen::VectorXd source;
  Eigen::VectorXd fixed_rhs;  // couplings to prescribed heads, moved to the rhs
  Eigen::SparseMatrix<double> matrix;
};

double harmonic_mean(double a, double b) { return 2.0 * a * b / (a + b); }

Discretization discretize(const FlowProblem& problem, const CellField& lnK) {
  const GridSpec& g = problem.grid;
  if (!(lnK.grid() == g)) throw std::invalid_argument("conductivity field grid does not match the flow problem");
  const std::size_t n = g.size();

  std::vector<double> k(n);
  for (std::size_t c = 0; c < n; ++c) {
    k[c] = std::exp(lnK[c]);
    if (!std::isfinite(lnK[c]) || !std::isfinite(k[c]))
      throw NumericalError("non-finite conductivity in cell " + std::to_string(c));
  }

  Discretization d;
  d.fixed.assign(n, 0);
  d.fixed_value = Eigen::VectorXd::Zero(n);
  for (std::size_t m = 0; m < problem.head_cells.size(); ++m) {
    d.fixed[problem.head_cells[m]] = 1;
    d.fixed_value(problem.head_cells[m]) = problem.head_values[m];
  }
  d.source = Eigen::VectorXd::Zero(n);
  for (std::size_t m = 0; m < problem.flux_cells.size(); ++m) d.source(problem.flux_cells[m]) += problem.flux_values[m];

  const double s = problem.storativity * g.dx * g.dy / problem.dt;
  d.storage = Eigen::VectorXd::Constant(n, s);
  for (std::size_t c = 0; c < n; ++c) {
    if (d.fixed[c]) d.storage(c) = 0.0;
  }

  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const std::size_t c = cell_index(i, j, g);
      if (i + 1 < g.nx) {
        const std::size_t e = c + 1;
        d.links.push_back({c, e, problem.thickness * harmonic_mean(k[c], k[e]) * g.dy / g.dx});
      }
      if (j + 1 < g.ny) {
        const std::size_t nb = c + static_cast<std::size_t>(g.nx);
        d.links.push_back({c, nb, problem.thickness * harmonic_mean(k[c], k[nb]) * g.dx / g.dy});
      }
    }
  }

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(5 * n);
  Eigen::VectorXd diag = d.storage;
  d.fixed_rhs = Eigen::VectorXd::Zero(n);
  for (const auto& l : d.links) {
    const bool fa = d.fixed[l.a], fb = d.fixed[l.b];
    if (fa && fb) continue;
    if (!fa) diag(l.a) += l.conductance;
    if (!fb) diag(l.b) += l.conductance;
    if (!fa && !fb) {
      trip.emplace_back(l.a, l.b, -l.conductance);
      trip.emplace_back(l.b, l.a, -l.conductance);
    } else if (fa) {
      d.fixed_rhs(l.b) += l.conductance * d.fixed_value(l.a);
    } else {
      d.fixed_rhs(l.a) += l.conductance * d.fixed_value(l.b);
    }
  }
  for (std::size_t c = 0; c < n; ++c) trip.emplace_back(c, c, d.fixed[c] ? 1.0 : diag(c));
  d.matrix.resize(n, n);
  d.matrix.setFromTriplets(trip.begin(), trip.end());
  return d;
}

Eigen::VectorXd step_rhs(const Discretization& d, const CellField& h_prev) {
  const std::size_t n = h_prev.size();
  Eigen::VectorXd rhs(n);
  for (std::size_t c = 0; c < n; ++c) {
    rhs(c) = d.fixed[c] ? d.fixed_value(c) : d.storage(c) * h_prev[c] + d.source(c) + d.fixed_rhs(c);
  }
  return rhs;
}

template <typename Links>
double balance(const Links& links, const std::vector<char>& fixed,
               const Eigen::VectorXd& storage, const Eigen::VectorXd& source, const CellField& h_prev,
               const CellField& h_new) {
  double inflow = 0.0, outflow = 0.0, stored = 0.0;
  auto account = [&](double q) {
    if (q >= 0.0) inflow += q;
    else outflow -= q;
  };
  for (std::size_t c = 0; c < h_new.size(); ++c) {
    if (fixed[c]) continue;
    stored += storage(c) * (h_new[c] - h_prev[c]);
    if (source(c) != 0.0) account(source(c));
  }
  for (const auto& l : links) {
    const bool fa = fixed[l.a], fb = fixed[l.b];
    if (fa == fb) continue;
    // Flow from the prescribed-head cell into the active one.
    const std::size_t from = fa ? l.a : l.b;
    const std::size_t to = fa ? l.b : l.a;
    account(l.conductance * (h_new[from] - h_new[to]));
  }
  const double scale = std::max({inflow, outflow, std::abs(stored)});
  if (scale == 0.0) return 0.0;
  return std::abs(inflow - outflow - stored) / scale;
}

}  // namespace

StepSystem assemble_step_system(const FlowProblem& problem, const CellField& lnK, const CellField& h_prev) {
  problem.validate();
  if (!(h_prev.grid() == problem.grid)) throw std::invalid_argument("head field grid does not match the flow problem");
  Discretization d = discretize(problem, lnK);
  StepSystem sys;
  sys.rhs = step_rhs(d, h_prev);
  sys.storage = d.storage;
  sys.matrix = std::move(d.matrix);
  return sys;
}

TransientSolver::TransientSolver(const FlowProblem& problem, const CellField& lnK) : problem_(problem) {
  problem_.validate();
  Discretization d = discretize(problem_, lnK);
  for (const auto& l : d.links) links_.push_back({l.a, l.b, l.conductance});
  fixed_ = std::move(d.fixed);
  storage_ = std::move(d.storage);
  source_ = std::move(d.source);
  fixed_rhs_ = std::move(d.fixed_rhs);
  // Prescribed-head values are folded into the rhs per step; keep them in fixed_rhs_ rows.
  for (std::size_t c = 0; c < fixed_.size(); ++c) {
    if (fixed_[c]) fixed_rhs_(c) = d.fixed_value(c);
  }
  matrix_ = std::move(d.matrix);
  Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(matrix_.rows());
  for (Eigen::Index k = 0; k < matrix_.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(matrix_, k); it; ++it) row_sums(it.row()) += std::abs(it.value());
  matrix_norm_ = row_sums.maxCoeff();
  factor_.compute(matrix_);
  if (factor_.info() != Eigen::Success) throw NumericalError("flow matrix factorization failed");
}

CellField TransientSolver::step(const CellField& h_prev, int step_no) const {
  const std::size_t n = h_prev.size();
  Eigen::VectorXd rhs(n);
  for (std::size_t c = 0; c < n; ++c) {
    rhs(c) = fixed_[c] ? fixed_rhs_(c) : storage_(c) * h_prev[c] + source_(c) + fixed_rhs_(c);
  }
  Eigen::VectorXd h = factor_.solve(rhs);
  if (factor_.info() != Eigen::Success) throw NumericalError("linear solve failed at time step " + std::to_string(step_no));
  // Normwise backward error |r| / (|A| |h| + |b|). A plain |r| / |b| has a
  // rounding floor near eps * cond(A), which passes 1e-10 once ln K spans
  // about 12 units.
  const double bnorm = rhs.lpNorm<Eigen::Infinity>();
  auto backward_error = [&](const Eigen::VectorXd& r, const Eigen::VectorXd& x) {
    const double scale = matrix_norm_ * x.lpNorm<Eigen::Infinity>() + bnorm;
    const double rn = r.lpNorm<Eigen::Infinity>();
    return scale > 0.0 ? rn / scale : rn;
  };
  constexpr double tol = 1e-10;
  Eigen::VectorXd r = rhs - matrix_ * h;
  for (int pass = 0; pass < 3 && backward_error(r, h) > tol; ++pass) {
    h += factor_.solve(r);
    r = rhs - matrix_ * h;
  }
  const double err = backward_error(r, h);
  if (!std::isfinite(err) || !h.allFinite() || err > tol)
    throw NumericalError("linear solve did not converge at time step " + std::to_string(step_no));
  CellField out(h_prev.grid(), 0.0);
  for (std::size_t c = 0; c < n; ++c) out[c] = h(c);
  return out;
}

double TransientSolver::mass_balance(const CellField& h_prev, const CellField& h_new) const {
  return balance(links_, fixed_, storage_, source_, h_prev, h_new);
}

HeadSeries solve_transient(const FlowProblem& problem, const CellField& lnK, int n_steps) {
  if (n_steps < 0 || n_steps > problem.total_steps) throw std::invalid_argument("n_steps outside [0, total_steps]");
  TransientSolver solver(problem, lnK);
  HeadSeries series;
  series.heads.reserve(static_cast<std::size_t>(n_steps) + 1);
  series.max_mass_balance_residual = solver.run(n_steps, [&](int, const CellField& h) { series.heads.push_back(h); });
  return series;
}

std::vector<double> observe(const CellField& heads, const ObservationNetwork& network,
                            std::optional<std::uint64_t> noise_seed) {
  std::vector<double> out;
  out.reserve(network.size());
  for (const auto& c : network.locations) out.push_back(heads[cell_index(c, heads.grid())]);
  if (noise_seed && network.obs_error_std > 0.0) {
    Rng rng(*noise_seed);
    std::normal_distribution<double> normal(0.0, network.obs_error_std);
    for (auto& v : out) v += normal(rng);
  }
  return out;
}

double mass_balance_residual(const FlowProblem& problem, const CellField& lnK, const CellField& h_prev,
                             const CellField& h_new) {
  const Discretization d = discretize(problem, lnK);
  return balance(d.links, d.fixed, d.storage, d.source, h_prev, h_new);
}

}  // namespace assim
