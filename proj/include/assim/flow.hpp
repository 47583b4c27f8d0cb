#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "assim/core.hpp"

namespace assim {

/// Forward model definition: 2D confined flow, block-centered finite
/// differences, backward Euler in time.
struct FlowProblem {
  GridSpec grid;
  std::vector<std::size_t> head_cells;
  std::vector<double> head_values;   // m
  std::vector<std::size_t> flux_cells;
  std::vector<double> flux_values;   // m^3/d into the cell; negative is withdrawal
  double storativity = 0.01;
  double thickness = 1.0;
  double dt = 0.05;                  // days
  int total_steps = 100;
  CellField initial_heads;

  /// West column at 0 m, east column sharing `east_flux` (or carrying it
  /// per cell when `per_cell`), impervious north and south, 0 m initial heads.
  static FlowProblem standard(const GridSpec& grid = {}, double east_flux = -200.0, bool per_cell = false,
                              double storativity = 0.01, double thickness = 1.0, double total_time = 5.0,
                              int total_steps = 100);

  void validate() const;
};

struct StepSystem {
  Eigen::SparseMatrix<double> matrix;
  Eigen::VectorXd rhs;
  Eigen::VectorXd storage;  // per-cell S*A/dt, zero on prescribed-head cells
};

/// Implicit step system. Prescribed-head rows are identity rows and their
/// couplings are moved to the right-hand side so the matrix stays symmetric.
StepSystem assemble_step_system(const FlowProblem& problem, const CellField& lnK, const CellField& h_prev);

/// Heads at t = 0..n_steps; heads[0] is the initial condition.
struct HeadSeries {
  std::vector<CellField> heads;
  double max_mass_balance_residual = 0.0;

  int steps() const { return static_cast<int>(heads.size()) - 1; }
  const CellField& at(int t) const { return heads.at(static_cast<std::size_t>(t)); }
};

/// Factorizes the step matrix once for a conductivity field and advances
/// heads step by step. The matrix is time-invariant for a fixed dt.
class TransientSolver {
 public:
  TransientSolver(const FlowProblem& problem, const CellField& lnK);

  /// One backward-Euler step. `step_no` only labels errors.
  CellField step(const CellField& h_prev, int step_no) const;

  /// Relative discrete mass-balance residual of one step.
  double mass_balance(const CellField& h_prev, const CellField& h_new) const;

  /// Runs n_steps from the initial condition; `visit(t, heads)` sees every state including t = 0.
  template <typename Visit>
  double run(int n_steps, Visit&& visit) const {
    CellField h = problem_.initial_heads;
    visit(0, h);
    double worst = 0.0;
    for (int t = 1; t <= n_steps; ++t) {
      CellField next = step(h, t);
      worst = std::max(worst, mass_balance(h, next));
      h = std::move(next);
      visit(t, h);
    }
    return worst;
  }

 private:
  struct Link {
    std::size_t a, b;
    double conductance;
  };

  FlowProblem problem_;
  std::vector<Link> links_;
  std::vector<char> fixed_;
  Eigen::VectorXd storage_;
  Eigen::VectorXd source_;
  Eigen::VectorXd fixed_rhs_;
  Eigen::SparseMatrix<double> matrix_;
  double matrix_norm_ = 0.0;  // infinity norm
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor_;
};

HeadSeries solve_transient(const FlowProblem& problem, const CellField& lnK, int n_steps);

/// Heads at the network cells, with Gaussian noise of the network's error
/// std added only when a noise seed is supplied.
std::vector<double> observe(const CellField& heads, const ObservationNetwork& network,
                            std::optional<std::uint64_t> noise_seed = std::nullopt);

double mass_balance_residual(const FlowProblem& problem, const CellField& lnK, const CellField& h_prev,
                             const CellField& h_new);

}  // namespace assim
