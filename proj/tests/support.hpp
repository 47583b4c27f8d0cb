#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "assim/core.hpp"
#include "assim/parallel.hpp"

namespace assim::test {

inline Ensemble random_ensemble(const GridSpec& grid, int n_e, Rng& rng, double mean = 4.0, double std = 1.0) {
  std::normal_distribution<double> normal(mean, std);
  std::vector<CellField> members;
  for (int i = 0; i < n_e; ++i) {
    CellField f(grid);
    for (auto& v : f.values()) v = normal(rng);
    members.push_back(std::move(f));
  }
  return Ensemble(std::move(members));
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
  return m;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace assim::test
