#include "assim/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace assim {

std::string to_string(Phase p) {
  switch (p) {
    case Phase::Initial: return "initial";
    case Phase::Assimilation: return "assimilation";
    case Phase::Validation: return "validation";
  }
  return "unknown";
}

double rmse(const Ensemble& ensemble, const CellField& reference) {
  if (!(ensemble.grid() == reference.grid())) throw std::invalid_argument("ensemble and reference grids differ");
  double sum = 0.0;
  for (const auto& m : ensemble.members()) {
    for (std::size_t c = 0; c < m.size(); ++c) {
      const double e = m[c] - reference[c];
      sum += e * e;
    }
  }
  return std::sqrt(sum / (static_cast<double>(ensemble.size()) * static_cast<double>(reference.size())));
}

CellField ensemble_mean(const Ensemble& ensemble) {
  CellField mean(ensemble.grid(), 0.0);
  for (const auto& m : ensemble.members()) {
    for (std::size_t c = 0; c < m.size(); ++c) mean[c] += m[c];
  }
  for (auto& v : mean.values()) v /= static_cast<double>(ensemble.size());
  return mean;
}

CellField ensemble_variance(const Ensemble& ensemble) {
  const CellField mean = ensemble_mean(ensemble);
  CellField var(ensemble.grid(), 0.0);
  for (const auto& m : ensemble.members()) {
    for (std::size_t c = 0; c < m.size(); ++c) {
      const double e = m[c] - mean[c];
      var[c] += e * e;
    }
  }
  for (auto& v : var.values()) v /= static_cast<double>(ensemble.size() - 1);
  return var;
}

double asd(const Ensemble& ensemble) {
  const CellField var = ensemble_variance(ensemble);
  double sum = 0.0;
  for (double v : var.values()) sum += std::sqrt(v);
  return sum / static_cast<double>(var.size());
}

CellField standardized_discrepancy(const CellField& mean_field, const CellField& reference, double scenario_std) {
  if (!(mean_field.grid() == reference.grid())) throw std::invalid_argument("mean and reference grids differ");
  if (!(scenario_std > 0.0)) throw std::invalid_argument("scenario std must be positive");
  CellField out(reference.grid(), 0.0);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = (reference[c] - mean_field[c]) / scenario_std;
  return out;
}

double pearson_correlation(const CellField& a, const CellField& b) {
  if (a.size() != b.size() || a.size() == 0) throw std::invalid_argument("fields differ in size");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    ma += a[c];
    mb += b[c];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    sab += (a[c] - ma) * (b[c] - mb);
    saa += (a[c] - ma) * (a[c] - ma);
    sbb += (b[c] - mb) * (b[c] - mb);
  }
  // A spatially constant field carries no pattern.
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

namespace {

std::vector<std::vector<double>> member_mean(const std::vector<std::vector<std::vector<double>>>& heads,
                                             std::size_t steps, std::size_t points) {
  std::vector<std::vector<double>> mean(steps, std::vector<double>(points, 0.0));
  for (const auto& member : heads) {
    if (member.size() < steps) throw std::invalid_argument("member head series shorter than reference");
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t p = 0; p < points; ++p) mean[t][p] += member[t][p];
    }
  }
  for (auto& row : mean) {
    for (auto& v : row) v /= static_cast<double>(heads.size());
  }
  return mean;
}

}  // namespace

ControlPointTable control_point_series(const std::vector<Cell>& points, const ObservationNetwork& network,
                                       const std::vector<std::vector<double>>& reference_heads,
                                       const std::vector<std::vector<std::vector<double>>>& initial_heads,
                                       const std::vector<std::vector<std::vector<double>>>& final_heads) {
  if (reference_heads.empty()) throw std::invalid_argument("reference head series is empty");
  if (initial_heads.empty() || final_heads.empty()) throw std::invalid_argument("ensemble head series are empty");
  ControlPointTable table;
  table.points = points;
  for (const auto& p : points) {
    for (const auto& o : network.locations) {
      if (p == o) {
        table.warnings.push_back("control point (" + std::to_string(p.i) + ", " + std::to_string(p.j) +
                                 ") coincides with an observation location");
      }
    }
  }
  const std::size_t steps = reference_heads.size();
  const auto init = member_mean(initial_heads, steps, points.size());
  const auto fin = member_mean(final_heads, steps, points.size());
  for (std::size_t t = 1; t < steps; ++t) {
    table.steps.push_back(static_cast<int>(t));
    table.reference.push_back(reference_heads[t]);
    table.initial_mean.push_back(init[t]);
    table.final_mean.push_back(fin[t]);
  }
  return table;
}

}  // namespace assim
