#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "assim/parallel.hpp"

namespace assim {

struct ForestHyperparams {
  int n_trees = 120;
  int min_samples_split = 2;
  int min_samples_leaf = 3;
  double max_features_fraction = 0.65;
  std::uint64_t seed = 10;
  bool bootstrap = true;  // test hook: false trains every tree on the full data set

  void validate() const;
  /// ceil(fraction * d), at least 1.
  int features_per_split(int n_features) const;
};

/// Dense n x d feature matrix stored column by column.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t r, std::size_t c) const { return data_[c * rows_ + r]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[c * rows_ + r]; }
  std::span<const double> column(std::size_t c) const { return {data_.data() + c * rows_, rows_}; }
  std::vector<double> row(std::size_t r) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;     // mean target of the node's training rows
    double weight = 0.0;    // training rows in the node, counting bootstrap repeats
  };

  std::vector<Node> nodes;

  double predict(std::span<const double> x) const;
  const Node& leaf_for(std::span<const double> x) const;
  std::size_t leaf_count() const;
};

class Forest {
 public:
  std::vector<RegressionTree> trees;
  ForestHyperparams hyperparams;
  std::size_t n_features = 0;
  std::vector<double> out_of_bag_fraction;  // per tree; zero when bootstrap is off

  double predict(std::span<const double> x) const;
};

/// Training features with each column's row order computed once. Forests
/// fitted from one presorted set may apply positive per-column scales; a
/// positive scale keeps the order, so the sort is shared.
class PresortedFeatures {
 public:
  explicit PresortedFeatures(FeatureMatrix x);

  const FeatureMatrix& matrix() const { return x_; }
  std::span<const std::int32_t> order(std::size_t feature) const {
    return {order_.data() + feature * x_.rows(), x_.rows()};
  }

 private:
  FeatureMatrix x_;
  std::vector<std::int32_t> order_;
};

/// Multiplicities of an n-row bootstrap resample.
std::vector<std::uint32_t> bootstrap_counts(std::size_t n, Rng& rng);

/// Greedy variance-reduction CART on the full data set. `rng` drives the
/// per-node feature subsampling.
RegressionTree fit_tree(const FeatureMatrix& x, std::span<const double> y, const ForestHyperparams& hp, Rng& rng);

Forest fit_forest(const FeatureMatrix& x, std::span<const double> y, const ForestHyperparams& hp);

/// Same as fit_forest on the matrix whose column k is multiplied by
/// column_scale[k] (> 0). Thresholds live in the scaled space.
Forest fit_forest(const PresortedFeatures& x, std::span<const double> column_scale, std::span<const double> y,
                  const ForestHyperparams& hp);

double predict(const Forest& forest, std::span<const double> x);

}  // namespace assim
