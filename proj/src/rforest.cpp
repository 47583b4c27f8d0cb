#include "assim/rforest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "assim/core.hpp"

namespace assim {

void ForestHyperparams::validate() const {
  if (n_trees < 1) throw ConfigError("n_trees must be at least 1");
  if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be at least 1");
  if (min_samples_split < 2) throw ConfigError("min_samples_split must be at least 2");
  if (!(max_features_fraction > 0.0 && max_features_fraction <= 1.0))
    throw ConfigError("max_features_fraction must be in (0, 1]");
}

int ForestHyperparams::features_per_split(int n_features) const {
  // The small offset keeps exact products such as 0.65 * 20 from rounding up.
  const int k = static_cast<int>(std::ceil(max_features_fraction * n_features - 1e-9));
  return std::clamp(k, 1, std::max(n_features, 1));
}

FeatureMatrix FeatureMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  FeatureMatrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw std::invalid_argument("ragged feature rows");
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

std::vector<double> FeatureMatrix::row(std::size_t r) const {
  std::vector<double> out(cols_);
  for (std::size_t c = 0; c < cols_; ++c) out[c] = (*this)(r, c);
  return out;
}

const RegressionTree::Node& RegressionTree::leaf_for(std::span<const double> x) const {
  const Node* node = &nodes.front();
  while (node->feature >= 0) {
    node = &nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left
                                                                                                           : node->right)];
  }
  return *node;
}

double RegressionTree::predict(std::span<const double> x) const { return leaf_for(x).value; }

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.feature < 0; }));
}

double Forest::predict(std::span<const double> x) const {
  if (x.size() != n_features) throw std::invalid_argument("query dimension does not match the forest");
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  return sum / static_cast<double>(trees.size());
}

double predict(const Forest& forest, std::span<const double> x) { return forest.predict(x); }

PresortedFeatures::PresortedFeatures(FeatureMatrix x) : x_(std::move(x)), order_(x_.rows() * x_.cols()) {
  const std::size_t n = x_.rows();
  for (std::size_t f = 0; f < x_.cols(); ++f) {
    auto col = x_.column(f);
    auto out = order_.begin() + static_cast<std::ptrdiff_t>(f * n);
    std::iota(out, out + static_cast<std::ptrdiff_t>(n), 0);
    std::stable_sort(out, out + static_cast<std::ptrdiff_t>(n), [&](std::int32_t a, std::int32_t b) { return col[a] < col[b]; });
  }
}

std::vector<std::uint32_t> bootstrap_counts(std::size_t n, Rng& rng) {
  std::vector<std::uint32_t> counts(n, 0);
  if (n == 0) return counts;
  for (std::size_t k = 0; k < n; ++k) ++counts[draw_below(rng, n)];
  return counts;
}

namespace {

/// Builds one tree from presorted, weighted rows. Every feature keeps its
/// own sorted index list; a node is the same [begin, end) range in all of
/// them, and splitting stably partitions each list.
class TreeBuilder {
 public:
  TreeBuilder(const PresortedFeatures& data, std::span<const double> scale, std::span<const double> y,
              const ForestHyperparams& hp)
      : data_(data), y_(y), hp_(hp) {
    const FeatureMatrix& x = data_.matrix();
    const std::size_t n = x.rows();
    values_.resize(n * x.cols());
    for (std::size_t f = 0; f < x.cols(); ++f) {
      const double sc = scale.empty() ? 1.0 : scale[f];
      const auto col = x.column(f);
      for (std::size_t r = 0; r < n; ++r) values_[f * n + r] = sc * col[r];
    }
    weight_.resize(n);
    weighted_y_.resize(n);
    goes_left_.assign(n, 0);
    perm_.resize(x.cols());
    chosen_.assign(x.cols(), 0);
    features_.reserve(x.cols());
  }

  RegressionTree build(std::span<const std::uint32_t> counts, Rng& rng) {
    const std::size_t n = data_.matrix().rows();
    const std::size_t d = data_.matrix().cols();

    std::size_t m = 0;
    for (std::size_t r = 0; r < n; ++r) {
      weight_[r] = counts[r];
      weighted_y_[r] = counts[r] * y_[r];
      m += counts[r] > 0 ? 1 : 0;
    }
    m_ = m;
    idx_.resize(d * m);
    for (std::size_t f = 0; f < d; ++f) {
      std::int32_t* out = idx_.data() + f * m;
      for (std::int32_t r : data_.order(f)) {
        if (counts[static_cast<std::size_t>(r)] > 0) *out++ = r;
      }
    }
    scratch_.resize(m);

    RegressionTree tree;
    struct Pending {
      std::size_t begin, end;
      int node;
    };
    std::vector<Pending> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, m, 0});
    const int k_features = hp_.features_per_split(static_cast<int>(d));
    const double min_leaf = hp_.min_samples_leaf;
    const double* wt = weight_.data();
    const double* wy = weighted_y_.data();

    while (!stack.empty()) {
      const Pending cur = stack.back();
      stack.pop_back();

      const std::int32_t* rows = idx_.data();  // feature 0 list
      double w = 0.0, s = 0.0;
      for (std::size_t p = cur.begin; p < cur.end; ++p) {
        w += wt[rows[p]];
        s += wy[rows[p]];
      }
      const double mean = s / w;
      double sse = 0.0;
      for (std::size_t p = cur.begin; p < cur.end; ++p) {
        const double e = y_[static_cast<std::size_t>(rows[p])] - mean;
        sse += wt[rows[p]] * e * e;
      }
      {
        auto& node = tree.nodes[static_cast<std::size_t>(cur.node)];
        node.value = mean;
        node.weight = w;
      }
      if (w < hp_.min_samples_split || w < 2.0 * min_leaf || sse <= 1e-20 * w * (1.0 + mean * mean)) continue;

      // Candidate features: partial Fisher-Yates, visited in ascending order
      // so ties go to the lowest feature.
      std::iota(perm_.begin(), perm_.end(), 0);
      for (std::size_t q = 0; q < static_cast<std::size_t>(k_features); ++q) {
        std::swap(perm_[q], perm_[q + static_cast<std::size_t>(draw_below(rng, d - q))]);
        chosen_[static_cast<std::size_t>(perm_[q])] = 1;
      }
      features_.clear();
      for (std::size_t f = 0; f < d; ++f) {
        if (chosen_[f]) features_.push_back(f);
        chosen_[f] = 0;
      }

      // Weighted child SSE drops by sl^2 / (wl * wr), sl being the centered
      // left sum. A candidate wins if it beats the current best by the
      // relative tie tolerance; the threshold below folds that in.
      constexpr double tie = 1.0 + 1e-12;
      double best_gain = 1e-10 * sse / w;
      double bar = best_gain * tie;
      int best_feature = -1;
      std::size_t best_pos = 0;
      double best_wl = 0.0;
      for (const std::size_t f : features_) {
        const std::int32_t* list = idx_.data() + f * m_;
        const double* val = values_.data() + f * n;
        // Positions p in [lo, hi) leave at least min_leaf weight on both sides.
        std::size_t lo = cur.begin;
        double wl = 0.0, sl = 0.0;
        while (lo + 1 < cur.end) {
          wl += wt[list[lo]];
          sl += wy[list[lo]];
          if (wl >= min_leaf) break;
          ++lo;
        }
        std::size_t hi = cur.end;
        for (double tail = 0.0; hi > cur.begin;) {
          tail += wt[list[hi - 1]];
          --hi;
          if (tail >= min_leaf) break;
        }
        // lo is the first admissible position and its weight is already summed.
        auto consider = [&](std::size_t p) {
          const double centered = sl - mean * wl;
          if (centered * centered > bar * (wl * (w - wl))) {
            if (val[list[p + 1]] > val[list[p]]) {
              best_gain = centered * centered / (wl * (w - wl));
              bar = best_gain * tie;
              best_feature = static_cast<int>(f);
              best_pos = p;
              best_wl = wl;
            }
          }
        };
        if (lo < hi) consider(lo);
        for (std::size_t p = lo + 1; p < hi; ++p) {
          const std::int32_t r = list[p];
          wl += wt[r];
          sl += wy[r];
          consider(p);
        }
      }
      if (best_feature < 0) continue;

      const std::int32_t* split_list = idx_.data() + static_cast<std::size_t>(best_feature) * m_;
      const double best_lo = values_[static_cast<std::size_t>(best_feature) * n + static_cast<std::size_t>(split_list[best_pos])];
      const double best_hi = values_[static_cast<std::size_t>(best_feature) * n + static_cast<std::size_t>(split_list[best_pos + 1])];
      double threshold = 0.5 * (best_lo + best_hi);
      if (!(threshold < best_hi)) threshold = best_lo;

      const std::size_t mid = best_pos + 1;
      const double leaf_below = std::max<double>(hp_.min_samples_split, 2.0 * min_leaf);
      const bool children_are_leaves = best_wl < leaf_below && w - best_wl < leaf_below;
      // Leaves only need their rows in the feature-0 list.
      partition(cur.begin, mid, cur.end, static_cast<std::size_t>(best_feature), children_are_leaves ? 1 : d);

      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[static_cast<std::size_t>(cur.node)];
      node.feature = best_feature;
      node.threshold = threshold;
      node.left = left;
      node.right = left + 1;
      stack.push_back({mid, cur.end, left + 1});
      stack.push_back({cur.begin, mid, left});
    }
    return tree;
  }

 private:
  // Stably partitions lists 0..n_lists-1 (except the split feature's, which
  // is already in order) so [begin, mid) holds the left child's rows.
  void partition(std::size_t begin, std::size_t mid, std::size_t end, std::size_t split_feature, std::size_t n_lists) {
    const std::int32_t* split_list = idx_.data() + split_feature * m_;
    char* flag = goes_left_.data();
    for (std::size_t p = begin; p < mid; ++p) flag[split_list[p]] = 1;
    for (std::size_t p = mid; p < end; ++p) flag[split_list[p]] = 0;
    std::int32_t* spill_buf = scratch_.data();
    for (std::size_t f = 0; f < n_lists; ++f) {
      if (f == split_feature) continue;
      std::int32_t* list = idx_.data() + f * m_;
      std::size_t out = begin;
      // Rows seen so far minus rows kept on the left is the spill count.
      for (std::size_t p = begin; p < end; ++p) {
        const std::int32_t r = list[p];
        list[out] = r;
        spill_buf[p - out] = r;
        out += static_cast<std::size_t>(flag[r]);
      }
      const std::size_t spill = end - out;
      std::copy(spill_buf, spill_buf + spill, list + out);
    }
  }

  const PresortedFeatures& data_;
  std::span<const double> y_;
  const ForestHyperparams& hp_;
  std::vector<double> values_;      // scaled features, column by column
  std::vector<double> weight_;      // bootstrap multiplicity per row
  std::vector<double> weighted_y_;  // multiplicity * target
  std::size_t m_ = 0;
  std::vector<std::int32_t> idx_;
  std::vector<char> goes_left_;
  std::vector<std::int32_t> scratch_;
  std::vector<int> perm_;
  std::vector<char> chosen_;
  std::vector<std::size_t> features_;
};

void check_training_set(const FeatureMatrix& x, std::span<const double> y) {
  if (x.rows() == 0 || x.cols() == 0) throw std::invalid_argument("empty training set");
  if (y.size() != x.rows()) throw std::invalid_argument("target length does not match feature rows");
}

}  // namespace

RegressionTree fit_tree(const FeatureMatrix& x, std::span<const double> y, const ForestHyperparams& hp, Rng& rng) {
  check_training_set(x, y);
  hp.validate();
  const PresortedFeatures data(x);
  const std::vector<std::uint32_t> ones(x.rows(), 1);
  TreeBuilder builder(data, {}, y, hp);
  return builder.build(ones, rng);
}

Forest fit_forest(const PresortedFeatures& x, std::span<const double> column_scale, std::span<const double> y,
                  const ForestHyperparams& hp) {
  const FeatureMatrix& m = x.matrix();
  check_training_set(m, y);
  hp.validate();
  if (!column_scale.empty()) {
    if (column_scale.size() != m.cols()) throw std::invalid_argument("column scale length does not match features");
    for (double s : column_scale) {
      if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("column scales must be positive and finite");
    }
  }

  Forest forest;
  forest.hyperparams = hp;
  forest.n_features = m.cols();
  forest.trees.reserve(static_cast<std::size_t>(hp.n_trees));
  forest.out_of_bag_fraction.reserve(static_cast<std::size_t>(hp.n_trees));
  TreeBuilder builder(x, column_scale, y, hp);
  const std::vector<std::uint32_t> ones(m.rows(), 1);
  for (int b = 0; b < hp.n_trees; ++b) {
    Rng rng(derive_seed(hp.seed, static_cast<std::uint64_t>(b)));
    if (hp.bootstrap) {
      const auto counts = bootstrap_counts(m.rows(), rng);
      const auto missing = std::count(counts.begin(), counts.end(), 0u);
      forest.out_of_bag_fraction.push_back(static_cast<double>(missing) / static_cast<double>(m.rows()));
      forest.trees.push_back(builder.build(counts, rng));
    } else {
      forest.out_of_bag_fraction.push_back(0.0);
      forest.trees.push_back(builder.build(ones, rng));
    }
  }
  return forest;
}

Forest fit_forest(const FeatureMatrix& x, std::span<const double> y, const ForestHyperparams& hp) {
  check_training_set(x, y);
  return fit_forest(PresortedFeatures(x), {}, y, hp);
}

}  // namespace assim
