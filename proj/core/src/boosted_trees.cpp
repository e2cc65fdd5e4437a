// SPDX-License-Identifier: Apache-2.0
#include "softtpr/boosted_trees.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace softtpr {

namespace {

struct Split {
  bool found = false;
  double gain = 0.0;
  std::size_t feature = 0;
  double threshold = 0.0;
  std::vector<double> left_categories;
};

double sse_term(double sum, double count) { return count > 0 ? sum * sum / count : 0.0; }

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const std::vector<double>& residual, FeatureKind kind,
              const BoostingOptions& o, std::vector<double>& importances)
      : x_(x), r_(residual), kind_(kind), o_(o), importances_(importances) {}

  template <typename Tree>
  void build(Tree& tree, std::vector<std::size_t> rows) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i : rows) {
      sum += r_[i];
      sq += r_[i] * r_[i];
    }
    root_sse_ = sq - sse_term(sum, static_cast<double>(rows.size()));
    tree.clear();
    grow(tree, std::move(rows), 0);
  }

 private:
  template <typename Tree>
  std::size_t grow(Tree& tree, std::vector<std::size_t> rows, std::size_t depth) {
    const std::size_t id = tree.size();
    tree.emplace_back();
    double sum = 0.0;
    for (std::size_t i : rows) sum += r_[i];
    tree[id].value = rows.empty() ? 0.0 : sum / static_cast<double>(rows.size());
    if (depth >= o_.max_depth || rows.size() < 2) return id;

    Split best = find_split(rows, sum);
    if (!best.found || !(best.gain > o_.min_relative_gain * root_sse_)) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t i : rows) (goes_left(best, x_(i, best.feature)) ? left : right).push_back(i);
    if (left.empty() || right.empty()) return id;

    importances_[best.feature] += best.gain;
    tree[id].leaf = false;
    tree[id].feature = best.feature;
    tree[id].threshold = best.threshold;
    tree[id].left_categories = best.left_categories;
    const std::size_t l = grow(tree, std::move(left), depth + 1);
    const std::size_t r = grow(tree, std::move(right), depth + 1);
    tree[id].left = l;
    tree[id].right = r;
    return id;
  }

  bool goes_left(const Split& s, double v) const {
    if (kind_ == FeatureKind::kNumeric) return v <= s.threshold;
    return std::binary_search(s.left_categories.begin(), s.left_categories.end(), v);
  }

  Split find_split(const std::vector<std::size_t>& rows, double total) const {
    const double n = static_cast<double>(rows.size());
    const double parent = sse_term(total, n);
    Split best;
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      // (value, sum of residuals, count) per distinct value in scan order.
      std::map<double, std::pair<double, double>> groups;
      for (std::size_t i : rows) {
        auto& g = groups[x_(i, f)];
        g.first += r_[i];
        g.second += 1.0;
      }
      if (groups.size() < 2) continue;
      std::vector<std::tuple<double, double, double>> ordered;
      ordered.reserve(groups.size());
      for (const auto& [v, g] : groups) ordered.emplace_back(v, g.first, g.second);
      if (kind_ == FeatureKind::kCategorical) {
        std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
          return std::get<1>(a) / std::get<2>(a) < std::get<1>(b) / std::get<2>(b);
        });
      }
      double left_sum = 0.0, left_n = 0.0;
      for (std::size_t k = 0; k + 1 < ordered.size(); ++k) {
        left_sum += std::get<1>(ordered[k]);
        left_n += std::get<2>(ordered[k]);
        const double gain = sse_term(left_sum, left_n) + sse_term(total - left_sum, n - left_n) - parent;
        if (!best.found || gain > best.gain) {
          best.found = true;
          best.gain = gain;
          best.feature = f;
          if (kind_ == FeatureKind::kNumeric) {
            best.threshold = 0.5 * (std::get<0>(ordered[k]) + std::get<0>(ordered[k + 1]));
            best.left_categories.clear();
          } else {
            best.left_categories.clear();
            for (std::size_t j = 0; j <= k; ++j) best.left_categories.push_back(std::get<0>(ordered[j]));
            std::sort(best.left_categories.begin(), best.left_categories.end());
          }
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  const std::vector<double>& r_;
  FeatureKind kind_;
  const BoostingOptions& o_;
  std::vector<double>& importances_;
  double root_sse_ = 0.0;
};

}  // namespace

BoostedTrees BoostedTrees::fit(const Matrix& features, std::span<const double> target, FeatureKind kind,
                               const BoostingOptions& options) {
  if (features.rows() != target.size() || features.rows() == 0) {
    throw std::invalid_argument("BoostedTrees::fit: need one target per non-empty row set");
  }
  BoostedTrees model;
  model.kind_ = kind;
  model.shrinkage_ = options.shrinkage;
  model.importances_.assign(features.cols(), 0.0);
  model.base_ = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(target.size());

  std::vector<double> prediction(target.size(), model.base_);
  std::vector<double> residual(target.size());
  std::vector<std::size_t> all(target.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  TreeBuilder builder(features, residual, kind, options, model.importances_);
  for (std::size_t round = 0; round < options.rounds; ++round) {
    for (std::size_t i = 0; i < target.size(); ++i) residual[i] = target[i] - prediction[i];
    Tree tree;
    builder.build(tree, all);
    for (std::size_t i = 0; i < target.size(); ++i) {
      prediction[i] += options.shrinkage * eval(tree, features.row(i), kind);
    }
    model.trees_.push_back(std::move(tree));
  }
  return model;
}

double BoostedTrees::eval(const Tree& tree, std::span<const double> row, FeatureKind kind) {
  std::size_t id = 0;
  while (!tree[id].leaf) {
    const Node& n = tree[id];
    const double v = row[n.feature];
    const bool left = kind == FeatureKind::kNumeric
                          ? v <= n.threshold
                          : std::binary_search(n.left_categories.begin(), n.left_categories.end(), v);
    id = left ? n.left : n.right;
  }
  return tree[id].value;
}

double BoostedTrees::predict(std::span<const double> row) const {
  double p = base_;
  for (const auto& t : trees_) p += shrinkage_ * eval(t, row, kind_);
  return p;
}

std::vector<double> BoostedTrees::normalized_importances() const {
  const double total = std::accumulate(importances_.begin(), importances_.end(), 0.0);
  std::vector<double> out(importances_.size(), 0.0);
  if (total > 0.0)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = importances_[i] / total;
  return out;
}

}  // namespace softtpr
