// SPDX-License-Identifier: Apache-2.0
//
// Small deterministic gradient-boosted regression trees (squared loss), used
// to derive feature importances for the DCI score.
#pragma once

#include <cstddef>
#include <vector>

#include "softtpr/linalg.hpp"

namespace softtpr {

enum class FeatureKind {
  kNumeric,      ///< threshold splits x <= t
  kCategorical,  ///< subset splits; categories ordered by mean residual
};

struct BoostingOptions {
  std::size_t rounds = 10;
  std::size_t max_depth = 3;
  double shrinkage = 0.3;
  /// A split must reduce squared error by more than this fraction of the
  /// tree's root squared error.
  double min_relative_gain = 1e-12;
};

class BoostedTrees {
 public:
  /// Fits on rows of `features`. Split ties resolve to the lowest feature index
  /// and then the first candidate in scan order, so fits are deterministic.
  static BoostedTrees fit(const Matrix& features, std::span<const double> target, FeatureKind kind,
                          const BoostingOptions& options = {});

  double predict(std::span<const double> row) const;

  /// Total squared-error reduction credited to each feature over all trees.
  const std::vector<double>& raw_importances() const noexcept { return importances_; }
  /// raw_importances() scaled to sum to 1; all zeros when no split was made.
  std::vector<double> normalized_importances() const;

  std::size_t tree_count() const noexcept { return trees_.size(); }

 private:
  struct Node {
    bool leaf = true;
    double value = 0.0;
    std::size_t feature = 0;
    double threshold = 0.0;
    std::vector<double> left_categories;  // sorted
    std::size_t left = 0;
    std::size_t right = 0;
  };
  using Tree = std::vector<Node>;

  static double eval(const Tree& tree, std::span<const double> row, FeatureKind kind);

  FeatureKind kind_ = FeatureKind::kNumeric;
  double base_ = 0.0;
  double shrinkage_ = 0.3;
  std::vector<Tree> trees_;
  std::vector<double> importances_;
};

}  // namespace softtpr
