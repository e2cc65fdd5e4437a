// SPDX-License-Identifier: Apache-2.0
//
// Disentanglement metrics over index representations: each sample is reduced
// to the N_R-vector of quantized filler indices, one per role.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "softtpr/boosted_trees.hpp"
#include "softtpr/dataset.hpp"
#include "softtpr/model.hpp"
#include "softtpr/tpr.hpp"

namespace softtpr {

/// One index vector per sample (zero-based filler indices).
using IndexRepresentation = std::vector<BindingSet>;

/// Quantized matching of every row of `observations` under the model.
IndexRepresentation to_index_repr(const SoftTprAutoencoder& model, const Matrix& observations);

// FactorVAE ----------------------------------------------------------------

struct FactorVaeBatch {
  std::size_t fixed_factor = 0;
  IndexRepresentation codes;
};

struct FactorVaeResult {
  double score = 0.0;
  std::size_t train_batches = 0;
  std::size_t test_batches = 0;
  /// Batches in which every dimension had zero dispersion (argmin fell to dim 0).
  std::size_t degenerate_batches = 0;
  std::vector<std::vector<std::size_t>> votes;  ///< [dimension][factor], training half
};

/// Per batch, predicts the fixed factor from the dimension with the smallest
/// dispersion. Dispersion of a dimension is the variance of its one-hot coded
/// index, 1 - Σ_c p_c², which depends only on how the batch is partitioned.
/// A majority-vote table fitted on the first half of the batches is scored on
/// the second half.
FactorVaeResult factorvae_score(std::span<const FactorVaeBatch> batches, std::size_t n_factors);

// DCI ----------------------------------------------------------------------

struct DciResult {
  double score = 0.0;
  Matrix importance;                  ///< codes x factors, columns sum to 1 (or 0)
  std::vector<double> disentanglement;  ///< per code
  std::vector<double> weight;           ///< per code
};

/// DCI disentanglement from boosted-tree importances. `codes` is samples x
/// code dimensions, `factors` is samples x factors. Needs at least 100 samples.
DciResult dci_score(const Matrix& codes, const Matrix& factors, FeatureKind kind,
                    const BoostingOptions& options = {});

/// DCI on an index representation (categorical codes) against factor records.
DciResult dci_score(const IndexRepresentation& codes, const std::vector<FactorRecord>& factors);

// BetaVAE ------------------------------------------------------------------

struct BetaVaePoint {
  std::size_t fixed_factor = 0;
  std::vector<std::pair<BindingSet, BindingSet>> pairs;
};

struct BetaVaeOptions {
  std::size_t epochs = 500;
  double lr = 0.01;
};

struct BetaVaeResult {
  double score = 0.0;
  std::size_t zero_norm_fillers = 0;
  std::size_t train_points = 0;
  std::size_t test_points = 0;
};

/// Per pair and role, the cosine similarity of the two quantized filler
/// embeddings, averaged over the pairs of a point.
Vector betavae_features(const FillerCodebook& codebook, const BetaVaePoint& point,
                        std::size_t* zero_norms = nullptr);

/// Softmax linear classifier (zero init, full-batch gradient descent) fitted on
/// the first half of the points, accuracy on the second half.
BetaVaeResult betavae_score(const FillerCodebook& codebook, std::span<const BetaVaePoint> points,
                            std::size_t n_factors, const BetaVaeOptions& options = {});

// MIG ----------------------------------------------------------------------

struct MigResult {
  double score = 0.0;
  Matrix mutual_information;  ///< codes x factors, nats
  std::vector<double> factor_entropy;
  std::vector<std::size_t> skipped_factors;  ///< constant factors
};

/// Plug-in discrete mutual information gap. Needs at least 100 samples.
MigResult mig_score(const IndexRepresentation& codes, const std::vector<FactorRecord>& factors);

// Model-level evaluation ---------------------------------------------------

struct MetricOptions {
  std::size_t factorvae_batches = 200;
  std::size_t factorvae_batch_size = 64;
  std::size_t dci_samples = 2000;
  std::size_t betavae_points = 400;
  std::size_t betavae_pairs_per_point = 16;
  std::size_t mig_samples = 2000;
  std::uint64_t seed = 0;

  friend bool operator==(const MetricOptions&, const MetricOptions&) = default;
};

struct MetricReport {
  double factorvae = 0.0;
  double dci = 0.0;
  double betavae = 0.0;
  double mig = 0.0;
  std::size_t factorvae_degenerate_batches = 0;
  std::size_t betavae_zero_norm_fillers = 0;
  std::size_t mig_skipped_factors = 0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// Samples evaluation data from the renderer and scores the model on all four metrics.
MetricReport evaluate_metrics(const SoftTprAutoencoder& model, const Renderer& renderer,
                              const MetricOptions& options = {});

/// Key-value text record, one `key=value` per line in fixed order.
std::string format_metric_report(const MetricReport& report);

}  // namespace softtpr
