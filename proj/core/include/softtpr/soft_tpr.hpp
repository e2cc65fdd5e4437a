// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "softtpr/linalg.hpp"
#include "softtpr/tpr.hpp"

namespace softtpr {

/// Any point of R^{D_F * D_R}; read relative to a role space and filler codebook.
struct SoftTpr {
  Vector vector;
};

struct QuantizationResult {
  ExplicitTpr tpr;
  std::vector<Vector> soft_fillers;   ///< unbind(z, i) for each role
  double residual = 0.0;              ///< ||z - tpr.vector||_2
  std::vector<double> per_role_errors;  ///< ||soft_filler_i - filler(m(i))||_2
};

/// Index of the codebook column nearest to `soft_filler`; ties go to the lowest index.
std::size_t nearest_filler(const FillerCodebook& fillers, std::span<const double> soft_filler);

/// Unbinds every role, snaps each soft filler to its nearest codebook entry,
/// and rebuilds the explicit TPR from those entries.
QuantizationResult quantize_greedy(const RoleSpace& roles, const FillerCodebook& fillers,
                                   const SoftTpr& z);

inline constexpr double kBruteForceLimit = 1e6;

/// Exhaustive minimizer of ||z - compose(m)|| over all N_F^N_R matchings.
/// Ties resolve to the lexicographically smallest matching. Throws CapacityError
/// when the search space exceeds kBruteForceLimit.
ExplicitTpr quantize_global_bruteforce(const RoleSpace& roles, const FillerCodebook& fillers,
                                       const SoftTpr& z);

/// VQ codebook + commitment loss with its gradient routing made explicit:
/// `grad_soft_fillers` flows to the encoder only, `grad_codebook` to the
/// matched codebook columns only.
struct VqLoss {
  double value = 0.0;
  std::vector<Vector> grad_soft_fillers;
  Matrix grad_codebook;  ///< D_F x N_F
};

VqLoss vq_loss(const FillerCodebook& fillers, std::span<const Vector> soft_fillers,
               const BindingSet& matching, double beta = 0.5);

}  // namespace softtpr
