// SPDX-License-Identifier: Apache-2.0
#include "softtpr/soft_tpr.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "softtpr/errors.hpp"

namespace softtpr {

std::size_t nearest_filler(const FillerCodebook& fillers, std::span<const double> soft_filler) {
  const Matrix& e = fillers.embeddings();
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < fillers.count(); ++j) {
    double d = 0.0;
    for (std::size_t a = 0; a < e.rows(); ++a) {
      const double diff = soft_filler[a] - e(a, j);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

QuantizationResult quantize_greedy(const RoleSpace& roles, const FillerCodebook& fillers,
                                   const SoftTpr& z) {
  if (z.vector.size() != fillers.dim() * roles.dim()) {
    throw std::invalid_argument("quantize_greedy: z has dimension " +
                                std::to_string(z.vector.size()) + ", expected " +
                                std::to_string(fillers.dim() * roles.dim()));
  }
  QuantizationResult q;
  q.tpr.matching.filler_of_role.resize(roles.count());
  q.soft_fillers.reserve(roles.count());
  q.per_role_errors.reserve(roles.count());
  for (std::size_t i = 0; i < roles.count(); ++i) {
    Vector f = unbind(roles, z.vector.span(), i);
    const std::size_t j = nearest_filler(fillers, f.span());
    q.tpr.matching.filler_of_role[i] = j;
    q.per_role_errors.push_back(std::sqrt(squared_distance(f.span(), fillers.filler(j).span())));
    q.soft_fillers.push_back(std::move(f));
  }
  q.tpr = compose(roles, fillers, q.tpr.matching);
  q.residual = std::sqrt(squared_distance(z.vector.span(), q.tpr.vector.span()));
  return q;
}

ExplicitTpr quantize_global_bruteforce(const RoleSpace& roles, const FillerCodebook& fillers,
                                       const SoftTpr& z) {
  const std::size_t n_r = roles.count();
  const std::size_t n_f = fillers.count();
  if (std::pow(static_cast<double>(n_f), static_cast<double>(n_r)) > kBruteForceLimit) {
    throw CapacityError("quantize_global_bruteforce: " + std::to_string(n_f) + "^" +
                        std::to_string(n_r) + " matchings exceed the search limit");
  }
  if (z.vector.size() != fillers.dim() * roles.dim()) {
    throw std::invalid_argument("quantize_global_bruteforce: dimension mismatch");
  }
  // Precompute every binding so each candidate is a sum of n_r cached vectors.
  std::vector<std::vector<Vector>> bindings(n_r);
  for (std::size_t i = 0; i < n_r; ++i) {
    const Vector r = roles.embedding(i);
    for (std::size_t j = 0; j < n_f; ++j) bindings[i].push_back(outer_flatten(fillers.filler(j), r));
  }

  BindingSet current{std::vector<std::size_t>(n_r, 0)};
  BindingSet best = current;
  double best_obj = std::numeric_limits<double>::infinity();
  Vector candidate(z.vector.size());
  while (true) {
    std::fill(candidate.begin(), candidate.end(), 0.0);
    for (std::size_t i = 0; i < n_r; ++i) candidate += bindings[i][current[i]];
    const double obj = squared_distance(z.vector.span(), candidate.span());
    // Odometer order is lexicographic, so strict < keeps the smallest tied matching.
    if (obj < best_obj) {
      best_obj = obj;
      best = current;
    }
    std::size_t pos = n_r;
    while (pos > 0) {
      --pos;
      if (++current.filler_of_role[pos] < n_f) break;
      current.filler_of_role[pos] = 0;
      if (pos == 0) return compose(roles, fillers, best);
    }
  }
}

VqLoss vq_loss(const FillerCodebook& fillers, std::span<const Vector> soft_fillers,
               const BindingSet& matching, double beta) {
  if (beta < 0.0) throw std::invalid_argument("vq_loss: beta must be non-negative");
  validate_binding(matching, soft_fillers.size(), fillers.count());
  const double n_r = static_cast<double>(soft_fillers.size());
  VqLoss out;
  out.grad_codebook = Matrix(fillers.dim(), fillers.count());
  out.grad_soft_fillers.reserve(soft_fillers.size());
  for (std::size_t i = 0; i < soft_fillers.size(); ++i) {
    const Vector e = fillers.filler(matching[i]);
    const Vector& f = soft_fillers[i];
    const double d2 = squared_distance(e.span(), f.span());
    out.value += (d2 + beta * d2) / n_r;
    // Term 1: codebook entry frozen, gradient to the soft filler.
    Vector g(f.size());
    for (std::size_t a = 0; a < f.size(); ++a) g[a] = 2.0 * (f[a] - e[a]) / n_r;
    out.grad_soft_fillers.push_back(std::move(g));
    // Term 2: soft filler frozen, gradient to the codebook entry.
    for (std::size_t a = 0; a < f.size(); ++a) {
      out.grad_codebook(a, matching[i]) += 2.0 * beta * (e[a] - f[a]) / n_r;
    }
  }
  return out;
}

}  // namespace softtpr
