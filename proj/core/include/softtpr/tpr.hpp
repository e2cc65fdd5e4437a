// SPDX-License-Identifier: Apache-2.0
//
// Tensor product representations: role/filler embeddings, binding by outer
// product, and unbinding by contraction with a left inverse of the role matrix.
//
// Vector layout: a TPR over D_F-dimensional fillers and D_R-dimensional roles
// lives in R^{D_F * D_R}; entry j * D_F + i is row i, column j of the
// D_F x D_R matrix form.
#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "softtpr/linalg.hpp"
#include "softtpr/rng.hpp"

namespace softtpr {

enum class RoleMode { kSemiOrthogonal, kIdentity, kGeneral };

std::string_view to_string(RoleMode mode);
RoleMode role_mode_from_string(std::string_view name);

/// Frozen role embeddings (one per column) and their unbinding vectors.
///
/// Invariant: unbinders.column(i) · embeddings.column(j) == δ_ij to 1e-8.
class RoleSpace {
 public:
  /// Dense semi-orthogonal D_R x N_R embedding; unbinders are the embeddings themselves.
  static RoleSpace semi_orthogonal(std::size_t d_r, std::size_t n_r, SeededRng& rng);
  /// Canonical basis roles (D_R == N_R). TPRs become filler concatenations.
  static RoleSpace identity(std::size_t n_r);
  /// Arbitrary full-column-rank embedding; unbinders come from the left inverse.
  static RoleSpace general(Matrix embeddings);
  /// Rebuilds a role space from stored parts, re-checking the δ property.
  static RoleSpace from_parts(RoleMode mode, Matrix embeddings, Matrix unbinders);

  RoleMode mode() const noexcept { return mode_; }
  std::size_t dim() const noexcept { return embeddings_.rows(); }
  std::size_t count() const noexcept { return embeddings_.cols(); }
  const Matrix& embeddings() const noexcept { return embeddings_; }
  const Matrix& unbinders() const noexcept { return unbinders_; }
  Vector embedding(std::size_t i) const { return embeddings_.column(i); }
  Vector unbinder(std::size_t i) const { return unbinders_.column(i); }

  friend bool operator==(const RoleSpace&, const RoleSpace&) = default;

 private:
  RoleSpace(RoleMode mode, Matrix embeddings, Matrix unbinders);

  RoleMode mode_;
  Matrix embeddings_;
  Matrix unbinders_;
};

/// Filler embeddings, one per column of a D_F x N_F matrix.
class FillerCodebook {
 public:
  /// Throws std::invalid_argument on non-finite entries or two columns equal to within 1e-12.
  explicit FillerCodebook(Matrix embeddings);

  static FillerCodebook random_normal(std::size_t d_f, std::size_t n_f, double scale,
                                      SeededRng& rng);

  std::size_t dim() const noexcept { return embeddings_.rows(); }
  std::size_t count() const noexcept { return embeddings_.cols(); }
  const Matrix& embeddings() const noexcept { return embeddings_; }
  Vector filler(std::size_t j) const { return embeddings_.column(j); }

  friend bool operator==(const FillerCodebook&, const FillerCodebook&) = default;

 private:
  Matrix embeddings_;
};

/// Matching function m: role position -> filler index, both zero-based.
/// Fillers may repeat across roles.
struct BindingSet {
  std::vector<std::size_t> filler_of_role;

  std::size_t size() const noexcept { return filler_of_role.size(); }
  std::size_t operator[](std::size_t role) const { return filler_of_role[role]; }

  friend bool operator==(const BindingSet&, const BindingSet&) = default;
};

struct ExplicitTpr {
  Vector vector;
  BindingSet matching;

  friend bool operator==(const ExplicitTpr&, const ExplicitTpr&) = default;
};

/// Sum over roles of filler(m(i)) ⊗ role(i).
ExplicitTpr compose(const RoleSpace& roles, const FillerCodebook& fillers, const BindingSet& m);

/// Same sum with explicitly supplied filler vectors (one per role).
Vector compose_vectors(const RoleSpace& roles, std::span<const Vector> fillers_per_role);

/// Contracts the matrix form of z with unbinding vector u_i.
Vector unbind(const RoleSpace& roles, std::span<const double> z, std::size_t role);
Vector unbind(const RoleSpace& roles, std::span<const double> z, const Vector& unbinding_vector);

/// Swaps role `role` between two bindings: returns (m with m'(role), m' with m(role)) composed.
std::pair<ExplicitTpr, ExplicitTpr> swap_tprs(const RoleSpace& roles,
                                              const FillerCodebook& fillers,
                                              const BindingSet& m, const BindingSet& m_prime,
                                              std::size_t role);

struct DegenerateCheck {
  bool degenerate = false;
  std::optional<std::vector<Vector>> blocks;
};

/// True iff the role space is the identity, in which case the TPR is the
/// concatenation of its bound fillers and those blocks are returned.
DegenerateCheck is_degenerate_concat(const RoleSpace& roles, const ExplicitTpr& tpr);

void validate_binding(const BindingSet& m, std::size_t n_r, std::size_t n_f);

}  // namespace softtpr
