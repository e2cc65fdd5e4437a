// SPDX-License-Identifier: Apache-2.0
#include "softtpr/tpr.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace softtpr {

namespace {

void check_delta_property(const Matrix& embeddings, const Matrix& unbinders) {
  const std::size_t n = embeddings.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const Vector u = unbinders.column(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double v = dot(u.span(), embeddings.column(j).span());
      const double expected = i == j ? 1.0 : 0.0;
      if (std::abs(v - expected) > 1e-8) {
        throw std::invalid_argument("RoleSpace: unbinding vectors violate u_i.r_j = delta_ij at (" +
                                    std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
}

}  // namespace

std::string_view to_string(RoleMode mode) {
  switch (mode) {
    case RoleMode::kSemiOrthogonal:
      return "semi-orthogonal";
    case RoleMode::kIdentity:
      return "identity";
    case RoleMode::kGeneral:
      return "general";
  }
  return "general";
}

RoleMode role_mode_from_string(std::string_view name) {
  if (name == "semi-orthogonal") return RoleMode::kSemiOrthogonal;
  if (name == "identity") return RoleMode::kIdentity;
  if (name == "general") return RoleMode::kGeneral;
  throw std::invalid_argument("unknown role mode: " + std::string(name));
}

RoleSpace::RoleSpace(RoleMode mode, Matrix embeddings, Matrix unbinders)
    : mode_(mode), embeddings_(std::move(embeddings)), unbinders_(std::move(unbinders)) {}

RoleSpace RoleSpace::semi_orthogonal(std::size_t d_r, std::size_t n_r, SeededRng& rng) {
  Matrix a = softtpr::semi_orthogonal(d_r, n_r, rng);
  Matrix u = a;
  return RoleSpace(RoleMode::kSemiOrthogonal, std::move(a), std::move(u));
}

RoleSpace RoleSpace::identity(std::size_t n_r) {
  if (n_r == 0) throw std::invalid_argument("RoleSpace::identity: n_r must be positive");
  return RoleSpace(RoleMode::kIdentity, Matrix::identity(n_r), Matrix::identity(n_r));
}

RoleSpace RoleSpace::general(Matrix embeddings) {
  if (embeddings.cols() == 0) throw std::invalid_argument("RoleSpace::general: no roles");
  if (!embeddings.all_finite()) throw std::invalid_argument("RoleSpace::general: non-finite entry");
  // Rows of the left inverse are the unbinding vectors; store them as columns.
  Matrix unbinders = left_inverse(embeddings).transposed();
  check_delta_property(embeddings, unbinders);
  return RoleSpace(RoleMode::kGeneral, std::move(embeddings), std::move(unbinders));
}

RoleSpace RoleSpace::from_parts(RoleMode mode, Matrix embeddings, Matrix unbinders) {
  if (embeddings.rows() != unbinders.rows() || embeddings.cols() != unbinders.cols()) {
    throw std::invalid_argument("RoleSpace::from_parts: shape mismatch");
  }
  if (mode == RoleMode::kIdentity && embeddings != Matrix::identity(embeddings.cols())) {
    throw std::invalid_argument("RoleSpace::from_parts: identity mode requires I");
  }
  check_delta_property(embeddings, unbinders);
  return RoleSpace(mode, std::move(embeddings), std::move(unbinders));
}

FillerCodebook::FillerCodebook(Matrix embeddings) : embeddings_(std::move(embeddings)) {
  if (embeddings_.rows() == 0 || embeddings_.cols() == 0) {
    throw std::invalid_argument("FillerCodebook: empty embedding matrix");
  }
  if (!embeddings_.all_finite()) throw std::invalid_argument("FillerCodebook: non-finite entry");
  for (std::size_t a = 0; a < count(); ++a) {
    const Vector fa = filler(a);
    for (std::size_t b = a + 1; b < count(); ++b) {
      if (max_abs_diff(fa.span(), filler(b).span()) <= 1e-12) {
        throw std::invalid_argument("FillerCodebook: duplicate filler columns " +
                                    std::to_string(a) + " and " + std::to_string(b));
      }
    }
  }
}

FillerCodebook FillerCodebook::random_normal(std::size_t d_f, std::size_t n_f, double scale,
                                             SeededRng& rng) {
  Matrix m(d_f, n_f);
  for (auto& v : m.flat()) v = scale * rng.normal();
  return FillerCodebook(std::move(m));
}

void validate_binding(const BindingSet& m, std::size_t n_r, std::size_t n_f) {
  if (m.size() != n_r) {
    throw std::invalid_argument("binding has " + std::to_string(m.size()) + " roles, expected " +
                                std::to_string(n_r));
  }
  for (std::size_t i = 0; i < n_r; ++i) {
    if (m[i] >= n_f) {
      throw std::invalid_argument("binding: filler index " + std::to_string(m[i]) +
                                  " out of range for role " + std::to_string(i));
    }
  }
}

Vector compose_vectors(const RoleSpace& roles, std::span<const Vector> fillers_per_role) {
  if (fillers_per_role.size() != roles.count()) {
    throw std::invalid_argument("compose: need one filler per role");
  }
  const std::size_t df = fillers_per_role.empty() ? 0 : fillers_per_role[0].size();
  Vector out(df * roles.dim());
  for (std::size_t i = 0; i < roles.count(); ++i) {
    out += outer_flatten(fillers_per_role[i], roles.embedding(i));
  }
  return out;
}

ExplicitTpr compose(const RoleSpace& roles, const FillerCodebook& fillers, const BindingSet& m) {
  validate_binding(m, roles.count(), fillers.count());
  std::vector<Vector> bound;
  bound.reserve(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) bound.push_back(fillers.filler(m[i]));
  return ExplicitTpr{compose_vectors(roles, bound), m};
}

Vector unbind(const RoleSpace& roles, std::span<const double> z, const Vector& u) {
  const std::size_t dr = roles.dim();
  if (u.size() != dr || dr == 0 || z.size() % dr != 0) {
    throw std::invalid_argument("unbind: dimension mismatch");
  }
  const std::size_t df = z.size() / dr;
  Vector f(df);
  for (std::size_t j = 0; j < dr; ++j) {
    const double uj = u[j];
    for (std::size_t i = 0; i < df; ++i) f[i] += z[j * df + i] * uj;
  }
  return f;
}

Vector unbind(const RoleSpace& roles, std::span<const double> z, std::size_t role) {
  if (role >= roles.count()) {
    throw std::invalid_argument("unbind: role index " + std::to_string(role) + " out of range");
  }
  return unbind(roles, z, roles.unbinder(role));
}

std::pair<ExplicitTpr, ExplicitTpr> swap_tprs(const RoleSpace& roles,
                                              const FillerCodebook& fillers,
                                              const BindingSet& m, const BindingSet& m_prime,
                                              std::size_t role) {
  if (role >= roles.count()) {
    throw std::invalid_argument("swap_tprs: role index " + std::to_string(role) + " out of range");
  }
  validate_binding(m, roles.count(), fillers.count());
  validate_binding(m_prime, roles.count(), fillers.count());
  BindingSet s = m;
  BindingSet s_prime = m_prime;
  s.filler_of_role[role] = m_prime[role];
  s_prime.filler_of_role[role] = m[role];
  return {compose(roles, fillers, s), compose(roles, fillers, s_prime)};
}

DegenerateCheck is_degenerate_concat(const RoleSpace& roles, const ExplicitTpr& tpr) {
  if (roles.mode() != RoleMode::kIdentity) return {};
  const std::size_t n = roles.count();
  const std::size_t df = tpr.vector.size() / n;
  std::vector<Vector> blocks;
  blocks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    blocks.emplace_back(tpr.vector.span().subspan(i * df, df));
  }
  return {true, std::move(blocks)};
}

}  // namespace softtpr
