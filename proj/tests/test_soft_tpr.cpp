// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>

#include "softtpr/errors.hpp"
#include "softtpr/soft_tpr.hpp"

using namespace softtpr;

namespace {

std::vector<BindingSet> all_bindings(std::size_t n_r, std::size_t n_f) {
  std::vector<BindingSet> out;
  BindingSet cur{std::vector<std::size_t>(n_r, 0)};
  while (true) {
    out.push_back(cur);
    std::size_t pos = n_r;
    while (pos > 0) {
      --pos;
      if (++cur.filler_of_role[pos] < n_f) break;
      cur.filler_of_role[pos] = 0;
      if (pos == 0) return out;
    }
    if (n_r == 0) return out;
  }
}

Vector random_vector(std::size_t n, SeededRng& rng) {
  Vector v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

BindingSet random_binding(std::size_t n_r, std::size_t n_f, SeededRng& rng) {
  BindingSet m;
  for (std::size_t i = 0; i < n_r; ++i) m.filler_of_role.push_back(rng.below(n_f));
  return m;
}

}  // namespace

TEST_CASE("quantize_greedy: an explicit TPR is a fixed point") {
  SeededRng rng(1);
  const RoleSpace roles = RoleSpace::semi_orthogonal(4, 3, rng);
  const FillerCodebook book = FillerCodebook::random_normal(3, 5, 1.0, rng);
  const auto t = compose(roles, book, BindingSet{{4, 0, 2}});
  const auto q = quantize_greedy(roles, book, SoftTpr{t.vector});
  CHECK(q.tpr.matching == t.matching);
  CHECK(q.residual < 1e-12);
  REQUIRE(q.per_role_errors.size() == 3);
  for (double e : q.per_role_errors) CHECK(e < 1e-12);
  REQUIRE(q.soft_fillers.size() == 3);
}

TEST_CASE("quantize_greedy: small perturbations keep the matching") {
  SeededRng rng(2);
  for (int t = 0; t < 200; ++t) {
    Matrix emb(4, 3);
    for (auto& v : emb.flat()) v = rng.normal();
    const RoleSpace roles = RoleSpace::general(emb);
    const FillerCodebook book = FillerCodebook::random_normal(3, 6, 1.0, rng);
    const BindingSet m = random_binding(3, 6, rng);
    // Smallest distance from a bound filler to any other codebook entry, by brute force.
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < book.count(); ++j)
        if (j != m[i]) gap = std::min(gap, std::sqrt(squared_distance(book.filler(m[i]).span(), book.filler(j).span())));
    double max_u = 0.0;
    for (std::size_t i = 0; i < 3; ++i) max_u = std::max(max_u, norm2(roles.unbinder(i).span()));
    Vector delta = random_vector(12, rng);
    delta *= 0.999 * 0.5 * gap / max_u / norm2(delta.span());
    const auto q = quantize_greedy(roles, book, SoftTpr{compose(roles, book, m).vector + delta});
    CHECK(q.tpr.matching == m);
  }
}

TEST_CASE("quantize_greedy: noisy blue square snaps to blue and square") {
  const RoleSpace roles = RoleSpace::general(Matrix::from_columns(std::vector<Vector>{{1, 1}, {1, 0}}));
  const FillerCodebook book(Matrix::from_columns(std::vector<Vector>{{1, 2, 3}, {2, 2, 3}, {0, 0, 1}}));
  const BindingSet blue_square{{1, 2}};
  SeededRng rng(3);
  for (int t = 0; t < 100; ++t) {
    Vector noise = random_vector(6, rng);
    noise *= 0.1 / norm2(noise.span());
    const Vector z = compose(roles, book, blue_square).vector + noise;
    // Oracle: the nearest of all 9 explicit TPRs.
    double best = std::numeric_limits<double>::infinity();
    BindingSet argmin;
    for (const auto& m : all_bindings(2, 3)) {
      const double d = squared_distance(z.span(), compose(roles, book, m).vector.span());
      if (d < best) {
        best = d;
        argmin = m;
      }
    }
    CHECK(argmin == blue_square);
    CHECK(quantize_greedy(roles, book, SoftTpr{z}).tpr.matching == blue_square);
  }
}

TEST_CASE("quantize_greedy: idempotent on its own output") {
  SeededRng rng(4);
  const RoleSpace roles = RoleSpace::semi_orthogonal(5, 3, rng);
  const FillerCodebook book = FillerCodebook::random_normal(4, 6, 1.0, rng);
  for (int t = 0; t < 50; ++t) {
    const auto q = quantize_greedy(roles, book, SoftTpr{random_vector(20, rng)});
    const auto again = quantize_greedy(roles, book, SoftTpr{q.tpr.vector});
    CHECK(again.tpr == q.tpr);
    CHECK(again.residual < 1e-12);
  }
}

TEST_CASE("quantize_greedy: ties go to the lowest filler index") {
  const FillerCodebook book(Matrix::from_columns(std::vector<Vector>{{1, 0}, {-1, 0}, {0, 5}}));
  CHECK(nearest_filler(book, Vector{0, 0}.span()) == 0);
  CHECK(nearest_filler(book, Vector{-0.5, 0}.span()) == 1);
  const RoleSpace roles = RoleSpace::identity(1);
  CHECK(quantize_greedy(roles, book, SoftTpr{Vector{0, 0}}).tpr.matching == BindingSet{{0}});
}

TEST_CASE("quantize_global_bruteforce: explicit TPRs have objective zero") {
  SeededRng rng(5);
  Matrix emb(3, 2);
  for (auto& v : emb.flat()) v = rng.normal();
  const RoleSpace roles = RoleSpace::general(emb);
  const FillerCodebook book = FillerCodebook::random_normal(2, 4, 1.0, rng);
  const auto t = compose(roles, book, BindingSet{{3, 1}});
  CHECK(quantize_global_bruteforce(roles, book, SoftTpr{t.vector}) == t);
}

TEST_CASE("quantize_global_bruteforce: equals greedy under semi-orthogonal roles") {
  SeededRng rng(6);
  for (int t = 0; t < 100; ++t) {
    const RoleSpace roles = RoleSpace::semi_orthogonal(3, 2, rng);
    const FillerCodebook book = FillerCodebook::random_normal(3, 4, 1.0, rng);
    const SoftTpr z{random_vector(9, rng)};
    CHECK(quantize_global_bruteforce(roles, book, z) == quantize_greedy(roles, book, z).tpr);
  }
}

TEST_CASE("quantize_global_bruteforce: identity roles pick the nearest filler per block") {
  SeededRng rng(7);
  const RoleSpace roles = RoleSpace::identity(2);
  const FillerCodebook book = FillerCodebook::random_normal(3, 5, 1.0, rng);
  for (int t = 0; t < 50; ++t) {
    const Vector g1 = random_vector(3, rng), g2 = random_vector(3, rng);
    std::vector<double> zv(g1.begin(), g1.end());
    zv.insert(zv.end(), g2.begin(), g2.end());
    BindingSet expected;
    for (const Vector* g : {&g1, &g2}) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < book.count(); ++j)
        if (squared_distance(g->span(), book.filler(j).span()) < squared_distance(g->span(), book.filler(best).span()))
          best = j;
      expected.filler_of_role.push_back(best);
    }
    CHECK(quantize_global_bruteforce(roles, book, SoftTpr{Vector(zv)}).matching == expected);
  }
}

TEST_CASE("quantize_global_bruteforce: residual no larger than any matching") {
  SeededRng rng(8);
  Matrix emb(3, 3);
  for (auto& v : emb.flat()) v = rng.normal();
  const RoleSpace roles = RoleSpace::general(emb);
  const FillerCodebook book = FillerCodebook::random_normal(2, 3, 1.0, rng);
  for (int t = 0; t < 20; ++t) {
    const Vector z = random_vector(6, rng);
    const Vector zz = 3.0 * random_vector(6, rng);
    const Vector target = z + zz;
    const auto best = quantize_global_bruteforce(roles, book, SoftTpr{target});
    const double r = squared_distance(target.span(), best.vector.span());
    for (const auto& m : all_bindings(3, 3)) {
      CHECK(r <= squared_distance(target.span(), compose(roles, book, m).vector.span()));
    }
  }
}

TEST_CASE("quantize_global_bruteforce: capacity guard") {
  SeededRng rng(9);
  const RoleSpace roles = RoleSpace::semi_orthogonal(6, 6, rng);
  const FillerCodebook book = FillerCodebook::random_normal(2, 11, 1.0, rng);
  CHECK_THROWS_AS(quantize_global_bruteforce(roles, book, SoftTpr{Vector(12)}), CapacityError);
  const FillerCodebook ten = FillerCodebook::random_normal(2, 10, 1.0, rng);
  CHECK_NOTHROW(quantize_global_bruteforce(roles, ten, SoftTpr{Vector(12)}));
}

TEST_CASE("soft TPRs near a TPR are not themselves TPRs") {
  SeededRng rng(10);
  const RoleSpace roles = RoleSpace::semi_orthogonal(3, 2, rng);
  const FillerCodebook book = FillerCodebook::random_normal(2, 3, 1.0, rng);
  const auto every = all_bindings(2, 3);
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < every.size(); ++a)
    for (std::size_t b = a + 1; b < every.size(); ++b)
      min_gap = std::min(min_gap, std::sqrt(squared_distance(compose(roles, book, every[a]).vector.span(),
                                                             compose(roles, book, every[b]).vector.span())));
  for (int t = 0; t < 50; ++t) {
    const Vector psi = compose(roles, book, every[rng.below(every.size())]).vector;
    Vector delta = random_vector(6, rng);
    delta *= (0.01 + 0.48 * rng.uniform()) * min_gap / norm2(delta.span());
    const Vector z = psi + delta;
    for (const auto& m : every) CHECK_FALSE(compose(roles, book, m).vector == z);
  }
}

TEST_CASE("vq_loss: hand-computed value and gradients") {
  const FillerCodebook book(Matrix::from_columns(std::vector<Vector>{{3, 4}, {9, 9}}));
  const std::vector<Vector> soft{{0, 0}};
  const auto loss = vq_loss(book, soft, BindingSet{{0}}, 0.5);
  CHECK(loss.value == doctest::Approx(37.5).epsilon(1e-15));
  REQUIRE(loss.grad_soft_fillers.size() == 1);

  // Central differences with the stopped quantities held constant.
  const double h = 1e-5;
  const Vector e{3, 4};
  auto encoder_term = [&](const Vector& f) { return squared_distance(e.span(), f.span()); };
  auto codebook_term = [&](const Vector& q) { return 0.5 * squared_distance(q.span(), soft[0].span()); };
  for (std::size_t k = 0; k < 2; ++k) {
    Vector fp = soft[0], fm = soft[0];
    fp[k] += h;
    fm[k] -= h;
    const double numeric = (encoder_term(fp) - encoder_term(fm)) / (2 * h);
    CHECK(loss.grad_soft_fillers[0][k] == doctest::Approx(numeric).epsilon(1e-8));
    Vector qp = e, qm = e;
    qp[k] += h;
    qm[k] -= h;
    const double numeric_q = (codebook_term(qp) - codebook_term(qm)) / (2 * h);
    CHECK(loss.grad_codebook(k, 0) == doctest::Approx(numeric_q).epsilon(1e-8));
    CHECK(loss.grad_codebook(k, 1) == 0.0);
  }
  CHECK(loss.grad_soft_fillers[0] == Vector{-6, -8});
}

TEST_CASE("vq_loss: zero when every soft filler sits on its codebook entry") {
  SeededRng rng(11);
  const FillerCodebook book = FillerCodebook::random_normal(4, 5, 1.0, rng);
  const BindingSet m{{1, 3, 1}};
  std::vector<Vector> soft;
  for (std::size_t i = 0; i < 3; ++i) soft.push_back(book.filler(m[i]));
  const auto loss = vq_loss(book, soft, m);
  CHECK(loss.value == 0.0);
  for (double g : loss.grad_codebook.flat()) CHECK(g == 0.0);
}

TEST_CASE("vq_loss: averages over roles") {
  const FillerCodebook book(Matrix::from_columns(std::vector<Vector>{{1, 0}, {0, 1}}));
  const std::vector<Vector> soft{{0, 0}, {0, 0}};
  // Each role contributes 1 + beta * 1; the mean over two roles is the same.
  CHECK(vq_loss(book, soft, BindingSet{{0, 1}}, 0.25).value == doctest::Approx(1.25));
  CHECK_THROWS_AS(vq_loss(book, soft, BindingSet{{0, 1}}, -1.0), std::invalid_argument);
}
