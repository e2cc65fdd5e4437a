// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "softtpr/probe.hpp"

using namespace softtpr;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, SeededRng& rng) {
  Matrix m(r, c);
  for (auto& v : m.flat()) v = rng.normal();
  return m;
}

// y = x * w with a fixed 4 x 2 map.
Matrix linear_targets(const Matrix& x) {
  const Matrix w = Matrix::from_rows({{0.5, -0.2}, {0.3, 0.1}, {-0.4, 0.25}, {0.2, 0.6}});
  return matmul(x, w);
}

ProbeConfig quick_config() {
  ProbeConfig c;
  c.lr = 3e-3;
  c.epochs = 150;
  c.configs_per_seed = 1;
  c.train_sizes = {100};
  c.train_samples = 400;
  c.test_samples = 200;
  return c;
}

}  // namespace

TEST_CASE("r2: hand-computed values") {
  const Matrix y(3, 1, std::vector<double>{1, 2, 3});
  CHECK(r2(y, y) == 1.0);
  // predicting the mean gives 0
  CHECK(r2(Matrix(3, 1, 2.0), y) == 0.0);
  // SS_res = 0.25 + 0 + 0.25, SS_tot = 2
  CHECK(r2(Matrix(3, 1, std::vector<double>{1.5, 2, 2.5}), y) == doctest::Approx(0.75));
  // anti-correlated: SS_res = 4 + 0 + 4, so R² = 1 - 8/2 = -3
  CHECK(r2(Matrix(3, 1, std::vector<double>{3, 2, 1}), y) == doctest::Approx(-3.0));
}

TEST_CASE("r2: averaged over target columns") {
  const Matrix y(3, 2, std::vector<double>{1, 0, 2, 1, 3, 5});
  const Matrix p(3, 2, std::vector<double>{1, 0, 2, 1, 3, 5});
  Matrix q = p;
  q(0, 0) = 2;
  q(1, 0) = 2;
  q(2, 0) = 2;
  CHECK(r2(q, y) == doctest::Approx(0.5));
  CHECK(r2(p, y) == 1.0);
}

TEST_CASE("r2: degenerate inputs throw") {
  CHECK_THROWS_AS(r2(Matrix(3, 1, 1.0), Matrix(3, 1, 4.0)), std::invalid_argument);
  CHECK_THROWS_AS(r2(Matrix(1, 1, 1.0), Matrix(1, 1, 1.0)), std::invalid_argument);
  CHECK_THROWS_AS(r2(Matrix(3, 1, 1.0), Matrix(3, 2, 1.0)), std::invalid_argument);
}

TEST_CASE("probe: learns a linear map") {
  SeededRng rng(1);
  const Matrix x = random_matrix(400, 4, rng);
  const Matrix xt = random_matrix(200, 4, rng);
  const ProbeConfig c = quick_config();
  const Probe p = fit_probe(c, c.draw_widths()[0], x, linear_targets(x), 9);
  CHECK(r2(p.predict(xt), linear_targets(xt)) > 0.99);
}

TEST_CASE("probe: shuffled targets are not predictable") {
  SeededRng rng(2);
  const Matrix x = random_matrix(400, 4, rng);
  const Matrix xt = random_matrix(200, 4, rng);
  const ProbeConfig c = quick_config();
  Matrix y = linear_targets(random_matrix(400, 4, rng));  // unrelated to x
  const Probe p = fit_probe(c, c.draw_widths()[0], x, y, 9);
  CHECK(r2(p.predict(xt), linear_targets(random_matrix(200, 4, rng))) <= 0.1);
}

TEST_CASE("probe: fitting is deterministic in the seed") {
  SeededRng rng(3);
  const Matrix x = random_matrix(64, 4, rng);
  ProbeConfig c = quick_config();
  c.epochs = 5;
  const auto w = c.draw_widths()[0];
  const Matrix y = linear_targets(x);
  CHECK(fit_probe(c, w, x, y, 1).network() == fit_probe(c, w, x, y, 1).network());
  CHECK_FALSE(fit_probe(c, w, x, y, 1).network() == fit_probe(c, w, x, y, 2).network());
}

TEST_CASE("probe config: width draws stay in range and depend only on the seed") {
  ProbeConfig c;
  c.configs_per_seed = 50;
  const auto draws = c.draw_widths();
  REQUIRE(draws.size() == 50);
  for (const auto& w : draws) {
    CHECK(w.d1 >= 32);
    CHECK(w.d1 <= 64);
    CHECK(w.d2 >= 32);
    CHECK(w.d2 <= 64);
    CHECK(w.d3 >= 16);
    CHECK(w.d3 <= 32);
  }
  CHECK(draws == c.draw_widths());
  ProbeConfig other = c;
  other.seed = 1;
  CHECK_FALSE(draws == other.draw_widths());
}

TEST_CASE("probe config: validation") {
  ProbeConfig c;
  CHECK_NOTHROW(c.validate());
  c.d12 = {64, 32};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ProbeConfig{};
  c.train_sizes = {2000};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ProbeConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(input_kind_from_string("explicit_tpr") == InputKind::kExplicitTpr);
  CHECK(to_string(InputKind::kSoftTpr) == "soft_tpr");
  CHECK_THROWS(input_kind_from_string("pixels"));
}

TEST_CASE("sample efficiency: ratios, withholding and negative flags") {
  ProbeReport r;
  r.train_sizes = {100, 250};
  r.r2_by_size = {0.4, 0.8};
  r.r2_all = 0.8;
  auto e = sample_efficiency(r);
  CHECK_FALSE(e.withheld);
  CHECK(e.ratio == std::vector<double>{0.5, 1.0});
  CHECK(e.negative == std::vector<bool>{false, false});

  r.r2_all = 0.49;
  e = sample_efficiency(r);
  CHECK(e.withheld);
  CHECK(e.ratio.empty());

  r.r2_all = 0.6;
  r.r2_by_size = {-0.3, 0.3};
  e = sample_efficiency(r);
  CHECK_FALSE(e.withheld);
  CHECK(e.ratio[0] == doctest::Approx(-0.5));
  CHECK(e.negative == std::vector<bool>{true, false});
}

TEST_CASE("factor targets are rescaled to [0, 1]") {
  FactorSpec s;
  s.values_per_factor = {3, 5};
  s.obs_dim = 8;
  const Matrix t = factor_targets(s, {FactorRecord{{0, 4}}, FactorRecord{{2, 1}}, FactorRecord{{1, 0}}});
  CHECK(t == Matrix(3, 2, std::vector<double>{0, 1, 1, 0.25, 0.5, 0}));
}

TEST_CASE("convergence sweep: row schema and determinism") {
  ModelConfig mc;
  mc.obs_dim = 12;
  mc.d_f = 3;
  mc.d_r = 3;
  mc.n_f = 4;
  mc.n_r = 2;
  mc.encoder_widths = {8};
  mc.decoder_widths = {8};
  const SoftTprAutoencoder m0(mc);
  mc.seed = 1;
  const SoftTprAutoencoder m1(mc);

  FactorSpec s;
  s.values_per_factor = {3, 4};
  s.obs_dim = 12;
  const Renderer renderer(s);
  SeededRng rng(4);
  const Dataset data = make_sampled_dataset(renderer, 150, rng);

  ProbeConfig pc;
  pc.epochs = 2;
  pc.configs_per_seed = 1;
  pc.d12 = {4, 6};
  pc.d3 = {2, 4};
  pc.train_sizes = {20, 50};
  pc.train_samples = 100;
  pc.test_samples = 50;
  MetricOptions mo;
  mo.factorvae_batches = 10;
  mo.factorvae_batch_size = 16;
  mo.dci_samples = 100;
  mo.betavae_points = 20;
  mo.betavae_pairs_per_point = 4;
  mo.mig_samples = 100;

  const SweepCheckpoint cps[] = {{0, &m0}, {100, &m1}};
  const auto rows = convergence_sweep(cps, data, pc, mo);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].iteration == 0);
  CHECK(rows[0].input_kind == InputKind::kSoftTpr);
  CHECK(rows[1].input_kind == InputKind::kExplicitTpr);
  CHECK(rows[2].iteration == 100);
  CHECK(rows[0].metrics == rows[1].metrics);
  for (const auto& r : rows) {
    CHECK(r.probe.train_sizes == std::vector<std::size_t>{20, 50});
    CHECK(r.probe.r2_by_size.size() == 2);
  }

  const std::string csv = format_sweep_csv(rows);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == kSweepHeader);
  const auto columns = std::count(line.begin(), line.end(), ',');
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    CHECK(std::count(line.begin(), line.end(), ',') == columns);
    CHECK(line.find("20:") != std::string::npos);
  }
  CHECK(n == 4);
  CHECK(csv == format_sweep_csv(convergence_sweep(cps, data, pc, mo)));

  pc.train_samples = 140;
  CHECK_THROWS_AS(convergence_sweep(cps, data, pc, mo), std::invalid_argument);
}
