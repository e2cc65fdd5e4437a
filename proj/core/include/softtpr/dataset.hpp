// SPDX-License-Identifier: Apache-2.0
//
// Synthetic compositional data. Each observation is rendered from a factor
// record (one value index per factor) by a fixed random affine map of the
// concatenated one-hot codes followed by tanh.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "softtpr/linalg.hpp"
#include "softtpr/model.hpp"
#include "softtpr/rng.hpp"

namespace softtpr {

struct FactorSpec {
  std::vector<std::size_t> values_per_factor{4, 4, 4};
  std::size_t obs_dim = 32;
  std::uint64_t render_seed = 0;

  std::size_t n_factors() const noexcept { return values_per_factor.size(); }
  std::size_t grid_size() const;
  std::size_t one_hot_width() const;
  void validate() const;

  friend bool operator==(const FactorSpec&, const FactorSpec&) = default;
};

/// Zero-based value index per factor.
struct FactorRecord {
  std::vector<std::size_t> values;
  friend bool operator==(const FactorRecord&, const FactorRecord&) = default;
  friend auto operator<=>(const FactorRecord&, const FactorRecord&) = default;
};

/// Every record of the factor grid in lexicographic order (last factor fastest).
std::vector<FactorRecord> enumerate_grid(const FactorSpec& spec);

class Renderer {
 public:
  /// Draws the affine map from spec.render_seed, then checks that every pair of
  /// grid observations is more than 1e-6 apart. On a collision the next seed is
  /// tried; regenerations() reports how many were needed.
  explicit Renderer(FactorSpec spec);

  const FactorSpec& spec() const noexcept { return spec_; }
  std::uint64_t effective_seed() const noexcept { return effective_seed_; }
  std::size_t regenerations() const noexcept { return regenerations_; }

  Vector render(const FactorRecord& record) const;

 private:
  void draw(std::uint64_t seed);
  bool injective_on_grid() const;

  FactorSpec spec_;
  Matrix weight_;  // obs_dim x one_hot_width
  Vector bias_;
  std::uint64_t effective_seed_ = 0;
  std::size_t regenerations_ = 0;
};

FactorRecord sample_record(const FactorSpec& spec, SeededRng& rng);

struct MatchPair {
  Vector x;
  Vector x_prime;
  FactorRecord a;
  FactorRecord a_prime;
  std::size_t differing = 0;
};

/// Uniform record, uniform factor, and a different uniform value at that factor.
MatchPair sample_pair(const Renderer& renderer, SeededRng& rng);

/// Pair source for training: batches of sample_pair draws.
PairSource pair_source(const Renderer& renderer);

struct Dataset {
  FactorSpec spec;
  std::vector<FactorRecord> records;
  std::vector<Vector> observations;

  std::size_t size() const noexcept { return records.size(); }
  Matrix observation_matrix() const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// The full factor grid, rendered.
Dataset make_grid_dataset(const Renderer& renderer);

/// `count` uniformly sampled records, rendered.
Dataset make_sampled_dataset(const Renderer& renderer, std::size_t count, SeededRng& rng);

/// Text table: one metadata header line, then
/// `factor_1,...,factor_n,obs_1,...,obs_d` rows with shortest round-trip reals.
void export_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset import_dataset(const std::filesystem::path& path);

std::string format_dataset(const Dataset& dataset);
Dataset parse_dataset(const std::string& text);

/// Shortest decimal that parses back to the same double.
std::string format_real(double v);
double parse_real(std::string_view s);

}  // namespace softtpr
