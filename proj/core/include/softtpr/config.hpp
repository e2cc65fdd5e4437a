// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one JSON document covering model, data, training, probe,
// metric and gradient-check settings. Every section is optional; unknown keys
// are rejected.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "softtpr/autodiff.hpp"
#include "softtpr/dataset.hpp"
#include "softtpr/metrics.hpp"
#include "softtpr/model.hpp"
#include "softtpr/probe.hpp"

namespace softtpr {

struct GradcheckConfig {
  std::size_t batch_size = 4;
  double h = 1e-4;
  double tolerance = 1e-4;
  std::size_t samples_per_parameter = 64;
  double denominator_floor = 1e-6;

  friend bool operator==(const GradcheckConfig&, const GradcheckConfig&) = default;
};

struct TrainConfig {
  std::uint64_t iterations = 5000;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::vector<std::uint64_t> checkpoint_schedule{100, 1000, 5000};

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct RunConfig {
  /// Governs every random draw of a run: model init, training batches, probes, metrics.
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  ModelConfig model;  ///< obs_dim and seed are filled from `data` and `seed`
  FactorSpec data;
  TrainConfig train;
  ProbeConfig probe;
  MetricOptions metrics;
  GradcheckConfig gradcheck;

  /// Copies the shared fields (obs_dim, seeds) into the sections and validates
  /// everything. Throws ConfigError.
  void finalize();

  TrainOptions train_options() const;
  /// Seed of the training batch stream.
  std::uint64_t train_seed() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses and finalizes. Throws ConfigError on malformed JSON, wrong types,
/// unknown keys or invalid values.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Pretty-printed JSON; parse_run_config(format_run_config(c)) == c.
std::string format_run_config(const RunConfig& config);

}  // namespace softtpr
