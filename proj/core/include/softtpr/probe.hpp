// SPDX-License-Identifier: Apache-2.0
//
// Factor-regression probes: an MLP trained with MSE to predict rescaled factor
// values from a representation, scored by held-out R².
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "softtpr/dataset.hpp"
#include "softtpr/metrics.hpp"
#include "softtpr/mlp.hpp"
#include "softtpr/model.hpp"

namespace softtpr {

enum class InputKind { kSoftTpr, kExplicitTpr };

std::string_view to_string(InputKind kind);
InputKind input_kind_from_string(std::string_view name);

struct WidthRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
  friend bool operator==(const WidthRange&, const WidthRange&) = default;
};

/// Hidden widths of one probe: Linear d1, Linear d2, two Linear dim(z), Linear d3.
struct ProbeWidths {
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::size_t d3 = 0;
  friend bool operator==(const ProbeWidths&, const ProbeWidths&) = default;
};

struct ProbeConfig {
  WidthRange d12{32, 64};
  WidthRange d3{16, 32};
  std::size_t configs_per_seed = 2;
  double lr = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  InputKind input_kind = InputKind::kSoftTpr;
  std::vector<std::size_t> train_sizes{100, 250, 500};
  std::size_t train_samples = 1000;  ///< the "all samples" training set
  std::size_t test_samples = 500;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on empty ranges, zero sizes or train sizes above train_samples.
  void validate() const;
  /// The fixed width draws for this seed, uniform over the configured ranges.
  std::vector<ProbeWidths> draw_widths() const;

  friend bool operator==(const ProbeConfig&, const ProbeConfig&) = default;
};

class Probe {
 public:
  Probe(Mlp net) : net_(std::move(net)) {}
  Matrix predict(const Matrix& representations) const { return net_.apply(representations); }
  const Mlp& network() const noexcept { return net_; }

 private:
  Mlp net_;
};

/// Trains a probe with Adam on the MSE over all targets. Rows are samples.
Probe fit_probe(const ProbeConfig& config, const ProbeWidths& widths, const Matrix& representations,
                const Matrix& targets, std::uint64_t seed);

/// 1 - SS_res/SS_tot per target column, averaged over columns. Throws
/// std::invalid_argument with fewer than 2 rows or a constant target column.
double r2(const Matrix& predictions, const Matrix& targets);

struct ProbeReport {
  std::vector<std::size_t> train_sizes;
  std::vector<double> r2_by_size;
  double r2_all = 0.0;
  std::vector<ProbeWidths> widths;
  std::vector<std::uint64_t> seeds;
};

struct SampleEfficiency {
  /// True when r2_all < 0.5: the ratios are not computed.
  bool withheld = false;
  std::vector<double> ratio;
  /// Ratios whose restricted R² was negative; reported as-is.
  std::vector<bool> negative;
};

inline constexpr double kEfficiencyMinR2 = 0.5;

SampleEfficiency sample_efficiency(const ProbeReport& report);

/// Factor values scaled to [0, 1] per factor, one row per record.
Matrix factor_targets(const FactorSpec& spec, const std::vector<FactorRecord>& records);

/// Soft TPR z or quantized ψ* for each observation row.
Matrix extract_representations(const SoftTprAutoencoder& model, const Matrix& observations,
                               InputKind kind);

/// Fits every width draw on the first n training rows for each train size and
/// on the full training set; R² is measured on the test rows and averaged
/// over the width draws.
ProbeReport evaluate_probe(const ProbeConfig& config, const Matrix& train_x, const Matrix& train_y,
                           const Matrix& test_x, const Matrix& test_y);

struct SweepCheckpoint {
  std::uint64_t iteration = 0;
  const SoftTprAutoencoder* model = nullptr;
};

struct SweepRow {
  std::uint64_t iteration = 0;
  InputKind input_kind = InputKind::kSoftTpr;
  MetricReport metrics;
  ProbeReport probe;
  SampleEfficiency efficiency;
};

/// One row per checkpoint and input kind (soft first). The first
/// probe.train_samples dataset rows train the probes and the next
/// probe.test_samples rows test them; metrics sample from the renderer the
/// dataset header describes.
std::vector<SweepRow> convergence_sweep(std::span<const SweepCheckpoint> checkpoints, const Dataset& dataset,
                                        const ProbeConfig& probe, const MetricOptions& metric_options = {});

inline constexpr std::string_view kSweepHeader =
    "iteration,input_kind,factorvae,dci,betavae,mig,r2_all,r2_by_size,efficiency_by_size,"
    "efficiency_status";

/// Header line plus one comma-separated line per row. The by-size columns hold
/// `n:value` pairs separated by ';'.
std::string format_sweep_csv(std::span<const SweepRow> rows);

}  // namespace softtpr
