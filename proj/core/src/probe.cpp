// SPDX-License-Identifier: Apache-2.0
#include "softtpr/probe.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace softtpr {

namespace {

Matrix take_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = m.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix head_rows(const Matrix& m, std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return take_rows(m, rows);
}

}  // namespace

std::string_view to_string(InputKind kind) {
  return kind == InputKind::kSoftTpr ? "soft_tpr" : "explicit_tpr";
}

InputKind input_kind_from_string(std::string_view name) {
  if (name == "soft_tpr") return InputKind::kSoftTpr;
  if (name == "explicit_tpr") return InputKind::kExplicitTpr;
  throw std::invalid_argument("unknown input kind '" + std::string(name) + "'");
}

void ProbeConfig::validate() const {
  auto check = [](const WidthRange& r, const char* what) {
    if (r.lo == 0 || r.lo > r.hi) throw std::invalid_argument(std::string("ProbeConfig: bad width range ") + what);
  };
  check(d12, "d12");
  check(d3, "d3");
  if (configs_per_seed == 0) throw std::invalid_argument("ProbeConfig: configs_per_seed must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("ProbeConfig: lr must be positive");
  if (epochs == 0 || batch_size == 0) throw std::invalid_argument("ProbeConfig: epochs and batch_size must be positive");
  if (train_samples < 2 || test_samples < 2) throw std::invalid_argument("ProbeConfig: need at least 2 train and test samples");
  for (std::size_t n : train_sizes) {
    if (n < 2 || n > train_samples) {
      throw std::invalid_argument("ProbeConfig: train size " + std::to_string(n) + " outside [2, train_samples]");
    }
  }
}

std::vector<ProbeWidths> ProbeConfig::draw_widths() const {
  SeededRng rng(splitmix64(seed ^ 0x70726f6265ULL));
  auto draw = [&](const WidthRange& r) { return r.lo + static_cast<std::size_t>(rng.below(r.hi - r.lo + 1)); };
  std::vector<ProbeWidths> out;
  for (std::size_t c = 0; c < configs_per_seed; ++c) {
    ProbeWidths w;
    w.d1 = draw(d12);
    w.d2 = draw(d12);
    w.d3 = draw(d3);
    out.push_back(w);
  }
  return out;
}

Probe fit_probe(const ProbeConfig& config, const ProbeWidths& widths, const Matrix& x, const Matrix& y,
                std::uint64_t seed) {
  if (x.rows() != y.rows() || x.rows() == 0) throw std::invalid_argument("fit_probe: need matching non-empty rows");
  SeededRng rng(seed);
  const std::size_t dz = x.cols();
  Mlp net("probe", {dz, widths.d1, widths.d2, dz, dz, widths.d3, y.cols()}, rng);
  auto params = net.parameters();
  const AdamOptions adam{config.lr, 0.9, 0.999, 1e-8};

  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      Tape tape;
      const auto out = net.forward(tape, tape.constant(take_rows(x, rows)));
      const auto diff = tape.sub(out, tape.constant(take_rows(y, rows)));
      const auto loss = tape.scale(tape.sum_squares(diff), 1.0 / static_cast<double>(rows.size() * y.cols()));
      tape.backward(loss);
      adam_step(params, adam);
    }
  }
  return Probe(std::move(net));
}

double r2(const Matrix& pred, const Matrix& targets) {
  if (pred.rows() != targets.rows() || pred.cols() != targets.cols()) {
    throw std::invalid_argument("r2: shape mismatch");
  }
  if (targets.rows() < 2) throw std::invalid_argument("r2: need at least 2 samples");
  const double n = static_cast<double>(targets.rows());
  double total = 0.0;
  for (std::size_t k = 0; k < targets.cols(); ++k) {
    double mean = 0.0;
    for (std::size_t r = 0; r < targets.rows(); ++r) mean += targets(r, k);
    mean /= n;
    double ss_tot = 0.0, ss_res = 0.0;
    for (std::size_t r = 0; r < targets.rows(); ++r) {
      ss_tot += (targets(r, k) - mean) * (targets(r, k) - mean);
      ss_res += (targets(r, k) - pred(r, k)) * (targets(r, k) - pred(r, k));
    }
    if (ss_tot == 0.0) throw std::invalid_argument("r2: target column " + std::to_string(k) + " is constant");
    total += 1.0 - ss_res / ss_tot;
  }
  return total / static_cast<double>(targets.cols());
}

SampleEfficiency sample_efficiency(const ProbeReport& report) {
  SampleEfficiency eff;
  if (report.r2_all < kEfficiencyMinR2) {
    eff.withheld = true;
    return eff;
  }
  for (double v : report.r2_by_size) {
    eff.ratio.push_back(v / report.r2_all);
    eff.negative.push_back(v < 0.0);
  }
  return eff;
}

Matrix factor_targets(const FactorSpec& spec, const std::vector<FactorRecord>& records) {
  Matrix y(records.size(), spec.n_factors());
  for (std::size_t r = 0; r < records.size(); ++r)
    for (std::size_t k = 0; k < spec.n_factors(); ++k)
      y(r, k) = static_cast<double>(records[r].values[k]) / static_cast<double>(spec.values_per_factor[k] - 1);
  return y;
}

Matrix extract_representations(const SoftTprAutoencoder& model, const Matrix& observations, InputKind kind) {
  if (kind == InputKind::kSoftTpr) return model.encode(observations);
  const auto fwd = model.forward(observations);
  Matrix out(observations.rows(), model.config().tpr_dim());
  for (std::size_t r = 0; r < fwd.quantized.size(); ++r) {
    const auto& v = fwd.quantized[r].tpr.vector;
    std::copy(v.begin(), v.end(), out.row(r).begin());
  }
  return out;
}

ProbeReport evaluate_probe(const ProbeConfig& config, const Matrix& train_x, const Matrix& train_y,
                           const Matrix& test_x, const Matrix& test_y) {
  config.validate();
  if (train_x.rows() < config.train_samples) throw std::invalid_argument("evaluate_probe: too few training rows");
  ProbeReport report;
  report.train_sizes = config.train_sizes;
  report.widths = config.draw_widths();
  report.r2_by_size.assign(config.train_sizes.size(), 0.0);
  const Matrix all_x = head_rows(train_x, config.train_samples);
  const Matrix all_y = head_rows(train_y, config.train_samples);
  for (std::size_t c = 0; c < report.widths.size(); ++c) {
    const std::uint64_t seed = splitmix64(config.seed + c);
    report.seeds.push_back(seed);
    for (std::size_t s = 0; s < config.train_sizes.size(); ++s) {
      const std::size_t n = config.train_sizes[s];
      const Probe p = fit_probe(config, report.widths[c], head_rows(train_x, n), head_rows(train_y, n), seed);
      report.r2_by_size[s] += r2(p.predict(test_x), test_y);
    }
    const Probe p = fit_probe(config, report.widths[c], all_x, all_y, seed);
    report.r2_all += r2(p.predict(test_x), test_y);
  }
  const double k = static_cast<double>(report.widths.size());
  for (auto& v : report.r2_by_size) v /= k;
  report.r2_all /= k;
  return report;
}

std::vector<SweepRow> convergence_sweep(std::span<const SweepCheckpoint> checkpoints, const Dataset& dataset,
                                        const ProbeConfig& probe, const MetricOptions& metric_options) {
  if (checkpoints.empty()) throw std::invalid_argument("convergence_sweep: no checkpoints");
  probe.validate();
  if (dataset.size() < probe.train_samples + probe.test_samples) {
    throw std::invalid_argument("convergence_sweep: dataset has " + std::to_string(dataset.size()) +
                                " rows, probes need " + std::to_string(probe.train_samples + probe.test_samples));
  }
  const Renderer renderer(dataset.spec);
  std::vector<std::size_t> train_rows(probe.train_samples), test_rows(probe.test_samples);
  std::iota(train_rows.begin(), train_rows.end(), std::size_t{0});
  std::iota(test_rows.begin(), test_rows.end(), probe.train_samples);
  const Matrix obs = dataset.observation_matrix();
  const Matrix targets = factor_targets(dataset.spec, dataset.records);
  const Matrix train_obs = take_rows(obs, train_rows);
  const Matrix test_obs = take_rows(obs, test_rows);
  const Matrix train_y = take_rows(targets, train_rows);
  const Matrix test_y = take_rows(targets, test_rows);

  std::vector<SweepRow> rows;
  for (const auto& cp : checkpoints) {
    const MetricReport metrics = evaluate_metrics(*cp.model, renderer, metric_options);
    for (InputKind kind : {InputKind::kSoftTpr, InputKind::kExplicitTpr}) {
      ProbeConfig cfg = probe;
      cfg.input_kind = kind;
      SweepRow row;
      row.iteration = cp.iteration;
      row.input_kind = kind;
      row.metrics = metrics;
      row.probe = evaluate_probe(cfg, extract_representations(*cp.model, train_obs, kind), train_y,
                                 extract_representations(*cp.model, test_obs, kind), test_y);
      row.efficiency = sample_efficiency(row.probe);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string format_sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << kSweepHeader << '\n';
  for (const auto& r : rows) {
    os << r.iteration << ',' << to_string(r.input_kind) << ',' << format_real(r.metrics.factorvae) << ','
       << format_real(r.metrics.dci) << ',' << format_real(r.metrics.betavae) << ','
       << format_real(r.metrics.mig) << ',' << format_real(r.probe.r2_all) << ',';
    for (std::size_t s = 0; s < r.probe.train_sizes.size(); ++s) {
      os << (s ? ";" : "") << r.probe.train_sizes[s] << ':' << format_real(r.probe.r2_by_size[s]);
    }
    os << ',';
    std::string status = "ok";
    if (r.efficiency.withheld) {
      status = "withheld";
    } else {
      for (std::size_t s = 0; s < r.efficiency.ratio.size(); ++s) {
        os << (s ? ";" : "") << r.probe.train_sizes[s] << ':' << format_real(r.efficiency.ratio[s]);
        if (r.efficiency.negative[s]) status = "negative";
      }
    }
    os << ',' << status << '\n';
  }
  return os.str();
}

}  // namespace softtpr
