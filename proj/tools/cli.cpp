// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "softtpr/checkpoint.hpp"
#include "softtpr/config.hpp"
#include "softtpr/dataset.hpp"
#include "softtpr/errors.hpp"
#include "softtpr/metrics.hpp"
#include "softtpr/model.hpp"
#include "softtpr/probe.hpp"
#include "softtpr/soft_tpr.hpp"

namespace softtpr::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> checkpoints;
  std::string dataset;
  std::string input;
  bool observations = false;
  std::string compose;
};

RunConfig resolve_config(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  c.finalize();
  return c;
}

/// Config for commands that start from a checkpoint: the embedded config,
/// with probe and metric settings replaced by --config when given.
RunConfig resolve_eval_config(const Options& o, const Checkpoint& cp) {
  RunConfig c = cp.config;
  if (!o.config.empty()) {
    const RunConfig user = load_run_config(o.config);
    c.probe = user.probe;
    c.metrics = user.metrics;
    c.seed = user.seed;
  }
  if (o.seed) c.seed = *o.seed;
  c.finalize();
  return c;
}

fs::path output_dir(const Options& o, const RunConfig& c) {
  fs::path dir = o.out.empty() ? fs::path(c.out_dir) : fs::path(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

const std::string& single_checkpoint(const Options& o) {
  if (o.checkpoints.size() != 1) throw ConfigError("exactly one --checkpoint is required");
  return o.checkpoints.front();
}

Dataset load_consistent_dataset(const std::string& path) {
  if (path.empty()) throw ConfigError("--dataset is required");
  Dataset d = import_dataset(path);
  try {
    d.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError("dataset '" + path + "': " + e.what());
  }
  const Renderer renderer(d.spec);
  for (std::size_t r = 0; r < d.size(); ++r) {
    if (!(renderer.render(d.records[r]) == d.observations[r])) {
      throw IoError("dataset '" + path + "': row " + std::to_string(r) + " does not match its header's renderer");
    }
  }
  return d;
}

int cmd_generate_data(const Options& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  const fs::path dir = output_dir(o, c);
  const Renderer renderer(c.data);
  SeededRng rng(splitmix64(c.seed ^ 0x4ULL));
  const Dataset d = make_sampled_dataset(renderer, c.probe.train_samples + c.probe.test_samples, rng);
  const fs::path path = dir / "dataset.txt";
  export_dataset(d, path);
  out << "wrote " << d.size() << " rows to " << path.string() << '\n';
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  const fs::path dir = output_dir(o, c);
  write_text(dir / "config.json", format_run_config(c));
  const Renderer renderer(c.data);
  SoftTprAutoencoder model(c.model);
  TrainOptions opts = c.train_options();
  opts.checkpoint_schedule.push_back(opts.iterations);
  SeededRng rng(c.train_seed());

  std::ofstream log(dir / "train_log.csv", std::ios::binary);
  if (!log) throw IoError("cannot open training log in '" + dir.string() + "'");
  log << "iteration,total,form_penalty,recon,vq,swap_recon,ce_dq\n";
  TrainStepOutput last;
  TrainCallbacks cb;
  cb.on_step = [&](std::uint64_t it, const TrainStepOutput& s) {
    log << it << ',' << format_real(s.total) << ',' << format_real(s.form_penalty) << ',' << format_real(s.recon)
        << ',' << format_real(s.vq) << ',' << format_real(s.swap_recon) << ',' << format_real(s.ce_dq) << '\n';
    last = s;
  };
  cb.on_checkpoint = [&](std::uint64_t it, const SoftTprAutoencoder& m, const SeededRng& r) {
    const fs::path path = dir / checkpoint_file_name(it);
    save_checkpoint(Checkpoint{c, it, r, m}, path);
    out << "checkpoint " << it << " -> " << path.string() << '\n';
  };
  train(model, pair_source(renderer), opts, rng, cb);
  if (!log) throw IoError("write to training log failed");
  if (opts.iterations > 0) {
    out << "final total=" << format_real(last.total) << " recon=" << format_real(last.recon)
        << " form_penalty=" << format_real(last.form_penalty) << " vq=" << format_real(last.vq)
        << " swap_recon=" << format_real(last.swap_recon) << " ce_dq=" << format_real(last.ce_dq) << '\n';
  }
  return kOk;
}

std::vector<Vector> read_vectors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open input '" + path + "'");
  std::vector<Vector> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> v;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      try {
        v.push_back(parse_real(std::string_view(line).substr(start, comma - start)));
      } catch (const std::invalid_argument& e) {
        throw IoError("input '" + path + "': " + e.what());
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.emplace_back(std::move(v));
  }
  return rows;
}

std::string join(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_real(v[i]);
  return s;
}

int cmd_quantize(const Options& o, std::ostream& out) {
  const Checkpoint cp = load_checkpoint(single_checkpoint(o));
  const SoftTprAutoencoder& model = cp.model;
  const FillerCodebook book = model.codebook();

  if (!o.compose.empty()) {
    BindingSet m;
    std::stringstream ss(o.compose);
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(item);
      } catch (const std::exception&) {
        throw ConfigError("--compose: malformed index '" + item + "'");
      }
      if (idx == 0) throw ConfigError("--compose: indices are 1-based");
      m.filler_of_role.push_back(idx - 1);
    }
    try {
      validate_binding(m, model.roles().count(), book.count());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("--compose: ") + e.what());
    }
    out << join(compose(model.roles(), book, m).vector.span()) << '\n';
    return kOk;
  }

  if (o.input.empty()) throw ConfigError("quantize needs --input or --compose");
  const auto rows = read_vectors(o.input);
  const std::size_t width = o.observations ? model.config().obs_dim : model.config().tpr_dim();
  Matrix x(rows.size(), width);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      throw IoError("input row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                    " values, expected " + std::to_string(width));
    }
    std::copy(rows[r].begin(), rows[r].end(), x.row(r).begin());
  }
  const Matrix z = o.observations ? model.encode(x) : x;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto q = quantize_greedy(model.roles(), book, SoftTpr{Vector(z.row(r))});
    out << "row=" << r << " matching=";
    for (std::size_t i = 0; i < q.tpr.matching.size(); ++i) out << (i ? "," : "") << q.tpr.matching[i] + 1;
    out << " role_residuals=" << join(q.per_role_errors) << " residual=" << format_real(q.residual)
        << " tpr=" << join(q.tpr.vector.span()) << '\n';
  }
  return kOk;
}

int cmd_eval_metrics(const Options& o, std::ostream& out) {
  const Checkpoint cp = load_checkpoint(single_checkpoint(o));
  const RunConfig c = resolve_eval_config(o, cp);
  const Dataset d = load_consistent_dataset(o.dataset);
  if (d.spec.obs_dim != cp.model.config().obs_dim) throw ConfigError("dataset obs_dim does not match the model");
  const Renderer renderer(d.spec);
  const MetricReport report = evaluate_metrics(cp.model, renderer, c.metrics);
  out << std::left << std::setw(12) << "metric" << "score\n";
  out << std::setw(12) << "factorvae" << format_real(report.factorvae) << '\n'
      << std::setw(12) << "dci" << format_real(report.dci) << '\n'
      << std::setw(12) << "betavae" << format_real(report.betavae) << '\n'
      << std::setw(12) << "mig" << format_real(report.mig) << '\n';
  if (!o.out.empty()) write_text(output_dir(o, c) / "metrics.txt", format_metric_report(report));
  return kOk;
}

int cmd_eval_probe(const Options& o, std::ostream& out) {
  if (o.checkpoints.empty()) throw ConfigError("at least one --checkpoint is required");
  std::vector<Checkpoint> cps;
  for (const auto& p : o.checkpoints) cps.push_back(load_checkpoint(p));
  const RunConfig c = resolve_eval_config(o, cps.front());
  const Dataset d = load_consistent_dataset(o.dataset);
  std::vector<SweepCheckpoint> sweep;
  for (const auto& cp : cps) {
    if (d.spec.obs_dim != cp.model.config().obs_dim) throw ConfigError("dataset obs_dim does not match the model");
    sweep.push_back({cp.iteration, &cp.model});
  }
  std::vector<SweepRow> rows;
  try {
    rows = convergence_sweep(sweep, d, c.probe, c.metrics);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::string csv = format_sweep_csv(rows);
  out << csv;
  if (!o.out.empty()) write_text(output_dir(o, c) / "probe.csv", csv);
  return kOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  const Renderer renderer(c.data);
  SoftTprAutoencoder model(c.model);
  SeededRng rng(c.train_seed());
  const PairBatch batch = pair_source(renderer)(c.gradcheck.batch_size, rng);
  const LossBuilder build = [&](Tape& tape) {
    return model.loss_weakly_supervised(tape, batch.x, batch.x_prime, batch.differing).loss;
  };
  GradcheckOptions go;
  go.h = c.gradcheck.h;
  go.tolerance = c.gradcheck.tolerance;
  go.samples_per_parameter = c.gradcheck.samples_per_parameter;
  go.denominator_floor = c.gradcheck.denominator_floor;
  go.seed = splitmix64(c.seed ^ 0x5ULL);
  const auto params = model.parameters();
  const GradcheckReport report = gradcheck(build, params, go);
  out << "checked=" << report.checked << " failures=" << report.failures.size()
      << " relu_zero_hits=" << report.relu_zero_hits << " worst_relative_error="
      << format_real(report.worst.relative_error) << " worst_parameter=" << report.worst.parameter << '['
      << report.worst.index << "]\n";
  out << (report.passed ? "PASS" : "FAIL") << '\n';
  return report.passed ? kOk : kCheckFailed;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Soft TPR autoencoder toolkit"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration");
    sub->add_option("--seed", o.seed, "override the run seed");
    sub->add_option("--out", o.out, "output directory");
  };
  auto* gen = app.add_subcommand("generate-data", "sample and export a synthetic dataset");
  add_config(gen);
  auto* tr = app.add_subcommand("train", "train a model and write checkpoints");
  add_config(tr);
  auto* qz = app.add_subcommand("quantize", "print matchings and residuals for vectors");
  qz->add_option("--checkpoint", o.checkpoints, "checkpoint file")->required()->expected(1);
  qz->add_option("--input", o.input, "file of comma-separated vectors, one per line");
  qz->add_flag("--observations", o.observations, "input rows are observations; encode them first");
  qz->add_option("--compose", o.compose, "print the TPR of a 1-based matching, e.g. 1,3,2");
  auto* em = app.add_subcommand("eval-metrics", "disentanglement metrics of a checkpoint");
  add_config(em);
  em->add_option("--checkpoint", o.checkpoints, "checkpoint file")->required()->expected(1);
  em->add_option("--dataset", o.dataset, "dataset file")->required();
  auto* ep = app.add_subcommand("eval-probe", "factor-regression probes over checkpoints");
  add_config(ep);
  ep->add_option("--checkpoint", o.checkpoints, "checkpoint file (repeatable)")->required();
  ep->add_option("--dataset", o.dataset, "dataset file")->required();
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the training loss");
  add_config(gc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (gen->parsed()) return cmd_generate_data(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (qz->parsed()) return cmd_quantize(o, out);
    if (em->parsed()) return cmd_eval_metrics(o, out);
    if (ep->parsed()) return cmd_eval_probe(o, out);
    if (gc->parsed()) return cmd_gradcheck(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const NumericAbort& e) {
    err << "numeric abort: " << e.what() << '\n';
    return kNumericAbort;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace softtpr::cli
