// SPDX-License-Identifier: Apache-2.0
#include "softtpr/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "softtpr/errors.hpp"

namespace softtpr {

using nlohmann::json;

namespace {

void require_keys(const json& j, const std::string& section, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  const std::set<std::string_view> keys(allowed);
  for (const auto& [k, v] : j.items()) {
    if (!keys.contains(k)) throw ConfigError(section + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const json& j, std::string_view key, T& out, const std::string& section) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(section + "." + std::string(key) + ": " + e.what());
  }
}

void read_range(const json& j, std::string_view key, WidthRange& out, const std::string& section) {
  std::vector<std::size_t> v{out.lo, out.hi};
  read(j, key, v, section);
  if (v.size() != 2) throw ConfigError(section + "." + std::string(key) + ": expected [lo, hi]");
  out = WidthRange{v[0], v[1]};
}

void parse_model(const json& j, ModelConfig& m) {
  const std::string s = "model";
  require_keys(j, s, {"d_f", "d_r", "n_f", "n_r", "encoder_widths", "decoder_widths", "beta", "lambda1",
                      "lambda2", "form_penalty_weight", "role_mode", "codebook_init_scale",
                      "identity_decoder"});
  read(j, "d_f", m.d_f, s);
  read(j, "d_r", m.d_r, s);
  read(j, "n_f", m.n_f, s);
  read(j, "n_r", m.n_r, s);
  read(j, "encoder_widths", m.encoder_widths, s);
  read(j, "decoder_widths", m.decoder_widths, s);
  read(j, "beta", m.beta, s);
  read(j, "lambda1", m.lambda1, s);
  read(j, "lambda2", m.lambda2, s);
  read(j, "form_penalty_weight", m.form_penalty_weight, s);
  read(j, "codebook_init_scale", m.codebook_init_scale, s);
  read(j, "identity_decoder", m.identity_decoder, s);
  std::string mode(to_string(m.role_mode));
  read(j, "role_mode", mode, s);
  try {
    m.role_mode = role_mode_from_string(mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model.role_mode: ") + e.what());
  }
}

void parse_data(const json& j, FactorSpec& d) {
  const std::string s = "data";
  require_keys(j, s, {"values_per_factor", "obs_dim", "render_seed"});
  read(j, "values_per_factor", d.values_per_factor, s);
  read(j, "obs_dim", d.obs_dim, s);
  read(j, "render_seed", d.render_seed, s);
}

void parse_train(const json& j, TrainConfig& t) {
  const std::string s = "train";
  require_keys(j, s, {"iterations", "batch_size", "lr", "checkpoint_schedule"});
  read(j, "iterations", t.iterations, s);
  read(j, "batch_size", t.batch_size, s);
  read(j, "lr", t.lr, s);
  read(j, "checkpoint_schedule", t.checkpoint_schedule, s);
}

void parse_probe(const json& j, ProbeConfig& p) {
  const std::string s = "probe";
  require_keys(j, s, {"d12", "d3", "configs_per_seed", "lr", "epochs", "batch_size", "input_kind",
                      "train_sizes", "train_samples", "test_samples"});
  read_range(j, "d12", p.d12, s);
  read_range(j, "d3", p.d3, s);
  read(j, "configs_per_seed", p.configs_per_seed, s);
  read(j, "lr", p.lr, s);
  read(j, "epochs", p.epochs, s);
  read(j, "batch_size", p.batch_size, s);
  read(j, "train_sizes", p.train_sizes, s);
  read(j, "train_samples", p.train_samples, s);
  read(j, "test_samples", p.test_samples, s);
  std::string kind(to_string(p.input_kind));
  read(j, "input_kind", kind, s);
  try {
    p.input_kind = input_kind_from_string(kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("probe.input_kind: ") + e.what());
  }
}

void parse_metrics(const json& j, MetricOptions& m) {
  const std::string s = "metrics";
  require_keys(j, s, {"factorvae_batches", "factorvae_batch_size", "dci_samples", "betavae_points",
                      "betavae_pairs_per_point", "mig_samples"});
  read(j, "factorvae_batches", m.factorvae_batches, s);
  read(j, "factorvae_batch_size", m.factorvae_batch_size, s);
  read(j, "dci_samples", m.dci_samples, s);
  read(j, "betavae_points", m.betavae_points, s);
  read(j, "betavae_pairs_per_point", m.betavae_pairs_per_point, s);
  read(j, "mig_samples", m.mig_samples, s);
}

void parse_gradcheck(const json& j, GradcheckConfig& g) {
  const std::string s = "gradcheck";
  require_keys(j, s, {"batch_size", "h", "tolerance", "samples_per_parameter", "denominator_floor"});
  read(j, "batch_size", g.batch_size, s);
  read(j, "h", g.h, s);
  read(j, "tolerance", g.tolerance, s);
  read(j, "samples_per_parameter", g.samples_per_parameter, s);
  read(j, "denominator_floor", g.denominator_floor, s);
}

}  // namespace

void RunConfig::finalize() {
  model.obs_dim = data.obs_dim;
  model.seed = seed;
  probe.seed = splitmix64(seed ^ 0x2ULL);
  metrics.seed = splitmix64(seed ^ 0x3ULL);
  try {
    data.validate();
    model.validate();
    probe.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (model.n_r != data.n_factors()) {
    throw ConfigError("model.n_r must equal the number of data factors");
  }
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (gradcheck.batch_size == 0 || gradcheck.samples_per_parameter == 0 || !(gradcheck.h > 0.0) ||
      !(gradcheck.tolerance > 0.0)) {
    throw ConfigError("gradcheck: sizes, h and tolerance must be positive");
  }
  if (metrics.factorvae_batches < 2 || metrics.factorvae_batch_size < 2 || metrics.dci_samples < 100 ||
      metrics.betavae_points < 2 || metrics.betavae_pairs_per_point == 0 || metrics.mig_samples < 100) {
    throw ConfigError("metrics: sample counts below the metric minimums");
  }
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.iterations = train.iterations;
  o.batch_size = train.batch_size;
  o.adam.lr = train.lr;
  o.checkpoint_schedule = train.checkpoint_schedule;
  return o;
}

std::uint64_t RunConfig::train_seed() const { return splitmix64(seed ^ 0x1ULL); }

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  require_keys(j, "config", {"seed", "out_dir", "model", "data", "train", "probe", "metrics", "gradcheck"});
  read(j, "seed", c.seed, "config");
  read(j, "out_dir", c.out_dir, "config");
  if (j.contains("model")) parse_model(j["model"], c.model);
  if (j.contains("data")) parse_data(j["data"], c.data);
  if (j.contains("train")) parse_train(j["train"], c.train);
  if (j.contains("probe")) parse_probe(j["probe"], c.probe);
  if (j.contains("metrics")) parse_metrics(j["metrics"], c.metrics);
  if (j.contains("gradcheck")) parse_gradcheck(j["gradcheck"], c.gradcheck);
  c.finalize();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_run_config(buf.str());
}

std::string format_run_config(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["model"] = {{"d_f", c.model.d_f},
                {"d_r", c.model.d_r},
                {"n_f", c.model.n_f},
                {"n_r", c.model.n_r},
                {"encoder_widths", c.model.encoder_widths},
                {"decoder_widths", c.model.decoder_widths},
                {"beta", c.model.beta},
                {"lambda1", c.model.lambda1},
                {"lambda2", c.model.lambda2},
                {"form_penalty_weight", c.model.form_penalty_weight},
                {"role_mode", std::string(to_string(c.model.role_mode))},
                {"codebook_init_scale", c.model.codebook_init_scale},
                {"identity_decoder", c.model.identity_decoder}};
  j["data"] = {{"values_per_factor", c.data.values_per_factor},
               {"obs_dim", c.data.obs_dim},
               {"render_seed", c.data.render_seed}};
  j["train"] = {{"iterations", c.train.iterations},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"checkpoint_schedule", c.train.checkpoint_schedule}};
  j["probe"] = {{"d12", {c.probe.d12.lo, c.probe.d12.hi}},
                {"d3", {c.probe.d3.lo, c.probe.d3.hi}},
                {"configs_per_seed", c.probe.configs_per_seed},
                {"lr", c.probe.lr},
                {"epochs", c.probe.epochs},
                {"batch_size", c.probe.batch_size},
                {"input_kind", std::string(to_string(c.probe.input_kind))},
                {"train_sizes", c.probe.train_sizes},
                {"train_samples", c.probe.train_samples},
                {"test_samples", c.probe.test_samples}};
  j["metrics"] = {{"factorvae_batches", c.metrics.factorvae_batches},
                  {"factorvae_batch_size", c.metrics.factorvae_batch_size},
                  {"dci_samples", c.metrics.dci_samples},
                  {"betavae_points", c.metrics.betavae_points},
                  {"betavae_pairs_per_point", c.metrics.betavae_pairs_per_point},
                  {"mig_samples", c.metrics.mig_samples}};
  j["gradcheck"] = {{"batch_size", c.gradcheck.batch_size},
                    {"h", c.gradcheck.h},
                    {"tolerance", c.gradcheck.tolerance},
                    {"samples_per_parameter", c.gradcheck.samples_per_parameter},
                    {"denominator_floor", c.gradcheck.denominator_floor}};
  return j.dump(2) + "\n";
}

}  // namespace softtpr
