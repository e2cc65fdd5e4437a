// SPDX-License-Identifier: Apache-2.0
#include "softtpr/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include "softtpr/errors.hpp"

namespace softtpr {

namespace {

constexpr std::string_view kHeaderTag = "# softtpr-dataset";

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::size_t parse_size(std::string_view s) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw std::invalid_argument("dataset: malformed integer '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::size_t FactorSpec::grid_size() const {
  std::size_t n = 1;
  for (std::size_t v : values_per_factor) n *= v;
  return n;
}

std::size_t FactorSpec::one_hot_width() const {
  return std::accumulate(values_per_factor.begin(), values_per_factor.end(), std::size_t{0});
}

void FactorSpec::validate() const {
  if (values_per_factor.empty()) throw std::invalid_argument("FactorSpec: no factors");
  for (std::size_t v : values_per_factor)
    if (v < 2) throw std::invalid_argument("FactorSpec: every factor needs at least 2 values");
  if (obs_dim < one_hot_width()) {
    throw std::invalid_argument("FactorSpec: obs_dim must be at least the total number of values");
  }
}

std::vector<FactorRecord> enumerate_grid(const FactorSpec& spec) {
  std::vector<FactorRecord> out;
  out.reserve(spec.grid_size());
  FactorRecord cur{std::vector<std::size_t>(spec.n_factors(), 0)};
  while (true) {
    out.push_back(cur);
    std::size_t pos = spec.n_factors();
    while (pos > 0) {
      --pos;
      if (++cur.values[pos] < spec.values_per_factor[pos]) break;
      cur.values[pos] = 0;
      if (pos == 0) return out;
    }
  }
}

Renderer::Renderer(FactorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::uint64_t seed = spec_.render_seed;
  draw(seed);
  while (!injective_on_grid()) {
    ++regenerations_;
    draw(++seed);
  }
}

void Renderer::draw(std::uint64_t seed) {
  SeededRng rng(seed);
  effective_seed_ = seed;
  const std::size_t width = spec_.one_hot_width();
  const double gain = 1.0 / std::sqrt(static_cast<double>(spec_.n_factors()));
  weight_ = Matrix(spec_.obs_dim, width);
  for (auto& v : weight_.flat()) v = gain * rng.normal();
  bias_ = Vector(spec_.obs_dim);
  for (auto& v : bias_) v = 0.1 * rng.normal();
}

bool Renderer::injective_on_grid() const {
  const auto grid = enumerate_grid(spec_);
  std::vector<Vector> obs;
  obs.reserve(grid.size());
  for (const auto& r : grid) obs.push_back(render(r));
  for (std::size_t a = 0; a < obs.size(); ++a)
    for (std::size_t b = a + 1; b < obs.size(); ++b)
      if (std::sqrt(squared_distance(obs[a].span(), obs[b].span())) <= 1e-6) return false;
  return true;
}

Vector Renderer::render(const FactorRecord& record) const {
  if (record.values.size() != spec_.n_factors()) throw std::invalid_argument("render: wrong factor count");
  Vector out = bias_;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < spec_.n_factors(); ++k) {
    if (record.values[k] >= spec_.values_per_factor[k]) {
      throw std::invalid_argument("render: value out of range for factor " + std::to_string(k));
    }
    const std::size_t col = offset + record.values[k];
    for (std::size_t d = 0; d < spec_.obs_dim; ++d) out[d] += weight_(d, col);
    offset += spec_.values_per_factor[k];
  }
  for (auto& v : out) v = std::tanh(v);
  return out;
}

FactorRecord sample_record(const FactorSpec& spec, SeededRng& rng) {
  FactorRecord r;
  r.values.reserve(spec.n_factors());
  for (std::size_t v : spec.values_per_factor) r.values.push_back(rng.below(v));
  return r;
}

MatchPair sample_pair(const Renderer& renderer, SeededRng& rng) {
  const FactorSpec& spec = renderer.spec();
  MatchPair p;
  p.a = sample_record(spec, rng);
  p.differing = rng.below(spec.n_factors());
  p.a_prime = p.a;
  const std::size_t n_values = spec.values_per_factor[p.differing];
  // Uniform over the other values: draw from n-1 and skip the current one.
  std::size_t v = rng.below(n_values - 1);
  if (v >= p.a.values[p.differing]) ++v;
  p.a_prime.values[p.differing] = v;
  p.x = renderer.render(p.a);
  p.x_prime = renderer.render(p.a_prime);
  return p;
}

PairSource pair_source(const Renderer& renderer) {
  return [&renderer](std::size_t batch_size, SeededRng& rng) {
    const std::size_t d = renderer.spec().obs_dim;
    PairBatch b{Matrix(batch_size, d), Matrix(batch_size, d), {}};
    b.differing.reserve(batch_size);
    for (std::size_t r = 0; r < batch_size; ++r) {
      MatchPair p = sample_pair(renderer, rng);
      std::copy(p.x.begin(), p.x.end(), b.x.row(r).begin());
      std::copy(p.x_prime.begin(), p.x_prime.end(), b.x_prime.row(r).begin());
      b.differing.push_back(p.differing);
    }
    return b;
  };
}

Matrix Dataset::observation_matrix() const {
  Matrix m(observations.size(), spec.obs_dim);
  for (std::size_t r = 0; r < observations.size(); ++r)
    std::copy(observations[r].begin(), observations[r].end(), m.row(r).begin());
  return m;
}

Dataset make_grid_dataset(const Renderer& renderer) {
  Dataset d{renderer.spec(), enumerate_grid(renderer.spec()), {}};
  d.spec.render_seed = renderer.effective_seed();
  for (const auto& r : d.records) d.observations.push_back(renderer.render(r));
  return d;
}

Dataset make_sampled_dataset(const Renderer& renderer, std::size_t count, SeededRng& rng) {
  Dataset d{renderer.spec(), {}, {}};
  d.spec.render_seed = renderer.effective_seed();
  for (std::size_t i = 0; i < count; ++i) {
    d.records.push_back(sample_record(renderer.spec(), rng));
    d.observations.push_back(renderer.render(d.records.back()));
  }
  return d;
}

std::string format_real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_real: to_chars failed");
  return std::string(buf, p);
}

double parse_real(std::string_view s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw std::invalid_argument("malformed real '" + std::string(s) + "'");
  }
  return v;
}

std::string format_dataset(const Dataset& d) {
  std::ostringstream os;
  os << kHeaderTag << " n_r=" << d.spec.n_factors() << " values=";
  for (std::size_t k = 0; k < d.spec.n_factors(); ++k) {
    os << (k ? "," : "") << d.spec.values_per_factor[k];
  }
  os << " obs_dim=" << d.spec.obs_dim << " seed=" << d.spec.render_seed << " rows=" << d.size()
     << '\n';
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t k = 0; k < d.records[r].values.size(); ++k) {
      os << (k ? "," : "") << d.records[r].values[k];
    }
    for (double v : d.observations[r]) os << ',' << format_real(v);
    os << '\n';
  }
  return os.str();
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream is(text);
  std::string header;
  if (!std::getline(is, header) || header.rfind(kHeaderTag, 0) != 0) {
    throw std::invalid_argument("dataset: missing '# softtpr-dataset' header");
  }
  Dataset d;
  d.spec.values_per_factor.clear();
  std::size_t n_r = 0;
  std::size_t rows = 0;
  bool have_rows = false;
  for (std::string_view kv : split(std::string_view(header).substr(kHeaderTag.size()), ' ')) {
    if (kv.empty()) continue;
    const std::size_t eq = kv.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument("dataset: malformed header field");
    const std::string_view key = kv.substr(0, eq);
    const std::string_view val = kv.substr(eq + 1);
    if (key == "n_r") {
      n_r = parse_size(val);
    } else if (key == "values") {
      for (auto v : split(val, ',')) d.spec.values_per_factor.push_back(parse_size(v));
    } else if (key == "obs_dim") {
      d.spec.obs_dim = parse_size(val);
    } else if (key == "seed") {
      d.spec.render_seed = parse_size(val);
    } else if (key == "rows") {
      rows = parse_size(val);
      have_rows = true;
    } else {
      throw std::invalid_argument("dataset: unknown header key '" + std::string(key) + "'");
    }
  }
  if (n_r != d.spec.values_per_factor.size()) throw std::invalid_argument("dataset: n_r disagrees with values");
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != n_r + d.spec.obs_dim) {
      throw std::invalid_argument("dataset: row has " + std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(n_r + d.spec.obs_dim));
    }
    FactorRecord rec;
    for (std::size_t k = 0; k < n_r; ++k) rec.values.push_back(parse_size(fields[k]));
    Vector obs(d.spec.obs_dim);
    for (std::size_t j = 0; j < d.spec.obs_dim; ++j) obs[j] = parse_real(fields[n_r + j]);
    d.records.push_back(std::move(rec));
    d.observations.push_back(std::move(obs));
  }
  if (have_rows && rows != d.size()) throw std::invalid_argument("dataset: row count disagrees with header");
  return d;
}

void export_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << format_dataset(dataset);
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

Dataset import_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_dataset(buf.str());
}

}  // namespace softtpr
