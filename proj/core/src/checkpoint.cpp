// SPDX-License-Identifier: Apache-2.0
#include "softtpr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "softtpr/errors.hpp"

namespace softtpr {

namespace {

constexpr char kMagic[8] = {'S', 'O', 'F', 'T', 'T', 'P', 'R', '\0'};

enum Tag : std::uint32_t { kConfig = 1, kIteration = 2, kRng = 3, kRoles = 4, kParameters = 5 };

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void real(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void matrix(const Matrix& m) {
    u64(m.rows());
    u64(m.cols());
    for (double v : m.flat()) real(v);
  }
  void section(std::uint32_t tag, const Writer& body) {
    u32(tag);
    u64(body.out_.size());
    out_.append(body.out_);
  }
  std::string& str() { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double real() { return std::bit_cast<double>(u64()); }
  std::string_view bytes() {
    const std::uint64_t n = u64();
    need(n);
    const auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix matrix() {
    const std::uint64_t r = u64();
    const std::uint64_t c = u64();
    if (c != 0 && r > (in_.size() - pos_) / 8 / c) throw IoError("checkpoint: matrix larger than payload");
    Matrix m(r, c);
    for (auto& v : m.flat()) v = real();
    return m;
  }
  Reader section(std::uint32_t expected) {
    const std::uint32_t tag = u32();
    if (tag != expected) {
      throw IoError("checkpoint: expected section " + std::to_string(expected) + ", found " + std::to_string(tag));
    }
    return Reader(bytes());
  }
  void raw(char* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw IoError("checkpoint: truncated");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_parameter(Writer& w, const Parameter& p) {
  w.bytes(p.name);
  w.matrix(p.value);
  w.matrix(p.first_moment);
  w.matrix(p.second_moment);
  w.u64(p.step);
}

void read_parameter(Reader& r, Parameter& p) {
  const std::string name(r.bytes());
  if (name != p.name) throw IoError("checkpoint: expected parameter '" + p.name + "', found '" + name + "'");
  Matrix value = r.matrix();
  Matrix m1 = r.matrix();
  Matrix m2 = r.matrix();
  if (value.rows() != p.value.rows() || value.cols() != p.value.cols()) {
    throw IoError("checkpoint: shape mismatch for parameter '" + name + "'");
  }
  p.value = std::move(value);
  p.first_moment = std::move(m1);
  p.second_moment = std::move(m2);
  p.grad = Matrix(p.value.rows(), p.value.cols());
  p.step = r.u64();
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.str().append(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);

  Writer config;
  config.bytes(format_run_config(c.config));
  w.section(kConfig, config);

  Writer iteration;
  iteration.u64(c.iteration);
  w.section(kIteration, iteration);

  Writer rng;
  rng.u64(c.rng.seed());
  rng.bytes(c.rng.state());
  w.section(kRng, rng);

  Writer roles;
  roles.bytes(to_string(c.model.roles().mode()));
  roles.matrix(c.model.roles().embeddings());
  roles.matrix(c.model.roles().unbinders());
  w.section(kRoles, roles);

  Writer params;
  const auto list = c.model.parameters();
  params.u64(list.size());
  for (const Parameter* p : list) write_parameter(params, *p);
  w.section(kParameters, params);
  return std::move(w.str());
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw IoError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));

  Reader config = r.section(kConfig);
  RunConfig run;
  try {
    run = parse_run_config(std::string(config.bytes()));
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint: embedded config invalid: ") + e.what());
  }

  Reader iteration = r.section(kIteration);
  const std::uint64_t it = iteration.u64();

  Reader rng_section = r.section(kRng);
  const std::uint64_t seed = rng_section.u64();
  SeededRng rng;
  try {
    rng.restore(seed, std::string(rng_section.bytes()));
  } catch (const std::exception& e) {
    throw IoError(std::string("checkpoint: bad rng state: ") + e.what());
  }

  Reader roles_section = r.section(kRoles);
  RoleMode mode;
  try {
    mode = role_mode_from_string(roles_section.bytes());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  Matrix emb = roles_section.matrix();
  Matrix unb = roles_section.matrix();
  RoleSpace roles = [&] {
    try {
      return RoleSpace::from_parts(mode, std::move(emb), std::move(unb));
    } catch (const std::exception& e) {
      throw IoError(std::string("checkpoint: bad role space: ") + e.what());
    }
  }();

  SoftTprAutoencoder fresh(run.model);
  SoftTprAutoencoder model(run.model, std::move(roles), fresh.codebook_parameter(), fresh.encoder(),
                           fresh.decoder());
  Reader params = r.section(kParameters);
  auto list = model.parameters();
  if (params.u64() != list.size()) throw IoError("checkpoint: parameter count mismatch");
  for (Parameter* p : list) read_parameter(params, *p);
  if (!r.done()) throw IoError("checkpoint: trailing bytes");
  return Checkpoint{std::move(run), it, std::move(rng), std::move(model)};
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string bytes = serialize_checkpoint(c);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << is.rdbuf();
  return deserialize_checkpoint(buf.str());
}

std::string checkpoint_file_name(std::uint64_t iteration) {
  std::ostringstream os;
  os << "checkpoint_" << std::setw(6) << std::setfill('0') << iteration << ".bin";
  return os.str();
}

}  // namespace softtpr
