// SPDX-License-Identifier: Apache-2.0
#include "softtpr/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "softtpr/errors.hpp"

namespace softtpr {

namespace {

RoleSpace make_roles(const ModelConfig& c, SeededRng& rng) {
  switch (c.role_mode) {
    case RoleMode::kSemiOrthogonal:
      return RoleSpace::semi_orthogonal(c.d_r, c.n_r, rng);
    case RoleMode::kIdentity:
      return RoleSpace::identity(c.n_r);
    case RoleMode::kGeneral: {
      Matrix m(c.d_r, c.n_r);
      for (auto& v : m.flat()) v = rng.normal() / std::sqrt(static_cast<double>(c.d_r));
      return RoleSpace::general(std::move(m));
    }
  }
  throw std::invalid_argument("unknown role mode");
}

std::vector<std::size_t> widths(std::size_t in, const std::vector<std::size_t>& hidden,
                                std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("ModelConfig: " + msg); };
  if (obs_dim == 0 || d_f == 0 || d_r == 0 || n_f == 0 || n_r == 0) fail("dimensions must be positive");
  for (std::size_t w : encoder_widths)
    if (w == 0) fail("encoder widths must be positive");
  for (std::size_t w : decoder_widths)
    if (w == 0) fail("decoder widths must be positive");
  if (role_mode == RoleMode::kSemiOrthogonal && d_r < n_r) fail("semi-orthogonal roles need d_r >= n_r");
  if (role_mode == RoleMode::kIdentity && d_r != n_r) fail("identity roles need d_r == n_r");
  if (role_mode == RoleMode::kGeneral && d_r < n_r) fail("general roles need d_r >= n_r");
  if (beta < 0.0 || lambda1 < 0.0 || lambda2 < 0.0) fail("beta, lambda1, lambda2 must be non-negative");
  if (!(form_penalty_weight > 0.0)) fail("form_penalty_weight must be positive");
  if (!(codebook_init_scale > 0.0)) fail("codebook_init_scale must be positive");
  if (identity_decoder && obs_dim != tpr_dim()) fail("identity_decoder needs obs_dim == d_f * d_r");
}

SoftTprAutoencoder::SoftTprAutoencoder(const ModelConfig& config)
    : config_(config), roles_(RoleSpace::identity(1)) {
  config_.validate();
  SeededRng rng(config_.seed);
  roles_ = make_roles(config_, rng);
  codebook_ = Parameter("codebook", FillerCodebook::random_normal(config_.d_f, config_.n_f,
                                                                  config_.codebook_init_scale, rng)
                                        .embeddings());
  encoder_ = Mlp("encoder", widths(config_.obs_dim, config_.encoder_widths, config_.tpr_dim()), rng);
  if (!config_.identity_decoder) {
    decoder_ = Mlp("decoder", widths(config_.tpr_dim(), config_.decoder_widths, config_.obs_dim), rng);
  }
  build_constants();
}

SoftTprAutoencoder::SoftTprAutoencoder(const ModelConfig& config, RoleSpace roles,
                                       Parameter codebook, Mlp encoder, Mlp decoder)
    : config_(config),
      roles_(std::move(roles)),
      codebook_(std::move(codebook)),
      encoder_(std::move(encoder)),
      decoder_(std::move(decoder)) {
  config_.validate();
  if (roles_.dim() != config_.d_r || roles_.count() != config_.n_r ||
      codebook_.value.rows() != config_.d_f || codebook_.value.cols() != config_.n_f ||
      encoder_.input_dim() != config_.obs_dim || encoder_.output_dim() != config_.tpr_dim()) {
    throw std::invalid_argument("SoftTprAutoencoder: stored parts disagree with the config");
  }
  if (!config_.identity_decoder &&
      (decoder_.input_dim() != config_.tpr_dim() || decoder_.output_dim() != config_.obs_dim)) {
    throw std::invalid_argument("SoftTprAutoencoder: decoder shape disagrees with the config");
  }
  build_constants();
}

void SoftTprAutoencoder::build_constants() {
  const std::size_t df = config_.d_f;
  const std::size_t dr = config_.d_r;
  const std::size_t nr = config_.n_r;
  unbind_matrix_ = Matrix(df * dr, nr * df);
  compose_matrix_ = Matrix(nr * df, df * dr);
  for (std::size_t i = 0; i < nr; ++i) {
    for (std::size_t j = 0; j < dr; ++j) {
      const double u = roles_.unbinders()(j, i);
      const double r = roles_.embeddings()(j, i);
      for (std::size_t a = 0; a < df; ++a) {
        unbind_matrix_(j * df + a, i * df + a) = u;
        compose_matrix_(i * df + a, j * df + a) = r;
      }
    }
  }
}

std::vector<Parameter*> SoftTprAutoencoder::parameters() {
  std::vector<Parameter*> out = encoder_.parameters();
  out.push_back(&codebook_);
  for (Parameter* p : decoder_.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> SoftTprAutoencoder::parameters() const {
  std::vector<const Parameter*> out = encoder_.parameters();
  out.push_back(&codebook_);
  for (const Parameter* p : decoder_.parameters()) out.push_back(p);
  return out;
}

Matrix SoftTprAutoencoder::encode(const Matrix& x) const { return encoder_.apply(x); }

Matrix SoftTprAutoencoder::decode(const Matrix& tpr_rows) const {
  return config_.identity_decoder ? tpr_rows : decoder_.apply(tpr_rows);
}

SoftTprAutoencoder::ForwardResult SoftTprAutoencoder::forward(const Matrix& x) const {
  if (x.cols() != config_.obs_dim) {
    throw std::invalid_argument("forward: observation width " + std::to_string(x.cols()) +
                                ", expected " + std::to_string(config_.obs_dim));
  }
  ForwardResult r;
  r.z = encode(x);
  const FillerCodebook book = codebook();
  Matrix tprs(x.rows(), config_.tpr_dim());
  for (std::size_t b = 0; b < x.rows(); ++b) {
    r.quantized.push_back(quantize_greedy(roles_, book, SoftTpr{Vector(r.z.row(b))}));
    const Vector& v = r.quantized.back().tpr.vector;
    std::copy(v.begin(), v.end(), tprs.row(b).begin());
  }
  r.reconstruction = decode(tprs);
  return r;
}

SoftTprAutoencoder::Encoded SoftTprAutoencoder::encode_on_tape(Tape& tape, const Matrix& x) {
  if (x.cols() != config_.obs_dim) throw std::invalid_argument("encode: observation width mismatch");
  Encoded e;
  e.z = encoder_.forward(tape, tape.constant(x));
  e.soft_fillers = tape.matmul(e.z, tape.constant(unbind_matrix_));

  const std::size_t nr = config_.n_r;
  const std::size_t df = config_.d_f;
  const Matrix& f = tape.value(e.soft_fillers);
  const FillerCodebook book = codebook();
  const auto flat = tape.frozen_indices([&] {
    std::vector<std::size_t> idx;
    idx.reserve(f.rows() * nr);
    for (std::size_t b = 0; b < f.rows(); ++b)
      for (std::size_t i = 0; i < nr; ++i) idx.push_back(nearest_filler(book, f.row(b).subspan(i * df, df)));
    return idx;
  });
  e.matching.assign(f.rows(), std::vector<std::size_t>(nr));
  for (std::size_t b = 0; b < f.rows(); ++b)
    for (std::size_t i = 0; i < nr; ++i) e.matching[b][i] = flat[b * nr + i];

  e.quantized = tape.gather_columns(tape.parameter(codebook_), e.matching);
  e.tpr = tape.matmul(e.quantized, tape.constant(compose_matrix_));
  return e;
}

Tape::Var SoftTprAutoencoder::decode_on_tape(Tape& tape, Tape::Var input) {
  return config_.identity_decoder ? input : decoder_.forward(tape, input);
}

void SoftTprAutoencoder::unsupervised_terms(Tape& tape, const Encoded& enc, const Matrix& x,
                                            TrainStepOutput& out, std::vector<Tape::Var>& terms,
                                            std::vector<double>& weights) {
  const double batch = static_cast<double>(x.rows());
  const double nr = static_cast<double>(config_.n_r);

  // ψ* is the quantization target of the form penalty, hence a constant there.
  Tape::Var form = tape.scale(tape.sum_squares(tape.sub(enc.z, tape.stop_gradient(enc.tpr))), 1.0 / batch);

  Tape::Var decoder_in = tape.straight_through(tape.value(enc.tpr), enc.z);
  Tape::Var x_hat = decode_on_tape(tape, decoder_in);
  Tape::Var recon = tape.scale(tape.sum_squares(tape.sub(x_hat, tape.constant(x))), 1.0 / batch);

  Tape::Var codebook_fit =
      tape.sum_squares(tape.sub(tape.stop_gradient(enc.quantized), enc.soft_fillers));
  Tape::Var commitment =
      tape.sum_squares(tape.sub(enc.quantized, tape.stop_gradient(enc.soft_fillers)));
  Tape::Var vq = tape.scale(tape.weighted_sum({codebook_fit, commitment}, {1.0, config_.beta}),
                            1.0 / (nr * batch));

  out.form_penalty = tape.scalar(form);
  out.recon = tape.scalar(recon);
  out.vq = tape.scalar(vq);
  terms.insert(terms.end(), {form, recon, vq});
  weights.insert(weights.end(), {config_.form_penalty_weight, 1.0, 1.0});
  out.matchings.clear();
  for (const auto& m : enc.matching) out.matchings.push_back(BindingSet{m});
}

TrainStepOutput SoftTprAutoencoder::loss_unsupervised(Tape& tape, const Matrix& x) {
  TrainStepOutput out;
  std::vector<Tape::Var> terms;
  std::vector<double> weights;
  const Encoded enc = encode_on_tape(tape, x);
  unsupervised_terms(tape, enc, x, out, terms, weights);
  out.loss = tape.weighted_sum(terms, weights);
  out.total = tape.scalar(out.loss);
  return out;
}

TrainStepOutput SoftTprAutoencoder::loss_weakly_supervised(Tape& tape, const Matrix& x,
                                                           const Matrix& x_prime,
                                                           const std::vector<std::size_t>& differing_role) {
  const std::size_t batch = x.rows();
  if (x_prime.rows() != batch || differing_role.size() != batch) {
    throw std::invalid_argument("loss_weakly_supervised: x, x' and roles must have equal length");
  }
  for (std::size_t r : differing_role) {
    if (r >= config_.n_r) {
      throw std::invalid_argument("loss_weakly_supervised: differing role " + std::to_string(r) +
                                  " out of range");
    }
  }

  TrainStepOutput out;
  std::vector<Tape::Var> terms;
  std::vector<double> weights;
  const Encoded enc = encode_on_tape(tape, x);
  const Encoded enc_p = encode_on_tape(tape, x_prime);
  unsupervised_terms(tape, enc, x, out, terms, weights);

  const std::size_t df = config_.d_f;
  const std::size_t nr = config_.n_r;
  const double b = static_cast<double>(batch);

  // Swapped TPRs. The quantized forward value comes from the swapped matching;
  // the gradient follows the soft counterpart z + (f̃' - f̃)_i ⊗ r_i, which
  // sends role i's share to the partner's encoder output.
  std::vector<std::vector<std::size_t>> swapped = enc.matching;
  std::vector<std::vector<std::size_t>> swapped_p = enc_p.matching;
  Matrix role_mask(batch, nr * df);
  for (std::size_t r = 0; r < batch; ++r) {
    const std::size_t i = differing_role[r];
    swapped[r][i] = enc_p.matching[r][i];
    swapped_p[r][i] = enc.matching[r][i];
    for (std::size_t a = 0; a < df; ++a) role_mask(r, i * df + a) = 1.0;
  }
  const Matrix& book = codebook_.value;
  auto compose_rows = [&](const std::vector<std::vector<std::size_t>>& m) {
    Matrix q(batch, nr * df);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t i = 0; i < nr; ++i)
        for (std::size_t a = 0; a < df; ++a) q(r, i * df + a) = book(a, m[r][i]);
    return softtpr::matmul(q, compose_matrix_);
  };
  Tape::Var mask = tape.constant(role_mask);
  Tape::Var compose = tape.constant(compose_matrix_);
  Tape::Var delta = tape.matmul(tape.hadamard(tape.sub(enc_p.soft_fillers, enc.soft_fillers), mask), compose);
  Tape::Var soft_swapped = tape.add(enc.z, delta);      // pairs with ψ_s(x)
  Tape::Var soft_swapped_p = tape.sub(enc_p.z, delta);  // pairs with ψ_s(x')
  Tape::Var psi_s = tape.straight_through(compose_rows(swapped), soft_swapped);
  Tape::Var psi_s_p = tape.straight_through(compose_rows(swapped_p), soft_swapped_p);

  // D(ψ_s(x')) reconstructs x and D(ψ_s(x)) reconstructs x'.
  Tape::Var rec_x = tape.sum_squares(tape.sub(decode_on_tape(tape, psi_s_p), tape.constant(x)));
  Tape::Var rec_xp = tape.sum_squares(tape.sub(decode_on_tape(tape, psi_s), tape.constant(x_prime)));
  Tape::Var swap_recon = tape.weighted_sum({rec_x, rec_xp}, {0.5 / b, 0.5 / b});

  // Δq over quantized fillers, straight-through to the soft fillers.
  Tape::Var q = tape.straight_through(tape.value(enc.quantized), enc.soft_fillers);
  Tape::Var q_p = tape.straight_through(tape.value(enc_p.quantized), enc_p.soft_fillers);
  Tape::Var dq = tape.block_norms(tape.sub(q, q_p), df);
  Tape::Var ce = tape.softmax_cross_entropy(dq, differing_role);

  out.swap_recon = tape.scalar(swap_recon);
  out.ce_dq = tape.scalar(ce);
  terms.insert(terms.end(), {swap_recon, ce});
  weights.insert(weights.end(), {config_.lambda1, config_.lambda2});
  out.loss = tape.weighted_sum(terms, weights);
  out.total = tape.scalar(out.loss);
  return out;
}

void train(SoftTprAutoencoder& model, const PairSource& source, const TrainOptions& options,
           SeededRng& rng, const TrainCallbacks& callbacks) {
  std::vector<std::uint64_t> schedule = options.checkpoint_schedule;
  std::sort(schedule.begin(), schedule.end());
  schedule.erase(std::unique(schedule.begin(), schedule.end()), schedule.end());
  auto fire = [&](std::uint64_t it) {
    if (callbacks.on_checkpoint && std::binary_search(schedule.begin(), schedule.end(), it)) {
      callbacks.on_checkpoint(it, model, rng);
    }
  };
  fire(0);
  auto params = model.parameters();
  for (std::uint64_t it = 1; it <= options.iterations; ++it) {
    const std::uint64_t batch_seed = rng.fork_seed();
    SeededRng batch_rng(batch_seed);
    const PairBatch batch = source(options.batch_size, batch_rng);
    Tape tape;
    TrainStepOutput out = model.loss_weakly_supervised(tape, batch.x, batch.x_prime, batch.differing);
    if (!std::isfinite(out.total)) {
      throw NumericAbort("non-finite loss at iteration " + std::to_string(it) + " (batch seed " +
                             std::to_string(batch_seed) + ")",
                         batch_seed);
    }
    tape.backward(out.loss);
    adam_step(params, options.adam);
    if (callbacks.on_step) callbacks.on_step(it, out);
    fire(it);
  }
}

}  // namespace softtpr
