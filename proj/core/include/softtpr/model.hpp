// SPDX-License-Identifier: Apache-2.0
//
// Soft TPR autoencoder: MLP encoder -> z -> (unbind, quantize, rebuild) ->
// MLP decoder, trained with the form penalty, reconstruction, VQ, swapped
// reconstruction and Δq cross-entropy terms.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "softtpr/autodiff.hpp"
#include "softtpr/linalg.hpp"
#include "softtpr/mlp.hpp"
#include "softtpr/soft_tpr.hpp"
#include "softtpr/tpr.hpp"

namespace softtpr {

struct ModelConfig {
  std::size_t obs_dim = 32;
  std::size_t d_f = 8;
  std::size_t d_r = 4;
  std::size_t n_f = 16;
  std::size_t n_r = 3;
  std::vector<std::size_t> encoder_widths{64, 64};
  std::vector<std::size_t> decoder_widths{64, 64};
  double beta = 0.5;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double form_penalty_weight = 1.0;
  RoleMode role_mode = RoleMode::kSemiOrthogonal;
  double codebook_init_scale = 1.0;
  /// Test double: skip the decoder MLP so x̂ is the decoder input. Requires obs_dim == d_f * d_r.
  bool identity_decoder = false;
  std::uint64_t seed = 0;

  std::size_t tpr_dim() const noexcept { return d_f * d_r; }
  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Loss components of one step. `total` is the weighted sum of the others.
struct TrainStepOutput {
  double total = 0.0;
  double form_penalty = 0.0;
  double recon = 0.0;
  double vq = 0.0;
  double swap_recon = 0.0;
  double ce_dq = 0.0;
  std::vector<BindingSet> matchings;
  Tape::Var loss{0};
};

class SoftTprAutoencoder {
 public:
  explicit SoftTprAutoencoder(const ModelConfig& config);
  /// Reassembles a model from stored parts (checkpoint load).
  SoftTprAutoencoder(const ModelConfig& config, RoleSpace roles, Parameter codebook, Mlp encoder,
                     Mlp decoder);

  const ModelConfig& config() const noexcept { return config_; }
  const RoleSpace& roles() const noexcept { return roles_; }
  FillerCodebook codebook() const { return FillerCodebook(codebook_.value); }
  const Parameter& codebook_parameter() const noexcept { return codebook_; }
  const Mlp& encoder() const noexcept { return encoder_; }
  const Mlp& decoder() const noexcept { return decoder_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  /// Encoder output z for each row of x.
  Matrix encode(const Matrix& x) const;
  Matrix decode(const Matrix& tpr_rows) const;

  struct ForwardResult {
    Matrix z;
    std::vector<QuantizationResult> quantized;
    Matrix reconstruction;
  };
  /// Inference pass: z = E(x), ψ* = quantize_greedy(z), x̂ = D(ψ*).
  ForwardResult forward(const Matrix& x) const;

  /// L_u on a batch (rows of x), averaged over rows.
  TrainStepOutput loss_unsupervised(Tape& tape, const Matrix& x);

  /// L_u(x) + λ1·swapped reconstruction + λ2·CE(Δq, l) on a batch of match
  /// pairs; differing_role[b] is the role that differs within pair b.
  TrainStepOutput loss_weakly_supervised(Tape& tape, const Matrix& x, const Matrix& x_prime,
                                         const std::vector<std::size_t>& differing_role);

  friend bool operator==(const SoftTprAutoencoder&, const SoftTprAutoencoder&) = default;

 private:
  struct Encoded {
    Tape::Var z;
    Tape::Var soft_fillers;   // B x (N_R·D_F)
    Tape::Var quantized;      // gathered codebook columns, B x (N_R·D_F)
    Tape::Var tpr;            // ψ*, differentiable wrt the codebook
    std::vector<std::vector<std::size_t>> matching;
  };

  void build_constants();
  Encoded encode_on_tape(Tape& tape, const Matrix& x);
  Tape::Var decode_on_tape(Tape& tape, Tape::Var input);
  /// Form penalty, reconstruction and VQ terms on an encoded batch.
  void unsupervised_terms(Tape& tape, const Encoded& enc, const Matrix& x, TrainStepOutput& out,
                          std::vector<Tape::Var>& terms, std::vector<double>& weights);

  ModelConfig config_;
  RoleSpace roles_;
  Parameter codebook_;
  Mlp encoder_;
  Mlp decoder_;
  Matrix unbind_matrix_;   // (D_F·D_R) x (N_R·D_F)
  Matrix compose_matrix_;  // (N_R·D_F) x (D_F·D_R)
};

struct TrainOptions {
  std::uint64_t iterations = 5000;
  std::size_t batch_size = 32;
  AdamOptions adam{};
  std::vector<std::uint64_t> checkpoint_schedule;
};

/// Supplies a batch of match pairs: x rows, x' rows, differing factor per pair.
struct PairBatch {
  Matrix x;
  Matrix x_prime;
  std::vector<std::size_t> differing;
};
using PairSource = std::function<PairBatch(std::size_t batch_size, SeededRng& rng)>;

struct TrainCallbacks {
  std::function<void(std::uint64_t iteration, const SoftTprAutoencoder&, const SeededRng&)>
      on_checkpoint;
  std::function<void(std::uint64_t iteration, const TrainStepOutput&)> on_step;
};

/// Runs `iterations` Adam steps on the weakly supervised loss. Checkpoints fire
/// at every scheduled iteration ≤ iterations (iteration 0 = initialization).
/// Throws NumericAbort on a non-finite loss, carrying the batch seed.
void train(SoftTprAutoencoder& model, const PairSource& source, const TrainOptions& options,
           SeededRng& rng, const TrainCallbacks& callbacks = {});

}  // namespace softtpr
