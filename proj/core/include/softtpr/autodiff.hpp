// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over dense matrices.
//
// A Tape records one forward pass. Every value is a Matrix; scalars are 1x1.
// Batches are rows. backward() walks the nodes in reverse insertion order and
// accumulates into the Parameters that were bound as leaves.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "softtpr/linalg.hpp"
#include "softtpr/rng.hpp"

namespace softtpr {

/// A trainable tensor with its gradient accumulator and Adam moments.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix first_moment;
  Matrix second_moment;
  std::uint64_t step = 0;

  Parameter() = default;
  Parameter(std::string n, Matrix v);

  void zero_grad();
  friend bool operator==(const Parameter&, const Parameter&) = default;
};

/// Records the non-differentiable choices made during one forward pass so the
/// same pass can be replayed with those choices pinned.
///
/// In replay, stop-gradient outputs become the recorded constants, a
/// straight-through node becomes `input + (substitute - input)` evaluated at the
/// recorded point, ReLU masks and argmin indices are reused, and block norms that
/// were exactly zero stay zero. The replayed pass is then a smooth function of
/// the parameters near the recorded point whose gradient is the one backward()
/// computes, which is what finite differences need.
class FreezeLog {
 public:
  enum class Mode { kRecord, kReplay };

  explicit FreezeLog(Mode mode = Mode::kRecord) : mode_(mode) {}

  Mode mode() const noexcept { return mode_; }
  /// Switches to replay and rewinds all cursors.
  void start_replay();

  /// Count of ReLU inputs that were exactly zero while recording.
  std::size_t relu_zero_hits() const noexcept { return relu_zero_hits_; }

 private:
  friend class Tape;

  Mode mode_;
  std::vector<Matrix> constants_;
  std::vector<std::vector<std::uint8_t>> masks_;
  std::vector<std::vector<std::size_t>> indices_;
  std::size_t constant_cursor_ = 0;
  std::size_t mask_cursor_ = 0;
  std::size_t index_cursor_ = 0;
  std::size_t relu_zero_hits_ = 0;
};

class Tape {
 public:
  struct Var {
    std::size_t id;
  };

  explicit Tape(FreezeLog* freeze = nullptr) : freeze_(freeze) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var parameter(Parameter& p);
  Var constant(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double s);
  /// Elementwise product.
  Var hadamard(Var a, Var b);
  /// x (B x n) plus a 1 x n bias broadcast over rows.
  Var add_row_bias(Var x, Var bias);
  Var relu(Var x);

  /// Sum of squares of all entries, as a 1x1 scalar.
  Var sum_squares(Var x);
  /// Weighted sum of 1x1 scalars.
  Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights);

  /// Euclidean norm of each contiguous `block`-wide slice of each row:
  /// (B x k*block) -> (B x k). The derivative at a zero block is taken as zero.
  Var block_norms(Var x, std::size_t block);

  /// Mean over rows of the softmax cross-entropy between logits and class labels.
  Var softmax_cross_entropy(Var logits, const std::vector<std::size_t>& labels);

  /// Gathers columns of a (d x n) matrix: row b of the result concatenates
  /// columns index[b][0], index[b][1], ... Gradient scatters back.
  Var gather_columns(Var table, const std::vector<std::vector<std::size_t>>& index);

  /// Forward identity, backward zero.
  Var stop_gradient(Var x);

  /// Forward returns `substitute`; backward passes the incoming gradient to x unchanged.
  Var straight_through(const Matrix& substitute, Var x);

  /// Runs `decide` and returns its indices, or replays the recorded ones.
  std::vector<std::size_t> frozen_indices(const std::function<std::vector<std::size_t>()>& decide);

  /// Reverse sweep from a 1x1 loss; accumulates into bound Parameters.
  /// Throws std::invalid_argument for a non-scalar loss.
  void backward(Var loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void()> backward;
  };

  Var push(Matrix value, bool requires_grad, std::function<void()> backward = {});
  Matrix& grad_of(std::size_t id);
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  bool recording() const { return freeze_ && freeze_->mode() == FreezeLog::Mode::kRecord; }
  bool replaying() const { return freeze_ && freeze_->mode() == FreezeLog::Mode::kReplay; }
  Matrix next_constant();
  std::vector<std::uint8_t> next_mask();

  std::vector<Node> nodes_;
  FreezeLog* freeze_;
};

/// Adam hyperparameters. Defaults are the standard (0.9, 0.999, 1e-8) at lr 1e-4.
struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update for each parameter, then zeroes the gradients.
void adam_step(std::span<Parameter* const> params, const AdamOptions& options = {});

struct GradcheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradcheckReport {
  bool passed = true;
  std::size_t checked = 0;
  std::size_t relu_zero_hits = 0;
  GradcheckEntry worst;
  std::vector<GradcheckEntry> failures;
};

struct GradcheckOptions {
  double h = 1e-4;
  double tolerance = 1e-4;
  std::size_t samples_per_parameter = 64;
  /// |a - n| / max(|a|, |n|, floor): keeps near-zero gradients from dividing by ~0.
  double denominator_floor = 1e-6;
  std::uint64_t seed = 0;
};

/// Builds the loss on the given tape; must be a deterministic function of the parameters.
using LossBuilder = std::function<Tape::Var(Tape&)>;

/// Compares backward() against central differences of the replayed pass on a
/// random subsample of coordinates of every parameter (all coordinates when a
/// parameter is smaller than the sample size). Returns a report; never throws on
/// a mismatch.
GradcheckReport gradcheck(const LossBuilder& build, std::span<Parameter* const> params,
                          const GradcheckOptions& options = {});

}  // namespace softtpr
