// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "softtpr/autodiff.hpp"
#include "softtpr/linalg.hpp"
#include "softtpr/rng.hpp"

namespace softtpr {

/// Fully connected ReLU network with a linear output layer. Weights are stored
/// input x output so a batch (rows) multiplies on the left.
class Mlp {
 public:
  Mlp() = default;
  /// widths = {in, hidden..., out}. He-normal initialization for every layer.
  Mlp(std::string name, const std::vector<std::size_t>& widths, SeededRng& rng);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t layer_count() const noexcept { return weights_.size(); }

  Tape::Var forward(Tape& tape, Tape::Var x);
  /// Same arithmetic as forward(), without recording.
  Matrix apply(const Matrix& x) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
};

}  // namespace softtpr
