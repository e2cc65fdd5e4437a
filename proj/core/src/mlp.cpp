// SPDX-License-Identifier: Apache-2.0
#include "softtpr/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace softtpr {

Mlp::Mlp(std::string name, const std::vector<std::size_t>& widths, SeededRng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  for (std::size_t w : widths)
    if (w == 0) throw std::invalid_argument("Mlp: widths must be positive");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Matrix w(widths[l], widths[l + 1]);
    const double sd = std::sqrt(2.0 / static_cast<double>(widths[l]));
    for (auto& v : w.flat()) v = sd * rng.normal();
    weights_.emplace_back(name + ".w" + std::to_string(l), std::move(w));
    biases_.emplace_back(name + ".b" + std::to_string(l), Matrix(1, widths[l + 1]));
  }
}

std::size_t Mlp::input_dim() const { return weights_.empty() ? 0 : weights_.front().value.rows(); }
std::size_t Mlp::output_dim() const { return weights_.empty() ? 0 : weights_.back().value.cols(); }

Tape::Var Mlp::forward(Tape& tape, Tape::Var x) {
  Tape::Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = tape.add_row_bias(tape.matmul(h, tape.parameter(weights_[l])), tape.parameter(biases_[l]));
    if (l + 1 < weights_.size()) h = tape.relu(h);
  }
  return h;
}

Matrix Mlp::apply(const Matrix& x) const {
  Matrix h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = matmul(h, weights_[l].value);
    auto b = biases_[l].value.row(0);
    const bool hidden = l + 1 < weights_.size();
    for (std::size_t r = 0; r < h.rows(); ++r) {
      auto row = h.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        row[c] += b[c];
        if (hidden && !(row[c] > 0.0)) row[c] = 0.0;
      }
    }
  }
  return h;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

}  // namespace softtpr
