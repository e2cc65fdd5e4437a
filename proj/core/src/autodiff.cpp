// SPDX-License-Identifier: Apache-2.0
#include "softtpr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace softtpr {

namespace {

void require_shape(const Matrix& a, std::size_t rows, std::size_t cols, const char* op) {
  if (a.rows() != rows || a.cols() != cols) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " + std::to_string(rows) +
                                "x" + std::to_string(cols) + ")");
  }
}

// out += a * bᵀ
void add_matmul_bt(Matrix& out, const Matrix& a, const Matrix& b) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto a_row = a.row(i);
    auto out_row = out.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) out_row[j] += dot(a_row, b.row(j));
  }
}

// out += aᵀ * b
void add_matmul_at(Matrix& out, const Matrix& a, const Matrix& b) {
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto a_row = a.row(k);
    auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
}

}  // namespace

Parameter::Parameter(std::string n, Matrix v)
    : name(std::move(n)),
      value(std::move(v)),
      grad(value.rows(), value.cols()),
      first_moment(value.rows(), value.cols()),
      second_moment(value.rows(), value.cols()) {}

void Parameter::zero_grad() { std::fill(grad.flat().begin(), grad.flat().end(), 0.0); }

void FreezeLog::start_replay() {
  mode_ = Mode::kReplay;
  constant_cursor_ = 0;
  mask_cursor_ = 0;
  index_cursor_ = 0;
}

Tape::Var Tape::push(Matrix value, bool requires_grad, std::function<void()> backward) {
  nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad, nullptr, std::move(backward)});
  return Var{nodes_.size() - 1};
}

Matrix& Tape::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.rows() != n.value.rows()) {
    n.grad = Matrix(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

Matrix Tape::next_constant() {
  if (freeze_->constant_cursor_ >= freeze_->constants_.size()) {
    throw std::logic_error("FreezeLog: replay requested more constants than were recorded");
  }
  return freeze_->constants_[freeze_->constant_cursor_++];
}

std::vector<std::uint8_t> Tape::next_mask() {
  if (freeze_->mask_cursor_ >= freeze_->masks_.size()) {
    throw std::logic_error("FreezeLog: replay requested more masks than were recorded");
  }
  return freeze_->masks_[freeze_->mask_cursor_++];
}

Tape::Var Tape::parameter(Parameter& p) {
  Var v = push(p.value, true);
  nodes_[v.id].param = &p;
  return v;
}

Tape::Var Tape::constant(Matrix value) { return push(std::move(value), false); }

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.rows() != 1 || m.cols() != 1) throw std::invalid_argument("Tape::scalar: not a 1x1 node");
  return m(0, 0);
}

Tape::Var Tape::matmul(Var a, Var b) {
  Var out = push(softtpr::matmul(value(a), value(b)), needs(a) || needs(b));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, b, out] {
      const Matrix& g = nodes_[out.id].grad;
      if (needs(a)) add_matmul_bt(grad_of(a.id), g, nodes_[b.id].value);
      if (needs(b)) add_matmul_at(grad_of(b.id), nodes_[a.id].value, g);
    };
  }
  return out;
}

Tape::Var Tape::add(Var a, Var b) {
  require_shape(value(b), value(a).rows(), value(a).cols(), "Tape::add");
  Matrix v = value(a);
  v += value(b);
  Var out = push(std::move(v), needs(a) || needs(b));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, b, out] {
      const Matrix& g = nodes_[out.id].grad;
      if (needs(a)) grad_of(a.id) += g;
      if (needs(b)) grad_of(b.id) += g;
    };
  }
  return out;
}

Tape::Var Tape::sub(Var a, Var b) {
  require_shape(value(b), value(a).rows(), value(a).cols(), "Tape::sub");
  Matrix v = value(a);
  v -= value(b);
  Var out = push(std::move(v), needs(a) || needs(b));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, b, out] {
      const Matrix& g = nodes_[out.id].grad;
      if (needs(a)) grad_of(a.id) += g;
      if (needs(b)) grad_of(b.id) -= g;
    };
  }
  return out;
}

Tape::Var Tape::scale(Var a, double s) {
  Matrix v = value(a);
  v *= s;
  Var out = push(std::move(v), needs(a));
  if (needs(a)) {
    nodes_[out.id].backward = [this, a, out, s] {
      Matrix g = nodes_[out.id].grad;
      g *= s;
      grad_of(a.id) += g;
    };
  }
  return out;
}

Tape::Var Tape::hadamard(Var a, Var b) {
  require_shape(value(b), value(a).rows(), value(a).cols(), "Tape::hadamard");
  Matrix v = value(a);
  auto bv = value(b).flat();
  auto vf = v.flat();
  for (std::size_t i = 0; i < vf.size(); ++i) vf[i] *= bv[i];
  Var out = push(std::move(v), needs(a) || needs(b));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, b, out] {
      auto g = nodes_[out.id].grad.flat();
      if (needs(a)) {
        auto ga = grad_of(a.id).flat();
        auto bv = nodes_[b.id].value.flat();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (needs(b)) {
        auto gb = grad_of(b.id).flat();
        auto av = nodes_[a.id].value.flat();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    };
  }
  return out;
}

Tape::Var Tape::add_row_bias(Var x, Var bias) {
  const Matrix& xv = value(x);
  require_shape(value(bias), 1, xv.cols(), "Tape::add_row_bias");
  Matrix v = xv;
  auto bv = value(bias).row(0);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    auto row = v.row(r);
    for (std::size_t c = 0; c < v.cols(); ++c) row[c] += bv[c];
  }
  Var out = push(std::move(v), needs(x) || needs(bias));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, x, bias, out] {
      const Matrix& g = nodes_[out.id].grad;
      if (needs(x)) grad_of(x.id) += g;
      if (needs(bias)) {
        auto gb = grad_of(bias.id).row(0);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto row = g.row(r);
          for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += row[c];
        }
      }
    };
  }
  return out;
}

Tape::Var Tape::relu(Var x) {
  const Matrix& xv = value(x);
  std::vector<std::uint8_t> mask(xv.size());
  if (replaying()) {
    mask = next_mask();
  } else {
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      mask[i] = xv.flat()[i] > 0.0 ? 1 : 0;
      zeros += xv.flat()[i] == 0.0 ? 1 : 0;
    }
    if (recording()) {
      freeze_->masks_.push_back(mask);
      freeze_->relu_zero_hits_ += zeros;
    }
  }
  Matrix v(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < mask.size(); ++i) v.flat()[i] = mask[i] ? xv.flat()[i] : 0.0;
  Var out = push(std::move(v), needs(x));
  if (needs(x)) {
    nodes_[out.id].backward = [this, x, out, mask = std::move(mask)] {
      auto g = nodes_[out.id].grad.flat();
      auto gx = grad_of(x.id).flat();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (mask[i]) gx[i] += g[i];
    };
  }
  return out;
}

Tape::Var Tape::sum_squares(Var x) {
  double s = 0.0;
  for (double v : value(x).flat()) s += v * v;
  Var out = push(Matrix(1, 1, s), needs(x));
  if (needs(x)) {
    nodes_[out.id].backward = [this, x, out] {
      const double g = nodes_[out.id].grad(0, 0);
      auto gx = grad_of(x.id).flat();
      auto xv = nodes_[x.id].value.flat();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * g * xv[i];
    };
  }
  return out;
}

Tape::Var Tape::weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights) {
  if (scalars.size() != weights.size()) {
    throw std::invalid_argument("Tape::weighted_sum: weight count mismatch");
  }
  double s = 0.0;
  bool rg = false;
  for (std::size_t k = 0; k < scalars.size(); ++k) {
    s += weights[k] * scalar(scalars[k]);
    rg = rg || needs(scalars[k]);
  }
  Var out = push(Matrix(1, 1, s), rg);
  if (rg) {
    nodes_[out.id].backward = [this, scalars, weights, out] {
      const double g = nodes_[out.id].grad(0, 0);
      for (std::size_t k = 0; k < scalars.size(); ++k)
        if (needs(scalars[k])) grad_of(scalars[k].id)(0, 0) += weights[k] * g;
    };
  }
  return out;
}

Tape::Var Tape::block_norms(Var x, std::size_t block) {
  const Matrix& xv = value(x);
  if (block == 0 || xv.cols() % block != 0) {
    throw std::invalid_argument("Tape::block_norms: width not a multiple of block");
  }
  const std::size_t k = xv.cols() / block;
  Matrix v(xv.rows(), k);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t b = 0; b < k; ++b) v(r, b) = norm2(xv.row(r).subspan(b * block, block));

  std::vector<std::uint8_t> pinned(v.size(), 0);
  if (replaying()) {
    pinned = next_mask();
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) pinned[i] = v.flat()[i] == 0.0 ? 1 : 0;
    if (recording()) freeze_->masks_.push_back(pinned);
  }
  for (std::size_t i = 0; i < v.size(); ++i)
    if (pinned[i]) v.flat()[i] = 0.0;

  Var out = push(std::move(v), needs(x));
  if (needs(x)) {
    nodes_[out.id].backward = [this, x, out, block, pinned = std::move(pinned)] {
      const Matrix& g = nodes_[out.id].grad;
      const Matrix& y = nodes_[out.id].value;
      const Matrix& xv = nodes_[x.id].value;
      Matrix& gx = grad_of(x.id);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t b = 0; b < g.cols(); ++b) {
          const double n = y(r, b);
          if (pinned[r * g.cols() + b] || n == 0.0) continue;
          const double s = g(r, b) / n;
          for (std::size_t c = b * block; c < (b + 1) * block; ++c) gx(r, c) += s * xv(r, c);
        }
      }
    };
  }
  return out;
}

Tape::Var Tape::softmax_cross_entropy(Var logits, const std::vector<std::size_t>& labels) {
  const Matrix& lv = value(logits);
  if (labels.size() != lv.rows()) {
    throw std::invalid_argument("Tape::softmax_cross_entropy: one label per row required");
  }
  Matrix probs(lv.rows(), lv.cols());
  double loss = 0.0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    if (labels[r] >= lv.cols()) throw std::invalid_argument("softmax_cross_entropy: label out of range");
    auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) z += std::exp(row[c] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t c = 0; c < row.size(); ++c) probs(r, c) = std::exp(row[c] - log_z);
    loss += log_z - row[labels[r]];
  }
  const double n = static_cast<double>(lv.rows());
  Var out = push(Matrix(1, 1, loss / n), needs(logits));
  if (needs(logits)) {
    nodes_[out.id].backward = [this, logits, out, labels, probs = std::move(probs), n] {
      const double g = nodes_[out.id].grad(0, 0);
      Matrix& gl = grad_of(logits.id);
      for (std::size_t r = 0; r < probs.rows(); ++r)
        for (std::size_t c = 0; c < probs.cols(); ++c)
          gl(r, c) += g * (probs(r, c) - (c == labels[r] ? 1.0 : 0.0)) / n;
    };
  }
  return out;
}

Tape::Var Tape::gather_columns(Var table, const std::vector<std::vector<std::size_t>>& index) {
  const Matrix& t = value(table);
  const std::size_t k = index.empty() ? 0 : index[0].size();
  Matrix v(index.size(), k * t.rows());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r].size() != k) throw std::invalid_argument("gather_columns: ragged index");
    for (std::size_t b = 0; b < k; ++b) {
      if (index[r][b] >= t.cols()) throw std::invalid_argument("gather_columns: index out of range");
      for (std::size_t a = 0; a < t.rows(); ++a) v(r, b * t.rows() + a) = t(a, index[r][b]);
    }
  }
  Var out = push(std::move(v), needs(table));
  if (needs(table)) {
    nodes_[out.id].backward = [this, table, out, index, k] {
      const Matrix& g = nodes_[out.id].grad;
      Matrix& gt = grad_of(table.id);
      for (std::size_t r = 0; r < index.size(); ++r)
        for (std::size_t b = 0; b < k; ++b)
          for (std::size_t a = 0; a < gt.rows(); ++a) gt(a, index[r][b]) += g(r, b * gt.rows() + a);
    };
  }
  return out;
}

Tape::Var Tape::stop_gradient(Var x) {
  if (replaying()) return constant(next_constant());
  if (recording()) freeze_->constants_.push_back(value(x));
  return constant(value(x));
}

Tape::Var Tape::straight_through(const Matrix& substitute, Var x) {
  require_shape(substitute, value(x).rows(), value(x).cols(), "Tape::straight_through");
  if (replaying()) return add(x, constant(next_constant()));
  if (recording()) {
    Matrix offset = substitute;
    offset -= value(x);
    freeze_->constants_.push_back(std::move(offset));
  }
  Var out = push(substitute, needs(x));
  if (needs(x)) {
    nodes_[out.id].backward = [this, x, out] { grad_of(x.id) += nodes_[out.id].grad; };
  }
  return out;
}

std::vector<std::size_t> Tape::frozen_indices(
    const std::function<std::vector<std::size_t>()>& decide) {
  if (replaying()) {
    if (freeze_->index_cursor_ >= freeze_->indices_.size()) {
      throw std::logic_error("FreezeLog: replay requested more index sets than were recorded");
    }
    return freeze_->indices_[freeze_->index_cursor_++];
  }
  auto idx = decide();
  if (recording()) freeze_->indices_.push_back(idx);
  return idx;
}

void Tape::backward(Var loss) {
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be a 1x1 scalar");
  }
  for (auto& n : nodes_) n.grad = Matrix{};
  grad_of(loss.id)(0, 0) = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward();
    if (n.param) n.param->grad += n.grad;
  }
}

void adam_step(std::span<Parameter* const> params, const AdamOptions& o) {
  for (Parameter* p : params) {
    p->step += 1;
    const double t = static_cast<double>(p->step);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);
    auto w = p->value.flat();
    auto g = p->grad.flat();
    auto m = p->first_moment.flat();
    auto v = p->second_moment.flat();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
    p->zero_grad();
  }
}

GradcheckReport gradcheck(const LossBuilder& build, std::span<Parameter* const> params,
                          const GradcheckOptions& options) {
  GradcheckReport report;
  for (Parameter* p : params) p->zero_grad();

  FreezeLog log(FreezeLog::Mode::kRecord);
  double base_loss = 0.0;
  {
    Tape tape(&log);
    Tape::Var loss = build(tape);
    base_loss = tape.scalar(loss);
    tape.backward(loss);
  }
  report.relu_zero_hits = log.relu_zero_hits();
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) {
    analytic.push_back(p->grad);
    p->zero_grad();
  }

  auto replay = [&] {
    log.start_replay();
    Tape tape(&log);
    return tape.scalar(build(tape));
  };
  // Straight-through points replay as x + (s - x), equal to s up to rounding.
  if (std::abs(replay() - base_loss) > 1e-10 * std::max(1.0, std::abs(base_loss))) {
    throw std::logic_error("gradcheck: replayed loss differs from the recorded loss");
  }

  SeededRng rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    const std::size_t n = p.value.size();
    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    const std::size_t take = std::min(n, options.samples_per_parameter);
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(coords[i], coords[i + rng.below(n - i)]);
    }
    coords.resize(take);
    std::sort(coords.begin(), coords.end());

    for (std::size_t c : coords) {
      double& w = p.value.flat()[c];
      const double saved = w;
      w = saved + options.h;
      const double f_plus = replay();
      w = saved - options.h;
      const double f_minus = replay();
      w = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * options.h);
      const double a = analytic[pi].flat()[c];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      GradcheckEntry e{p.name, c, a, numeric, std::abs(a - numeric) / denom};
      ++report.checked;
      if (e.relative_error > report.worst.relative_error || report.checked == 1) report.worst = e;
      if (e.relative_error >= options.tolerance) {
        report.passed = false;
        report.failures.push_back(e);
      }
    }
  }
  return report;
}

}  // namespace softtpr
