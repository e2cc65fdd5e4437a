// SPDX-License-Identifier: Apache-2.0
#include "softtpr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace softtpr {

namespace {

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double one_hot_variance(const IndexRepresentation& codes, std::size_t dim) {
  std::map<std::size_t, double> counts;
  for (const auto& c : codes) counts[c[dim]] += 1.0;
  const double n = static_cast<double>(codes.size());
  double s = 0.0;
  for (const auto& [k, c] : counts) s += (c / n) * (c / n);
  return 1.0 - s;
}

}  // namespace

IndexRepresentation to_index_repr(const SoftTprAutoencoder& model, const Matrix& observations) {
  const auto fwd = model.forward(observations);
  IndexRepresentation out;
  out.reserve(fwd.quantized.size());
  for (const auto& q : fwd.quantized) out.push_back(q.tpr.matching);
  return out;
}

FactorVaeResult factorvae_score(std::span<const FactorVaeBatch> batches, std::size_t n_factors) {
  if (batches.size() < 2) throw std::invalid_argument("factorvae_score: need at least 2 batches");
  if (n_factors == 0) throw std::invalid_argument("factorvae_score: n_factors must be positive");
  const std::size_t dims = batches[0].codes.empty() ? 0 : batches[0].codes[0].size();
  FactorVaeResult res;
  res.votes.assign(dims, std::vector<std::size_t>(n_factors, 0));

  std::vector<std::size_t> predicted_dim(batches.size());
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& batch = batches[b];
    if (batch.codes.size() < 2) throw std::invalid_argument("factorvae_score: need >= 2 samples per batch");
    if (batch.fixed_factor >= n_factors) throw std::invalid_argument("factorvae_score: factor out of range");
    std::size_t best = 0;
    double best_v = one_hot_variance(batch.codes, 0);
    bool all_zero = best_v == 0.0;
    for (std::size_t d = 1; d < dims; ++d) {
      const double v = one_hot_variance(batch.codes, d);
      all_zero = all_zero && v == 0.0;
      if (v < best_v) {
        best_v = v;
        best = d;
      }
    }
    if (all_zero) ++res.degenerate_batches;
    predicted_dim[b] = best;
  }

  const std::size_t split = (batches.size() + 1) / 2;
  for (std::size_t b = 0; b < split; ++b) ++res.votes[predicted_dim[b]][batches[b].fixed_factor];
  std::vector<std::size_t> dim_to_factor(dims, 0);
  for (std::size_t d = 0; d < dims; ++d) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < n_factors; ++k)
      if (res.votes[d][k] > res.votes[d][best]) best = k;
    dim_to_factor[d] = best;
  }
  std::size_t correct = 0;
  for (std::size_t b = split; b < batches.size(); ++b)
    correct += dim_to_factor[predicted_dim[b]] == batches[b].fixed_factor ? 1 : 0;
  res.train_batches = split;
  res.test_batches = batches.size() - split;
  res.score = static_cast<double>(correct) / static_cast<double>(res.test_batches);
  return res;
}

DciResult dci_score(const Matrix& codes, const Matrix& factors, FeatureKind kind,
                    const BoostingOptions& options) {
  if (codes.rows() != factors.rows()) throw std::invalid_argument("dci_score: row count mismatch");
  if (codes.rows() < 100) throw std::invalid_argument("dci_score: need at least 100 samples");
  const std::size_t n_codes = codes.cols();
  const std::size_t n_factors = factors.cols();
  DciResult res;
  res.importance = Matrix(n_codes, n_factors);
  for (std::size_t k = 0; k < n_factors; ++k) {
    const Vector target = factors.column(k);
    const auto trees = BoostedTrees::fit(codes, target.span(), kind, options);
    const auto imp = trees.normalized_importances();
    for (std::size_t i = 0; i < n_codes; ++i) res.importance(i, k) = imp[i];
  }

  double total = 0.0;
  for (double v : res.importance.flat()) total += v;
  res.disentanglement.assign(n_codes, 0.0);
  res.weight.assign(n_codes, 0.0);
  for (std::size_t i = 0; i < n_codes; ++i) {
    double row = 0.0;
    for (std::size_t k = 0; k < n_factors; ++k) row += res.importance(i, k);
    if (row <= 0.0) continue;
    double h = 0.0;
    for (std::size_t k = 0; k < n_factors; ++k) {
      const double p = res.importance(i, k) / row;
      if (p > 0.0) h -= p * std::log(p);
    }
    res.disentanglement[i] = n_factors > 1 ? 1.0 - h / std::log(static_cast<double>(n_factors)) : 1.0;
    res.weight[i] = total > 0.0 ? row / total : 0.0;
    res.score += res.weight[i] * res.disentanglement[i];
  }
  return res;
}

DciResult dci_score(const IndexRepresentation& codes, const std::vector<FactorRecord>& factors) {
  if (codes.size() != factors.size() || codes.empty()) throw std::invalid_argument("dci_score: size mismatch");
  Matrix c(codes.size(), codes[0].size());
  Matrix f(factors.size(), factors[0].values.size());
  for (std::size_t r = 0; r < codes.size(); ++r) {
    for (std::size_t i = 0; i < c.cols(); ++i) c(r, i) = static_cast<double>(codes[r][i]);
    for (std::size_t k = 0; k < f.cols(); ++k) f(r, k) = static_cast<double>(factors[r].values[k]);
  }
  return dci_score(c, f, FeatureKind::kCategorical);
}

Vector betavae_features(const FillerCodebook& codebook, const BetaVaePoint& point,
                        std::size_t* zero_norms) {
  if (point.pairs.empty()) throw std::invalid_argument("betavae_features: point has no pairs");
  const std::size_t n_r = point.pairs[0].first.size();
  Vector d(n_r);
  for (const auto& [m, mp] : point.pairs) {
    for (std::size_t i = 0; i < n_r; ++i) {
      const Vector a = codebook.filler(m[i]);
      const Vector b = codebook.filler(mp[i]);
      const double na = norm2(a.span());
      const double nb = norm2(b.span());
      if (na == 0.0 || nb == 0.0) {
        if (zero_norms) ++*zero_norms;
        continue;
      }
      d[i] += dot(a.span(), b.span()) / (na * nb);
    }
  }
  d *= 1.0 / static_cast<double>(point.pairs.size());
  return d;
}

BetaVaeResult betavae_score(const FillerCodebook& codebook, std::span<const BetaVaePoint> points,
                            std::size_t n_factors, const BetaVaeOptions& options) {
  if (points.size() < 2) throw std::invalid_argument("betavae_score: need at least 2 points");
  BetaVaeResult res;
  std::vector<Vector> feats;
  feats.reserve(points.size());
  for (const auto& p : points) {
    if (p.fixed_factor >= n_factors) throw std::invalid_argument("betavae_score: factor out of range");
    feats.push_back(betavae_features(codebook, p, &res.zero_norm_fillers));
  }
  const std::size_t dim = feats[0].size();
  const std::size_t split = (points.size() + 1) / 2;

  Matrix w(dim, n_factors);
  Vector bias(n_factors);
  std::vector<double> logits(n_factors), probs(n_factors);
  auto score = [&](const Vector& x) {
    for (std::size_t k = 0; k < n_factors; ++k) {
      logits[k] = bias[k];
      for (std::size_t j = 0; j < dim; ++j) logits[k] += x[j] * w(j, k);
    }
  };
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    Matrix gw(dim, n_factors);
    Vector gb(n_factors);
    for (std::size_t s = 0; s < split; ++s) {
      score(feats[s]);
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (std::size_t k = 0; k < n_factors; ++k) z += (probs[k] = std::exp(logits[k] - mx));
      for (std::size_t k = 0; k < n_factors; ++k) {
        const double g = probs[k] / z - (k == points[s].fixed_factor ? 1.0 : 0.0);
        gb[k] += g;
        for (std::size_t j = 0; j < dim; ++j) gw(j, k) += g * feats[s][j];
      }
    }
    const double step = options.lr / static_cast<double>(split);
    gw *= step;
    gb *= step;
    w -= gw;
    bias -= gb;
  }
  std::size_t correct = 0;
  for (std::size_t s = split; s < points.size(); ++s) {
    score(feats[s]);
    correct += argmax_lowest(logits) == points[s].fixed_factor ? 1 : 0;
  }
  res.train_points = split;
  res.test_points = points.size() - split;
  res.score = static_cast<double>(correct) / static_cast<double>(res.test_points);
  return res;
}

MigResult mig_score(const IndexRepresentation& codes, const std::vector<FactorRecord>& factors) {
  if (codes.size() != factors.size()) throw std::invalid_argument("mig_score: size mismatch");
  if (codes.size() < 100) throw std::invalid_argument("mig_score: need at least 100 samples");
  const std::size_t n_codes = codes[0].size();
  const std::size_t n_factors = factors[0].values.size();
  const double n = static_cast<double>(codes.size());
  MigResult res;
  res.mutual_information = Matrix(n_codes, n_factors);
  res.factor_entropy.assign(n_factors, 0.0);

  for (std::size_t k = 0; k < n_factors; ++k) {
    std::map<std::size_t, double> pa;
    for (const auto& f : factors) pa[f.values[k]] += 1.0;
    double h = 0.0;
    for (const auto& [a, c] : pa) h -= (c / n) * std::log(c / n);
    res.factor_entropy[k] = h;
    for (std::size_t i = 0; i < n_codes; ++i) {
      std::map<std::size_t, double> pv;
      std::map<std::pair<std::size_t, std::size_t>, double> joint;
      for (std::size_t s = 0; s < codes.size(); ++s) {
        pv[codes[s][i]] += 1.0;
        joint[{codes[s][i], factors[s].values[k]}] += 1.0;
      }
      double mi = 0.0;
      for (const auto& [key, c] : joint) {
        // Integer counts keep exactly independent cells at log(1) = 0.
        mi += (c / n) * std::log(c * n / (pv[key.first] * pa[key.second]));
      }
      res.mutual_information(i, k) = mi;
    }
  }

  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < n_factors; ++k) {
    if (res.factor_entropy[k] <= 0.0) {
      res.skipped_factors.push_back(k);
      continue;
    }
    double first = 0.0, second = 0.0;
    for (std::size_t i = 0; i < n_codes; ++i) {
      const double v = res.mutual_information(i, k);
      if (v > first) {
        second = first;
        first = v;
      } else if (v > second) {
        second = v;
      }
    }
    total += std::clamp((first - second) / res.factor_entropy[k], 0.0, 1.0);
    ++used;
  }
  res.score = used > 0 ? total / static_cast<double>(used) : 0.0;
  return res;
}

MetricReport evaluate_metrics(const SoftTprAutoencoder& model, const Renderer& renderer,
                              const MetricOptions& o) {
  const FactorSpec& spec = renderer.spec();
  const std::size_t n_factors = spec.n_factors();
  SeededRng rng(o.seed);
  auto encode_records = [&](const std::vector<FactorRecord>& recs) {
    Matrix x(recs.size(), spec.obs_dim);
    for (std::size_t r = 0; r < recs.size(); ++r) {
      const Vector v = renderer.render(recs[r]);
      std::copy(v.begin(), v.end(), x.row(r).begin());
    }
    return to_index_repr(model, x);
  };
  auto sample_records = [&](std::size_t count) {
    std::vector<FactorRecord> recs;
    recs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) recs.push_back(sample_record(spec, rng));
    return recs;
  };

  MetricReport report;

  std::vector<FactorVaeBatch> fv;
  for (std::size_t b = 0; b < o.factorvae_batches; ++b) {
    const std::size_t k = rng.below(n_factors);
    const std::size_t value = rng.below(spec.values_per_factor[k]);
    auto recs = sample_records(o.factorvae_batch_size);
    for (auto& r : recs) r.values[k] = value;
    fv.push_back(FactorVaeBatch{k, encode_records(recs)});
  }
  const auto fv_res = factorvae_score(fv, n_factors);
  report.factorvae = fv_res.score;
  report.factorvae_degenerate_batches = fv_res.degenerate_batches;

  {
    const auto recs = sample_records(o.dci_samples);
    report.dci = dci_score(encode_records(recs), recs).score;
  }

  std::vector<BetaVaePoint> bv;
  for (std::size_t p = 0; p < o.betavae_points; ++p) {
    const std::size_t k = rng.below(n_factors);
    auto first = sample_records(o.betavae_pairs_per_point);
    auto second = sample_records(o.betavae_pairs_per_point);
    for (std::size_t j = 0; j < first.size(); ++j) second[j].values[k] = first[j].values[k];
    const auto ca = encode_records(first);
    const auto cb = encode_records(second);
    BetaVaePoint point{k, {}};
    for (std::size_t j = 0; j < ca.size(); ++j) point.pairs.emplace_back(ca[j], cb[j]);
    bv.push_back(std::move(point));
  }
  const auto bv_res = betavae_score(model.codebook(), bv, n_factors);
  report.betavae = bv_res.score;
  report.betavae_zero_norm_fillers = bv_res.zero_norm_fillers;

  {
    const auto recs = sample_records(o.mig_samples);
    const auto mig = mig_score(encode_records(recs), recs);
    report.mig = mig.score;
    report.mig_skipped_factors = mig.skipped_factors.size();
  }
  return report;
}

std::string format_metric_report(const MetricReport& r) {
  std::ostringstream os;
  os << "factorvae=" << format_real(r.factorvae) << '\n'
     << "dci=" << format_real(r.dci) << '\n'
     << "betavae=" << format_real(r.betavae) << '\n'
     << "mig=" << format_real(r.mig) << '\n'
     << "factorvae_degenerate_batches=" << r.factorvae_degenerate_batches << '\n'
     << "betavae_zero_norm_fillers=" << r.betavae_zero_norm_fillers << '\n'
     << "mig_skipped_factors=" << r.mig_skipped_factors << '\n';
  return os.str();
}

}  // namespace softtpr
