#include "wisynth/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "wisynth/random.hpp"

namespace wisynth {

int argmax_lowest(std::span<const double> v, bool zero_is_empty) {
  if (v.empty()) return kNoLabel;
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  if (zero_is_empty && v[best] == 0.0) return kNoLabel;
  return static_cast<int>(best);
}

namespace {

void check_shape(const LabelGraph& g, const IlfOutputMatrix& outputs) {
  for (std::size_t i = 0; i < outputs.rows(); ++i)
    for (LabelId v : outputs.row(i))
      if (v != kAbstain && (!g.contains(v) || g.label(v).role != Role::seen))
        throw std::invalid_argument("vote " + std::to_string(v) + " is not a seen label of the graph");
}

VoteTally tally(const LabelGraph& g, const IlfOutputMatrix& outputs,
                const std::function<std::vector<double>(LabelId, bool*)>& weights_of) {
  check_shape(g, outputs);
  const std::size_t k = g.desired().size();
  VoteTally t;
  t.weights.assign(outputs.rows(), std::vector<double>(k, 0.0));
  t.predicted.resize(outputs.rows());
  // Weights depend only on the vote, so cache them per label.
  std::vector<std::vector<double>> cache(g.size());
  std::vector<char> cache_flag(g.size(), 0);
  for (std::size_t i = 0; i < outputs.rows(); ++i) {
    const auto row = outputs.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const LabelId v = row[j];
      if (v == kAbstain) continue;
      if (cache[v].empty()) {
        bool flag = false;
        cache[v] = weights_of(v, &flag);
        cache_flag[v] = flag;
      }
      for (std::size_t y = 0; y < k; ++y) t.weights[i][y] += cache[v][y];
      if (cache_flag[v]) t.flags.push_back({i, j, v});
    }
    t.predicted[i] = argmax_lowest(t.weights[i], true);
  }
  return t;
}

}  // namespace

VoteTally lr_mv(const LabelGraph& g, const IlfOutputMatrix& outputs) {
  return tally(g, outputs, [&](LabelId v, bool*) {
    std::vector<double> w(g.desired().size(), 0.0);
    for (std::size_t y = 0; y < w.size(); ++y)
      if (g.relation(g.desired()[y], v) != Relation::exclusive) w[y] = 1.0;
    return w;
  });
}

WeightRule weight_rule_from_string(const std::string& s) {
  if (s == "non-ancestor" || s == "non_ancestor") return WeightRule::non_ancestor;
  if (s == "literal") return WeightRule::literal;
  throw std::invalid_argument("unknown weight rule '" + s + "'");
}

std::vector<double> w_lr_mv_vote_weights(const LabelGraph& g, LabelId vote, WeightRule rule, bool* empty_denominator) {
  const auto& desired = g.desired();
  std::vector<Relation> rel(desired.size());
  std::size_t denom = 0;
  for (std::size_t y = 0; y < desired.size(); ++y) {
    rel[y] = g.relation(desired[y], vote);
    if (rel[y] == Relation::exclusive) continue;
    if (rule == WeightRule::non_ancestor ? rel[y] != Relation::subsuming : rel[y] != Relation::subsumed) ++denom;
  }
  std::vector<double> w(desired.size(), 0.0);
  bool flagged = false;
  for (std::size_t y = 0; y < desired.size(); ++y) {
    if (rel[y] == Relation::exclusive) continue;
    if (rel[y] == Relation::subsuming) {
      w[y] = 1.0;
    } else if (denom > 0) {
      w[y] = 1.0 / static_cast<double>(denom);
    } else {
      flagged = true;
    }
  }
  if (empty_denominator) *empty_denominator = flagged;
  return w;
}

VoteTally w_lr_mv(const LabelGraph& g, const IlfOutputMatrix& outputs, WeightRule rule) {
  return tally(g, outputs, [&](LabelId v, bool* flag) { return w_lr_mv_vote_weights(g, v, rule, flag); });
}

// ---------------------------------------------------------------------------

namespace {

struct SeenMasks {
  std::vector<std::uint32_t> exclusive;  // seen labels exclusive to i
  std::vector<std::uint32_t> supersets;  // seen labels subsuming i
};

SeenMasks seen_masks(const LabelGraph& g) {
  const auto& seen = g.seen();
  SeenMasks m{std::vector<std::uint32_t>(seen.size(), 0), std::vector<std::uint32_t>(seen.size(), 0)};
  for (std::size_t i = 0; i < seen.size(); ++i)
    for (std::size_t j = 0; j < seen.size(); ++j) {
      if (i == j) continue;
      const Relation r = g.relation(seen[i], seen[j]);
      if (r == Relation::exclusive) m.exclusive[i] |= 1U << j;
      if (r == Relation::subsumed) m.supersets[i] |= 1U << j;
    }
  return m;
}

}  // namespace

std::vector<BitVector> enumerate_consistent_assignments(const LabelGraph& g, std::size_t cap) {
  const std::size_t k = g.seen().size();
  if (k > cap || k > 30)
    throw std::invalid_argument("enumerating assignments of " + std::to_string(k) + " seen labels exceeds the cap of " +
                                std::to_string(cap));
  const SeenMasks masks = seen_masks(g);
  std::vector<BitVector> out;
  const std::uint32_t n = 1U << k;
  for (std::uint32_t bits = 0; bits < n; ++bits) {
    bool ok = true;
    for (std::size_t i = 0; ok && i < k; ++i)
      if ((bits >> i) & 1U)
        ok = (bits & masks.exclusive[i]) == 0 && (bits & masks.supersets[i]) == masks.supersets[i];
    if (!ok) continue;
    BitVector b(k);
    for (std::size_t i = 0; i < k; ++i) b[i] = static_cast<std::uint8_t>((bits >> i) & 1U);
    out.push_back(std::move(b));
  }
  return out;
}

BitVector dap_label_attributes(const LabelGraph& g, std::span<const BitVector> S, LabelId y) {
  if (g.desired_index(y) < 0) throw std::invalid_argument("dap_label_attributes needs a desired label");
  const auto& seen = g.seen();
  std::vector<char> excl(seen.size());
  for (std::size_t i = 0; i < seen.size(); ++i) excl[i] = g.relation(y, seen[i]) == Relation::exclusive;
  BitVector out(S.size(), 1);
  for (std::size_t m = 0; m < S.size(); ++m)
    for (std::size_t i = 0; i < seen.size(); ++i)
      if (S[m][i] && excl[i]) {
        out[m] = 0;
        break;
      }
  return out;
}

PointAttributes dap_point_attributes(const LabelGraph& g, std::span<const BitVector> S, std::span<const LabelId> row) {
  const auto& seen = g.seen();
  BitVector active(seen.size(), 0);
  for (LabelId v : row) {
    if (v == kAbstain) continue;
    const int si = g.seen_index(v);
    if (si < 0) throw std::invalid_argument("vote " + std::to_string(v) + " is not a seen label");
    active[si] = 1;
    for (std::size_t j = 0; j < seen.size(); ++j)
      if (static_cast<int>(j) != si && g.relation(v, seen[j]) == Relation::subsumed) active[j] = 1;
  }
  PointAttributes p;
  p.bits.assign(S.size(), 0);
  bool found = false;
  for (std::size_t m = 0; m < S.size(); ++m)
    if (S[m] == active) {
      p.bits[m] = 1;
      found = true;
      break;
    }
  p.conflict = !found;
  return p;
}

int dap_predict(std::span<const double> attr_prob, std::span<const BitVector> label_attrs,
                std::span<const double> priors, DapRule rule) {
  if (attr_prob.size() != priors.size()) throw std::invalid_argument("attribute and prior counts differ");
  std::vector<double> score(label_attrs.size(), 0.0);
  for (std::size_t c = 0; c < label_attrs.size(); ++c) {
    if (label_attrs[c].size() != attr_prob.size()) throw std::invalid_argument("label attribute length mismatch");
    double s = 0.0;
    for (std::size_t m = 0; m < attr_prob.size(); ++m) {
      const bool on = label_attrs[c][m] != 0;
      const double q = on ? attr_prob[m] : 1.0 - attr_prob[m];
      if (rule == DapRule::literal) {
        s += std::log(q / std::max(q, kPriorFloor));
      } else {
        const double prior = std::max(on ? priors[m] : 1.0 - priors[m], kPriorFloor);
        s += std::log(q) - std::log(prior);
      }
    }
    score[c] = s;
  }
  return argmax_lowest(score);
}

namespace {

void check_finite(const Matrix& x) {
  for (const auto& row : x)
    for (double v : row)
      if (!std::isfinite(v)) throw std::invalid_argument("features contain NaN or Inf");
}

/// Binary logistic regression by full-batch gradient descent; returns
/// p(target = 1 | x) on every row of `x`.
std::vector<double> logistic_fit_predict(const Matrix& x, const std::vector<double>& target,
                                         const std::vector<char>& use, int iterations, double lr) {
  const std::size_t d = x.empty() ? 0 : x.front().size();
  std::vector<double> w(d + 1, 0.0), grad(d + 1);
  double n = 0.0;
  for (char u : use) n += u ? 1.0 : 0.0;
  auto logit = [&](const std::vector<double>& row) {
    double z = w[d];
    for (std::size_t k = 0; k < d; ++k) z += w[k] * row[k];
    return z;
  };
  for (int it = 0; it < iterations && n > 0; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!use[i]) continue;
      const double e = 1.0 / (1.0 + std::exp(-logit(x[i]))) - target[i];
      for (std::size_t k = 0; k < d; ++k) grad[k] += e * x[i][k];
      grad[d] += e;
    }
    for (std::size_t k = 0; k <= d; ++k) w[k] -= lr * grad[k] / n;
  }
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-logit(x[i])));
  return p;
}

}  // namespace

DapResult dap(const LabelGraph& g, const IlfOutputMatrix& outputs, const Matrix* features, DapRule rule, double clip) {
  if (!(clip >= 0.0 && clip < 0.5)) throw std::invalid_argument("clip must lie in [0, 0.5)");
  if (features) {
    if (features->size() != outputs.rows()) throw std::invalid_argument("feature and output row counts differ");
    check_finite(*features);
  }
  DapResult r;
  r.assignments = enumerate_consistent_assignments(g);
  for (LabelId y : g.desired()) r.label_attrs.push_back(dap_label_attributes(g, r.assignments, y));

  const std::size_t m = outputs.rows();
  const std::size_t na = r.assignments.size();
  std::vector<BitVector> point(m);
  std::vector<char> ok(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    PointAttributes p = dap_point_attributes(g, r.assignments, outputs.row(i));
    if (p.conflict) {
      r.conflicts.push_back(i);
      ok[i] = 0;
    }
    point[i] = std::move(p.bits);
  }
  Matrix prob(m, std::vector<double>(na));
  if (features) {
    std::vector<double> target(m);
    for (std::size_t a = 0; a < na; ++a) {
      for (std::size_t i = 0; i < m; ++i) target[i] = point[i][a];
      const auto p = logistic_fit_predict(*features, target, ok, 200, 0.5);
      for (std::size_t i = 0; i < m; ++i) prob[i][a] = std::clamp(p[i], clip, 1.0 - clip);
    }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t a = 0; a < na; ++a) prob[i][a] = point[i][a] ? 1.0 - clip : clip;
  }
  // Priors are the mean attribute posterior over usable points, so an
  // assignment no point matches has posterior and prior both at the clip.
  r.priors.assign(na, 0.0);
  const double n_ok = static_cast<double>(m - r.conflicts.size());
  if (n_ok > 0)
    for (std::size_t i = 0; i < m; ++i)
      if (ok[i])
        for (std::size_t a = 0; a < na; ++a) r.priors[a] += prob[i][a] / n_ok;
  r.predicted.resize(m);
  for (std::size_t i = 0; i < m; ++i) r.predicted[i] = dap_predict(prob[i], r.label_attrs, r.priors, rule);
  return r;
}

// ---------------------------------------------------------------------------

std::vector<double> LinearClassifier::predict_proba(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(dims)) throw std::invalid_argument("feature length mismatch");
  std::vector<double> z(static_cast<std::size_t>(classes));
  const std::size_t stride = static_cast<std::size_t>(dims) + 1;
  for (std::size_t c = 0; c < z.size(); ++c) {
    const double* w = weights.data() + c * stride;
    double s = w[dims];
    for (int k = 0; k < dims; ++k) s += w[k] * x[k];
    z[c] = s;
  }
  softmax_inplace(z);
  return z;
}

int LinearClassifier::predict(std::span<const double> x) const { return argmax_lowest(predict_proba(x)); }

namespace {

void check_training_shapes(const LinearClassifier& clf, const Matrix& x, const Matrix& t) {
  if (x.size() != t.size()) throw std::invalid_argument("feature and target row counts differ");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != static_cast<std::size_t>(clf.dims)) throw std::invalid_argument("feature length mismatch");
    if (t[i].size() != static_cast<std::size_t>(clf.classes)) throw std::invalid_argument("target length mismatch");
  }
}

double row_mass(const std::vector<double>& t) {
  double s = 0.0;
  for (double v : t) s += v;
  return s;
}

}  // namespace

double noise_aware_loss(const LinearClassifier& clf, const Matrix& features, const Matrix& targets, double l2) {
  check_training_shapes(clf, features, targets);
  double total = 0.0;
  double n = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (row_mass(targets[i]) == 0.0) continue;
    n += 1.0;
    const auto p = clf.predict_proba(features[i]);
    for (std::size_t c = 0; c < p.size(); ++c)
      if (targets[i][c] > 0.0) total -= targets[i][c] * std::log(p[c]);
  }
  double loss = n > 0 ? total / n : 0.0;
  if (l2 > 0.0) {
    const std::size_t stride = static_cast<std::size_t>(clf.dims) + 1;
    double sq = 0.0;
    for (std::size_t r = 0; r < clf.weights.size(); ++r)
      if (r % stride != static_cast<std::size_t>(clf.dims)) sq += clf.weights[r] * clf.weights[r];
    loss += 0.5 * l2 * sq;
  }
  return loss;
}

std::vector<double> noise_aware_gradient(const LinearClassifier& clf, const Matrix& features, const Matrix& targets,
                                         double l2) {
  check_training_shapes(clf, features, targets);
  const std::size_t stride = static_cast<std::size_t>(clf.dims) + 1;
  std::vector<double> g(clf.weights.size(), 0.0);
  double n = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double mass = row_mass(targets[i]);
    if (mass == 0.0) continue;
    n += 1.0;
    const auto p = clf.predict_proba(features[i]);
    for (std::size_t c = 0; c < p.size(); ++c) {
      const double e = mass * p[c] - targets[i][c];
      double* gc = g.data() + c * stride;
      for (int k = 0; k < clf.dims; ++k) gc[k] += e * features[i][k];
      gc[clf.dims] += e;
    }
  }
  if (n > 0)
    for (double& v : g) v /= n;
  if (l2 > 0.0)
    for (std::size_t r = 0; r < g.size(); ++r)
      if (r % stride != static_cast<std::size_t>(clf.dims)) g[r] += l2 * clf.weights[r];
  return g;
}

LinearClassifier train_noise_aware_linear(const Matrix& features, const Matrix& targets, const LinearConfig& cfg) {
  if (features.empty()) throw std::invalid_argument("no training rows");
  if (targets.empty() || targets.front().empty()) throw std::invalid_argument("targets have no classes");
  if (!(cfg.learning_rate > 0.0) || cfg.iterations < 0 || cfg.l2 < 0.0)
    throw std::invalid_argument("invalid linear trainer configuration");
  check_finite(features);
  LinearClassifier clf;
  clf.classes = static_cast<int>(targets.front().size());
  clf.dims = static_cast<int>(features.front().size());
  clf.weights.assign(static_cast<std::size_t>(clf.classes) * (static_cast<std::size_t>(clf.dims) + 1), 0.0);
  check_training_shapes(clf, features, targets);
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto g = noise_aware_gradient(clf, features, targets, cfg.l2);
    for (std::size_t r = 0; r < g.size(); ++r) clf.weights[r] -= cfg.learning_rate * g[r];
  }
  return clf;
}

Matrix desired_targets(const std::vector<std::vector<double>>& probs, bool has_unknown) {
  Matrix out;
  out.reserve(probs.size());
  for (const auto& p : probs) {
    std::vector<double> t(p.begin(), has_unknown && !p.empty() ? p.end() - 1 : p.end());
    const double s = row_mass(t);
    for (double& v : t) v = s > 0.0 ? v / s : 0.0;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace wisynth
