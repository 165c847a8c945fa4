#include "wisynth/synthlab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wisynth/inference.hpp"
#include "wisynth/random.hpp"

namespace wisynth {

const char* to_string(SimProcess p) noexcept { return p == SimProcess::plrm ? "plrm" : "taxonomy"; }

SimProcess sim_process_from_string(const std::string& s) {
  if (s == "plrm") return SimProcess::plrm;
  if (s == "taxonomy") return SimProcess::taxonomy;
  throw std::invalid_argument("unknown simulation process '" + s + "' (expected plrm or taxonomy)");
}

void SimSpec::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
  };
  const bool pair = plant_pair || force_indistinct_pair;
  if (desired < (pair ? 3 : 2)) throw std::invalid_argument("too few desired labels");
  if (seen < (pair ? 2 : 1)) throw std::invalid_argument("too few seen labels");
  if (desired + seen > 64) throw std::invalid_argument("at most 64 labels are supported");
  if (ilfs < 1 || points < 0) throw std::invalid_argument("need at least one ILF and a non-negative point count");
  prob(acc_min, "acc_min");
  prob(acc_max, "acc_max");
  if (acc_min > acc_max) throw std::invalid_argument("acc_min exceeds acc_max");
  if (!accuracies.empty()) {
    if (accuracies.size() != static_cast<std::size_t>(ilfs)) throw std::invalid_argument("one accuracy per ILF");
    for (double a : accuracies) prob(a, "accuracy");
  }
  prob(abstain, "abstain");
  if (abstain >= 1.0) throw std::invalid_argument("abstain must be below 1");
  prob(group_frac, "group_frac");
  prob(part_frac, "part_frac");
  if (group_frac + part_frac > 1.0 + 1e-12) throw std::invalid_argument("group_frac + part_frac exceeds 1");
  prob(partial_member_prob, "partial_member_prob");
  if (space_min < 1 || space_max < space_min) throw std::invalid_argument("invalid ILF space size range");
  if (feature_dims < 0 || !(separation >= 0.0)) throw std::invalid_argument("invalid feature settings");
  if (process == SimProcess::plrm) {
    if (seen > 18) throw std::invalid_argument("the plrm process enumerates 2^seen states; use at most 18 seen labels");
    if (!(relation_weight >= 0.0) || !(pseudo_accuracy_weight >= 0.0))
      throw std::invalid_argument("planted weights must be non-negative");
  }
  if (max_retries < 1) throw std::invalid_argument("max_retries must be >= 1");
}

namespace {

using Mask = std::uint64_t;

double standard_normal(Rng& rng) {
  // Box-Muller on the portable uniform; one draw per pair is discarded.
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

enum class Kind { desired, part, group, distractor };

/// Node-level taxonomy. closure[v] has bit u set when u is v or below v.
struct Taxonomy {
  int nodes = 0;
  std::vector<std::pair<int, int>> arcs;  // parent, child
  std::vector<Mask> closure;
  std::vector<Kind> kind;
  std::vector<int> desired;  // node ids, gold index order
  int pair_a = -1;
  int pair_b = -1;
  int distinguisher = -1;

  bool is_desired(int v) const { return kind[v] == Kind::desired; }
  int add(Kind k) {
    kind.push_back(k);
    return nodes++;
  }
};

void close_under_descendants(Taxonomy& t) {
  t.closure.assign(static_cast<std::size_t>(t.nodes), 0);
  for (int v = 0; v < t.nodes; ++v) t.closure[v] = Mask{1} << v;
  for (bool changed = true; changed;) {
    changed = false;
    for (auto [p, c] : t.arcs) {
      const Mask next = t.closure[p] | t.closure[c];
      changed = changed || next != t.closure[p];
      t.closure[p] = next;
    }
  }
}

constexpr int kCalibrationRetries = 20;
constexpr double kAccuracyTolerance = 0.01;

int draw_between(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
}

Taxonomy draw_taxonomy(const SimSpec& spec, Rng& rng) {
  const bool pair = spec.plant_pair || spec.force_indistinct_pair;
  const int base_seen = spec.seen - (pair ? 1 : 0);
  const int n_part = static_cast<int>(std::lround(spec.part_frac * base_seen));
  const int n_group = std::min(base_seen - n_part, static_cast<int>(std::lround(spec.group_frac * base_seen)));
  const int n_distractor = base_seen - n_part - n_group;

  Taxonomy t;
  for (int d = 0; d < spec.desired; ++d) t.desired.push_back(t.add(Kind::desired));
  if (pair) {
    t.pair_a = t.desired[spec.desired - 2];
    t.pair_b = t.desired[spec.desired - 1];
  }
  // Slots stand for desired labels a group can take; the pair shares one slot.
  std::vector<int> slots(t.desired.begin(), t.desired.end() - (pair ? 1 : 0));
  std::vector<int> part_owner(slots.begin(), slots.end() - (pair ? 1 : 0));

  std::vector<std::vector<int>> parts_of(static_cast<std::size_t>(t.nodes));
  for (int k = 0; k < n_part; ++k) {
    const int owner = part_owner[uniform_index(rng, part_owner.size())];
    const int v = t.add(Kind::part);
    t.arcs.emplace_back(owner, v);
    parts_of[owner].push_back(v);
  }

  auto take_members = [&](int group, std::vector<int> pool, int size) {
    shuffle(pool, rng);
    for (int s = 0; s < size; ++s) {
      const int y = pool[s];
      if (!parts_of[y].empty() && uniform01(rng) < spec.partial_member_prob) {
        t.arcs.emplace_back(group, parts_of[y][uniform_index(rng, parts_of[y].size())]);
        continue;
      }
      t.arcs.emplace_back(group, y);
      if (y == t.pair_a) t.arcs.emplace_back(group, t.pair_b);
    }
  };
  std::vector<int> groups;
  for (int k = 0; k < n_group; ++k) {
    const int v = t.add(Kind::group);
    groups.push_back(v);
    const int top = std::max(1, static_cast<int>(slots.size()) - 1);
    take_members(v, slots, draw_between(rng, 1, top));
  }
  if (pair) {
    t.distinguisher = t.add(Kind::group);
    groups.push_back(t.distinguisher);
    t.arcs.emplace_back(t.distinguisher, t.pair_a);
  }

  std::vector<int> distractors;
  for (int k = 0; k < n_distractor; ++k) {
    const int v = t.add(Kind::distractor);
    if (!distractors.empty() && uniform01(rng) < 0.5)
      t.arcs.emplace_back(distractors[uniform_index(rng, distractors.size())], v);
    distractors.push_back(v);
  }

  // Nest groups whose members form a strict subset of another group's.
  close_under_descendants(t);
  auto below = [&](int v) { return t.closure[v] & ~(Mask{1} << v); };
  for (int g : groups)
    for (int h : groups)
      if (g != h && below(h) != below(g) && (below(h) & ~below(g)) == 0) t.arcs.emplace_back(g, h);
  close_under_descendants(t);
  return t;
}

std::string node_name(const Taxonomy& t, int v) {
  if (v == t.distinguisher) return "g_pair";
  switch (t.kind[v]) {
    case Kind::desired: {
      const auto it = std::find(t.desired.begin(), t.desired.end(), v);
      return "y" + std::to_string(it - t.desired.begin());
    }
    case Kind::part: return "p" + std::to_string(v);
    case Kind::group: return "g" + std::to_string(v);
    case Kind::distractor: return "x" + std::to_string(v);
  }
  return {};
}

/// Label graph of the taxonomy, leaving out `drop` (or nothing when -1).
LabelGraph graph_of(const Taxonomy& t, int drop) {
  std::vector<DagEdge> edges;
  for (auto [p, c] : t.arcs)
    if (p != drop && c != drop) edges.push_back({node_name(t, p), node_name(t, c)});
  std::vector<std::pair<std::string, Role>> roles;
  for (int d : t.desired) roles.emplace_back(node_name(t, d), Role::desired);
  for (int v = 0; v < t.nodes; ++v)
    if (!t.is_desired(v) && v != drop) roles.emplace_back(node_name(t, v), Role::seen);
  return from_dag(edges, roles);
}

/// Some pair of desired labels must see different compatible sets in `space`,
/// and at least two desired labels must have a compatible label there.
bool discriminative(const Taxonomy& t, const std::vector<int>& space) {
  std::vector<Mask> sig;
  int covered = 0;
  for (int y : t.desired) {
    Mask m = 0;
    for (std::size_t k = 0; k < space.size(); ++k)
      if (t.closure[space[k]] & t.closure[y]) m |= Mask{1} << k;
    sig.push_back(m);
    covered += m != 0;
  }
  if (covered < 2) return false;
  return std::any_of(sig.begin(), sig.end(), [&](Mask m) { return m != sig.front(); });
}


/// P(Y, Ybar), optionally with every Y row rescaled to mass 1 / |Y|.
JointTable latent_joint(const FactorModel& model, bool balanced, const EnumerationBudget& budget = {}) {
  JointTable joint = exact_latent_marginal(model, budget);
  if (!balanced) return joint;
  const std::vector<double> py = joint.y_marginal();
  const std::size_t per_y = std::size_t{1} << joint.latent_count;
  for (int y = 0; y < joint.y_cardinality; ++y)
    for (std::size_t b = 0; b < per_y; ++b)
      joint.prob[joint.index(y, static_cast<std::uint32_t>(b))] /= py[y] * joint.y_cardinality;
  return joint;
}

/// P(vote is a true seen label | ILF j votes) under the latent joint.
double ilf_accuracy(const FactorModel& model, const JointTable& joint, std::size_t j) {
  const LabelGraph& g = model.graph();
  const auto& domain = model.ilf_domain(j);
  Assignment a;
  a.y_bar.assign(static_cast<std::size_t>(model.latent_count()), 0);
  for (std::size_t k = 0; k < model.ilf_count(); ++k) a.lambda.push_back(model.ilf_domain(k).front());
  std::vector<int> seen_of;
  for (LabelId v : domain) seen_of.push_back(v == kAbstain ? -1 : g.seen_index(v));
  double right = 0.0, voted = 0.0;
  for (int y = 0; y < joint.y_cardinality; ++y) {
    a.y = y;
    for (std::uint32_t bits = 0; bits < (std::uint32_t{1} << joint.latent_count); ++bits) {
      const double p = joint.prob[joint.index(y, bits)];
      if (p == 0.0) continue;
      for (int i = 0; i < joint.latent_count; ++i) a.y_bar[i] = bits >> i & 1U;
      const std::vector<double> dist = full_conditional(model, a, Site{Site::Kind::vote, static_cast<int>(j)});
      for (std::size_t v = 0; v < domain.size(); ++v) {
        if (domain[v] == kAbstain) continue;
        voted += p * dist[v];
        if (seen_of[v] >= 0 && (bits >> seen_of[v] & 1U)) right += p * dist[v];
      }
    }
  }
  return voted > 0.0 ? right / voted : 0.0;
}

}  // namespace

SimTask generate_task(const SimSpec& spec) {
  spec.validate();
  const bool pair = spec.plant_pair || spec.force_indistinct_pair;
  Rng rng_dag = make_rng(spec.seed, 1);
  std::optional<Taxonomy> tax;
  std::string last_failure = "no attempt";
  for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
    tax = draw_taxonomy(spec, rng_dag);
    if (!check_distinguishability(graph_of(*tax, -1)).distinguishable) {
      last_failure = "graph is not distinguishable";
      tax.reset();
      continue;
    }
    if (pair && check_distinguishability(graph_of(*tax, tax->distinguisher)).indistinct_pairs.size() != 1) {
      last_failure = "removing the distinguishing label did not leave exactly one indistinct pair";
      tax.reset();
      continue;
    }
    break;
  }
  if (!tax) throw SpecUnsatisfiable("no task after " + std::to_string(spec.max_retries) + " attempts: " + last_failure);
  const Taxonomy& t = *tax;
  const int drop = spec.force_indistinct_pair ? t.distinguisher : -1;

  SimTask task{graph_of(t, drop), {}, {}, {}, {}, {}, {}};
  const LabelGraph& g = task.graph;
  auto id = [&](int v) { return g.id_of(node_name(t, v)); };

  // ILF output spaces over the base seen nodes; the planted ILF comes last.
  std::vector<int> base_seen;
  for (int v = 0; v < t.nodes; ++v)
    if (!t.is_desired(v) && v != t.distinguisher) base_seen.push_back(v);
  Rng rng_ilf = make_rng(spec.seed, 2);
  std::vector<std::vector<int>> spaces;
  std::vector<double> acc;
  auto draw_space = [&] {
    const int hi = std::min<int>(spec.space_max, static_cast<int>(base_seen.size()));
    const int lo = std::min(spec.space_min, hi);
    const int size = draw_between(rng_ilf, lo, hi);
    std::vector<int> pool;
    for (int tries = 0; tries < 100; ++tries) {
      pool = base_seen;
      shuffle(pool, rng_ilf);
      pool.resize(static_cast<std::size_t>(size));
      if (discriminative(t, pool)) break;
    }
    std::sort(pool.begin(), pool.end());
    return pool;
  };
  for (int j = 0; j < spec.ilfs; ++j) {
    spaces.push_back(draw_space());
    const double a = spec.acc_min + (spec.acc_max - spec.acc_min) * uniform01(rng_ilf);
    acc.push_back(spec.accuracies.empty() ? a : spec.accuracies[j]);
  }
  if (pair) {
    spaces.push_back({t.distinguisher});
    acc.push_back(spec.acc_min + (spec.acc_max - spec.acc_min) * uniform01(rng_ilf));
  }
  const std::size_t columns = spaces.size();
  const std::size_t kept = spec.force_indistinct_pair ? columns - 1 : columns;

  auto ilf_specs = [&](const LabelGraph& graph, std::size_t count) {
    std::vector<IlfSpec> out;
    for (std::size_t j = 0; j < count; ++j) {
      IlfSpec f;
      f.ilf_id = static_cast<int>(j);
      for (int v : spaces[j]) f.output_space.push_back(graph.id_of(node_name(t, v)));
      std::sort(f.output_space.begin(), f.output_space.end());
      f.can_abstain = true;
      out.push_back(std::move(f));
    }
    return out;
  };
  const std::size_t m = static_cast<std::size_t>(spec.points);
  task.outputs = IlfOutputMatrix(m, kept);
  task.gold.resize(m);

  if (spec.process == SimProcess::plrm) {
    // Draws come from a PLRM over the full graph; the forced variant then
    // loses the planted label and its column.
    const LabelGraph full = graph_of(t, -1);
    BuildOptions bo;
    bo.include_unknown = false;
    std::optional<FactorModel> model;
    // ILFs whose target accuracy is out of reach get a fresh output space.
    for (int attempt = 0;; ++attempt) {
      model = build_plrm(full, ilf_specs(full, columns), bo);
      std::vector<double> theta = model->theta();
      for (std::size_t r = 0; r < theta.size(); ++r) {
        const Family f = model->dependencies()[r].family;
        theta[r] = f == Family::pseudo_accuracy ? spec.pseudo_accuracy_weight
                   : f == Family::accuracy      ? 0.0
                                                : spec.relation_weight;
      }
      model->set_theta(std::move(theta));
      calibrate_accuracies(*model, acc, 3, spec.balanced_classes);
      task.accuracies = ilf_accuracies(*model, {}, spec.balanced_classes);
      bool redrawn = false;
      for (int j = 0; j < spec.ilfs && attempt < kCalibrationRetries; ++j) {
        if (std::abs(task.accuracies[j] - acc[j]) <= kAccuracyTolerance) continue;
        spaces[j] = draw_space();
        redrawn = true;
      }
      if (!redrawn) break;
    }
    task.theta = model->theta();
    const ExactSampler sampler(*model);
    Rng rng = make_rng(spec.seed, 3);
    for (std::size_t i = 0; i < m; ++i) {
      const Assignment a = spec.balanced_classes
                               ? sampler.sample_given_y(static_cast<int>(uniform_index(rng, full.desired().size())), rng)
                               : sampler.sample_joint(rng);
      task.gold[i] = g.desired_index(g.id_of(full.label(full.desired()[a.y]).name));
      for (std::size_t j = 0; j < kept; ++j)
        if (a.lambda[j] != kAbstain) task.outputs.at(i, j) = g.id_of(full.label(a.lambda[j]).name);
    }
  } else {
    // Points: gold class, then a latent node below it.
    Rng rng_pts = make_rng(spec.seed, 3);
    std::vector<int> latent(m), gold_node(m);
    for (std::size_t i = 0; i < m; ++i) {
      const int gi = static_cast<int>(uniform_index(rng_pts, t.desired.size()));
      task.gold[i] = g.desired_index(id(t.desired[gi]));
      gold_node[i] = t.desired[gi];
      std::vector<int> below;
      for (int v = 0; v < t.nodes; ++v)
        if (t.closure[t.desired[gi]] >> v & 1U) below.push_back(v);
      latent[i] = below[uniform_index(rng_pts, below.size())];
    }

    // Votes, one stream per ILF column so columns are independent of each other.
    for (std::size_t j = 0; j < kept; ++j) {
      const bool planted = pair && j + 1 == columns;
      Rng rng = make_rng(spec.seed, planted ? 99 : 100 + j);
      const auto& space = spaces[j];
      for (std::size_t i = 0; i < m; ++i) {
        if (uniform01(rng) < spec.abstain) continue;
        std::vector<int> truth, compatible, wrong;
        for (int s : space) {
          const bool shares = (t.closure[s] & t.closure[gold_node[i]]) != 0;
          (shares ? compatible : wrong).push_back(s);
          if (t.closure[s] >> latent[i] & 1U) truth.push_back(s);
        }
        const bool correct = uniform01(rng) < acc[j];
        const std::vector<int>* pick = nullptr;
        if (correct) {
          pick = !truth.empty() ? &truth : &compatible;
        } else {
          pick = !wrong.empty() ? &wrong : &compatible;
        }
        if (pick->empty()) continue;
        task.outputs.at(i, j) = id((*pick)[uniform_index(rng, pick->size())]);
      }
    }
    task.accuracies = acc;
  }
  task.ilfs = ilf_specs(g, kept);
  task.accuracies.resize(kept);

  if (spec.feature_dims > 0) {
    Rng rng_feat = make_rng(spec.seed, 4);
    const std::size_t d = static_cast<std::size_t>(spec.feature_dims);
    std::vector<std::vector<double>> means(g.desired().size(), std::vector<double>(d));
    for (auto& mu : means)
      for (double& x : mu) x = spec.separation * standard_normal(rng_feat);
    task.features.assign(m, std::vector<double>(d));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < d; ++k) task.features[i][k] = means[task.gold[i]][k] + standard_normal(rng_feat);
  }
  return task;
}

std::vector<double> ilf_accuracies(const FactorModel& model, const EnumerationBudget& budget, bool balanced) {
  const JointTable joint = latent_joint(model, balanced, budget);
  std::vector<double> out;
  for (std::size_t j = 0; j < model.ilf_count(); ++j) out.push_back(ilf_accuracy(model, joint, j));
  return out;
}

void calibrate_accuracies(FactorModel& model, std::span<const double> targets, int rounds, bool balanced) {
  if (targets.size() != model.ilf_count()) throw std::invalid_argument("one target accuracy per ILF");
  std::vector<std::vector<std::size_t>> rows(model.ilf_count());
  for (std::size_t r = 0; r < model.size(); ++r)
    if (model.dependencies()[r].family == Family::accuracy) rows[model.dependencies()[r].ilf].push_back(r);
  auto accuracy_at = [&](std::size_t j, double w) {
    for (std::size_t r : rows[j]) model.mutable_theta()[r] = w;
    return ilf_accuracy(model, latent_joint(model, balanced), j);
  };
  constexpr double kMaxWeight = 12.0;
  for (int round = 0; round < rounds; ++round) {
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (rows[j].empty()) continue;
      double lo = 0.0, hi = kMaxWeight;
      if (accuracy_at(j, hi) <= targets[j]) continue;
      if (accuracy_at(j, lo) >= targets[j]) continue;
      for (int it = 0; it < 20; ++it) {
        const double mid = 0.5 * (lo + hi);
        (accuracy_at(j, mid) < targets[j] ? lo : hi) = mid;
      }
      accuracy_at(j, 0.5 * (lo + hi));
    }
  }
}

ModelSample sample_from_model(const FactorModel& model, std::size_t m, std::uint64_t seed) {
  const ExactSampler sampler(model);
  Rng rng = make_rng(seed, 5);
  ModelSample out;
  out.outputs = IlfOutputMatrix(0, model.ilf_count());
  out.y.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Assignment a = sampler.sample_joint(rng);
    out.outputs.push_row(a.lambda);
    out.y.push_back(a.y);
  }
  return out;
}

Metrics evaluate(std::span<const int> predicted, std::span<const int> gold, int classes) {
  if (predicted.size() != gold.size())
    throw std::invalid_argument("prediction count " + std::to_string(predicted.size()) + " differs from gold count " +
                                std::to_string(gold.size()));
  if (classes < 1) throw std::invalid_argument("need at least one class");
  Metrics out;
  out.per_class.resize(static_cast<std::size_t>(classes));
  std::vector<std::size_t> tp(static_cast<std::size_t>(classes), 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const int g = gold[i];
    const int p = predicted[i];
    if (g < 0 || g >= classes) throw std::invalid_argument("gold label out of range");
    ++out.per_class[g].support;
    if (p >= 0 && p < classes) ++out.per_class[p].predicted;
    if (p == g) {
      ++correct;
      ++tp[g];
    }
  }
  out.accuracy = gold.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold.size());
  double f1_sum = 0.0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    ClassMetrics& cm = out.per_class[c];
    if (cm.predicted > 0) cm.precision = static_cast<double>(tp[c]) / static_cast<double>(cm.predicted);
    if (cm.support > 0) cm.recall = static_cast<double>(tp[c]) / static_cast<double>(cm.support);
    if (cm.precision + cm.recall > 0) cm.f1 = 2 * cm.precision * cm.recall / (cm.precision + cm.recall);
    if (cm.support > 0 || cm.predicted > 0) {
      f1_sum += cm.f1;
      ++present;
    }
  }
  out.macro_f1 = present ? f1_sum / present : 0.0;
  return out;
}

std::vector<int> hard_labels(const std::vector<std::vector<double>>& probs) {
  std::vector<int> out;
  out.reserve(probs.size());
  for (const auto& p : probs) {
    int best = -1;
    for (std::size_t c = 0; c < p.size(); ++c)
      if (best < 0 || p[c] > p[best]) best = static_cast<int>(c);
    out.push_back(best);
  }
  return out;
}

Metrics evaluate(const std::vector<std::vector<double>>& probs, std::span<const int> gold, int classes) {
  return evaluate(hard_labels(probs), gold, classes);
}

}  // namespace wisynth
