#include "wisynth/plrm_model.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <tuple>

namespace wisynth {

const char* to_string(Family f) noexcept {
  switch (f) {
    case Family::pseudo_accuracy: return "pseudo_accuracy";
    case Family::accuracy: return "accuracy";
    case Family::seen_seen: return "seen_seen";
    case Family::desired_seen: return "desired_seen";
  }
  return "?";
}

const char* to_string(ModelKind k) noexcept { return k == ModelKind::plrm ? "plrm" : "wslg"; }

Family family_from_string(const std::string& s) {
  for (Family f : {Family::pseudo_accuracy, Family::accuracy, Family::seen_seen, Family::desired_seen})
    if (s == to_string(f)) return f;
  throw std::invalid_argument("unknown dependency family '" + s + "'");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "plrm") return ModelKind::plrm;
  if (s == "wslg") return ModelKind::wslg;
  throw std::invalid_argument("unknown model kind '" + s + "'");
}

FactorModel::FactorModel(ModelKind kind, std::shared_ptr<const LabelGraph> graph, std::vector<IlfSpec> ilfs,
                         std::vector<Dependency> deps, bool include_unknown, double theta_init)
    : kind_(kind),
      graph_(std::move(graph)),
      ilfs_(std::move(ilfs)),
      deps_(std::move(deps)),
      theta_(deps_.size(), theta_init),
      include_unknown_(include_unknown),
      latent_count_(kind == ModelKind::plrm ? static_cast<int>(graph_->seen().size()) : 0) {
  domains_.reserve(ilfs_.size());
  for (const IlfSpec& f : ilfs_) {
    std::vector<LabelId> d = f.output_space;
    if (f.can_abstain) d.push_back(kAbstain);
    domains_.push_back(std::move(d));
  }
  on_latent_.resize(static_cast<std::size_t>(latent_count_));
  on_ilf_.resize(ilfs_.size());
  for (std::size_t r = 0; r < deps_.size(); ++r) {
    const Dependency& d = deps_[r];
    const int ri = static_cast<int>(r);
    switch (d.family) {
      case Family::pseudo_accuracy:
        on_y_.push_back(ri);
        on_ilf_[d.ilf].push_back(ri);
        break;
      case Family::accuracy:
        on_latent_[d.seen].push_back(ri);
        on_ilf_[d.ilf].push_back(ri);
        break;
      case Family::seen_seen:
        on_latent_[d.seen].push_back(ri);
        on_latent_[d.seen2].push_back(ri);
        break;
      case Family::desired_seen:
        on_y_.push_back(ri);
        on_latent_[d.seen].push_back(ri);
        break;
    }
  }
}

void FactorModel::set_theta(std::vector<double> theta) {
  if (theta.size() != deps_.size())
    throw std::invalid_argument("theta has " + std::to_string(theta.size()) + " entries, model has " +
                                std::to_string(deps_.size()) + " dependencies");
  theta_ = std::move(theta);
}

void FactorModel::validate(const Assignment& a) const {
  if (a.y < 0 || a.y >= y_cardinality()) throw std::invalid_argument("assignment Y out of range");
  if (a.y_bar.size() != static_cast<std::size_t>(latent_count_))
    throw std::invalid_argument("assignment has " + std::to_string(a.y_bar.size()) + " latent bits, expected " +
                                std::to_string(latent_count_));
  if (a.lambda.size() != ilfs_.size())
    throw std::invalid_argument("assignment has " + std::to_string(a.lambda.size()) + " votes, expected " +
                                std::to_string(ilfs_.size()));
  for (std::size_t j = 0; j < ilfs_.size(); ++j) {
    const auto& d = domains_[j];
    if (std::find(d.begin(), d.end(), a.lambda[j]) == d.end())
      throw std::invalid_argument("vote " + std::to_string(a.lambda[j]) + " outside the domain of ILF " +
                                  std::to_string(ilfs_[j].ilf_id));
  }
}

std::array<std::size_t, 4> FactorModel::family_counts() const {
  std::array<std::size_t, 4> c{};
  for (const Dependency& d : deps_) ++c[static_cast<std::size_t>(d.family)];
  return c;
}

// ---------------------------------------------------------------------------

namespace {

void require_buildable(const LabelGraph& g, std::span<const IlfSpec> ilfs) {
  validate_ilfs(g, ilfs);
  const ConsistencyReport rep = check_consistency(g);
  if (!rep.consistent) {
    const auto& v = rep.violations.front();
    throw GraphError("label graph is inconsistent: triple (" + g.label(v.labels[0]).name + ", " +
                     g.label(v.labels[1]).name + ", " + g.label(v.labels[2]).name + ") matches a forbidden pattern");
  }
  if (g.desired().empty()) throw GraphError("label graph has no desired labels");
}

std::vector<Dependency> pseudo_accuracy_deps(const LabelGraph& g, std::span<const IlfSpec> ilfs) {
  std::vector<Dependency> deps;
  for (std::size_t yi = 0; yi < g.desired().size(); ++yi) {
    const LabelId y = g.desired()[yi];
    for (std::size_t si = 0; si < g.seen().size(); ++si) {
      const LabelId s = g.seen()[si];
      if (g.relation(y, s) == Relation::exclusive) continue;
      for (std::size_t j = 0; j < ilfs.size(); ++j)
        if (ilfs[j].emits(s)) {
          Dependency d;
          d.family = Family::pseudo_accuracy;
          d.desired = static_cast<int>(yi);
          d.seen = static_cast<int>(si);
          d.ilf = static_cast<int>(j);
          d.label = s;
          deps.push_back(d);
        }
    }
  }
  return deps;
}

}  // namespace

FactorModel build_plrm(const LabelGraph& graph, std::vector<IlfSpec> ilfs, const BuildOptions& opts) {
  require_buildable(graph, ilfs);
  std::vector<Dependency> deps;
  if (opts.pseudo_accuracy) deps = pseudo_accuracy_deps(graph, ilfs);

  const auto& seen = graph.seen();
  for (std::size_t si = 0; si < seen.size(); ++si)
    for (std::size_t j = 0; j < ilfs.size(); ++j)
      if (ilfs[j].emits(seen[si])) {
        Dependency d;
        d.family = Family::accuracy;
        d.seen = static_cast<int>(si);
        d.ilf = static_cast<int>(j);
        d.label = seen[si];
        deps.push_back(d);
      }
  for (std::size_t a = 0; a < seen.size(); ++a)
    for (std::size_t b = a + 1; b < seen.size(); ++b) {
      Dependency d;
      d.family = Family::seen_seen;
      d.seen = static_cast<int>(a);
      d.seen2 = static_cast<int>(b);
      d.relation = graph.relation(seen[a], seen[b]);
      deps.push_back(d);
    }
  for (std::size_t yi = 0; yi < graph.desired().size(); ++yi)
    for (std::size_t si = 0; si < seen.size(); ++si) {
      Dependency d;
      d.family = Family::desired_seen;
      d.desired = static_cast<int>(yi);
      d.seen = static_cast<int>(si);
      d.relation = graph.relation(graph.desired()[yi], seen[si]);
      deps.push_back(d);
    }
  return FactorModel(ModelKind::plrm, std::make_shared<const LabelGraph>(graph), std::move(ilfs), std::move(deps),
                     opts.include_unknown, opts.theta_init);
}

FactorModel build_wslg(const LabelGraph& graph, std::vector<IlfSpec> ilfs, const BuildOptions& opts) {
  require_buildable(graph, ilfs);
  auto deps = pseudo_accuracy_deps(graph, ilfs);
  return FactorModel(ModelKind::wslg, std::make_shared<const LabelGraph>(graph), std::move(ilfs), std::move(deps),
                     opts.include_unknown, opts.theta_init);
}

// ---------------------------------------------------------------------------

int factor_value(const Dependency& dep, const Assignment& a) noexcept {
  switch (dep.family) {
    case Family::pseudo_accuracy:
      return static_cast<int>(a.y == dep.desired && a.lambda[dep.ilf] == dep.label);
    case Family::accuracy:
      return static_cast<int>(a.y_bar[dep.seen] == 1 && a.lambda[dep.ilf] == dep.label);
    case Family::seen_seen:
      return relation_factor(dep.relation, a.y_bar[dep.seen] == 1, a.y_bar[dep.seen2] == 1);
    case Family::desired_seen:
      // "Left" membership is Y == y; the subsuming case fires on Y != y with the bit on.
      return relation_factor(dep.relation, a.y == dep.desired, a.y_bar[dep.seen] == 1);
  }
  return 0;
}

std::vector<int> feature_vector(const FactorModel& model, const Assignment& a) {
  model.validate(a);
  std::vector<int> phi;
  phi.reserve(model.size());
  for (const Dependency& d : model.dependencies()) phi.push_back(factor_value(d, a));
  return phi;
}

double log_unnormalized(const FactorModel& model, std::span<const double> theta, const Assignment& a) {
  model.validate(a);
  if (theta.size() != model.size()) throw std::invalid_argument("theta length does not match model");
  double s = 0.0;
  const auto& deps = model.dependencies();
  for (std::size_t r = 0; r < deps.size(); ++r)
    if (const int v = factor_value(deps[r], a); v != 0) s += theta[r] * v;
  return s;
}

double log_unnormalized(const FactorModel& model, const Assignment& a) {
  return log_unnormalized(model, model.theta(), a);
}

std::vector<double> swapped_theta(const FactorModel& model, LabelId a, LabelId b) {
  const LabelGraph& g = model.graph();
  const int ia = g.desired_index(a);
  const int ib = g.desired_index(b);
  if (ia < 0 || ib < 0) throw std::invalid_argument("swapped_theta needs two desired labels");
  std::map<std::tuple<int, int, int, int>, std::size_t> where;
  const auto& deps = model.dependencies();
  for (std::size_t r = 0; r < deps.size(); ++r) {
    const Dependency& d = deps[r];
    if (d.family == Family::pseudo_accuracy || d.family == Family::desired_seen)
      where[{static_cast<int>(d.family), d.desired, d.seen, d.ilf}] = r;
  }
  std::vector<double> out = model.theta();
  for (std::size_t r = 0; r < deps.size(); ++r) {
    const Dependency& d = deps[r];
    if (d.family != Family::pseudo_accuracy && d.family != Family::desired_seen) continue;
    if (d.desired != ia && d.desired != ib) continue;
    const int partner = d.desired == ia ? ib : ia;
    auto it = where.find({static_cast<int>(d.family), partner, d.seen, d.ilf});
    if (it != where.end()) out[r] = model.theta()[it->second];
  }
  return out;
}

}  // namespace wisynth
