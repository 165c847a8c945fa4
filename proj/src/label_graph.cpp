#include "wisynth/label_graph.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include "wisynth/ilf.hpp"

namespace wisynth {

const char* to_string(Relation r) noexcept {
  switch (r) {
    case Relation::exclusive: return "exclusive";
    case Relation::overlapping: return "overlapping";
    case Relation::subsuming: return "subsuming";
    case Relation::subsumed: return "subsumed";
  }
  return "?";
}

const char* to_string(Role r) noexcept { return r == Role::desired ? "desired" : "seen"; }

Relation relation_from_string(const std::string& s) {
  for (Relation r : kAllRelations)
    if (s == to_string(r)) return r;
  throw GraphError("unknown relation type '" + s + "'");
}

Role role_from_string(const std::string& s) {
  if (s == "desired") return Role::desired;
  if (s == "seen") return Role::seen;
  throw GraphError("unknown label role '" + s + "'");
}

// ---------------------------------------------------------------------------

LabelGraph::LabelGraph(std::vector<Label> labels, std::span<const RelationEdge> relations)
    : labels_(std::move(labels)) {
  const std::size_t k = labels_.size();
  role_index_.assign(k, -1);
  std::unordered_map<std::string, LabelId> names;
  for (std::size_t i = 0; i < k; ++i) {
    const Label& l = labels_[i];
    if (l.id != static_cast<LabelId>(i))
      throw GraphError("label ids must be contiguous from 0; got " + std::to_string(l.id) +
                       " at position " + std::to_string(i));
    if (!names.emplace(l.name, l.id).second) throw GraphError("duplicate label name '" + l.name + "'");
    auto& group = l.role == Role::desired ? desired_ : seen_;
    role_index_[i] = static_cast<int>(group.size());
    group.push_back(l.id);
  }

  upper_.assign(k * (k - (k > 0 ? 1 : 0)) / 2, Relation::exclusive);
  std::vector<bool> seen_pair(upper_.size(), false);
  for (const RelationEdge& e : relations) {
    if (!contains(e.a) || !contains(e.b))
      throw GraphError("relation references unknown label id " +
                       std::to_string(contains(e.a) ? e.b : e.a));
    if (e.a == e.b) throw GraphError("self-relation on label '" + labels_[e.a].name + "'");
    const Relation stored = e.a < e.b ? e.type : inverse(e.type);
    const std::size_t slot = pair_slot(std::min(e.a, e.b), std::max(e.a, e.b));
    if (seen_pair[slot] && upper_[slot] != stored)
      throw GraphError("contradictory relations for pair (" + labels_[e.a].name + ", " +
                       labels_[e.b].name + ")");
    seen_pair[slot] = true;
    upper_[slot] = stored;
  }
  for (LabelId a = 0; a < static_cast<LabelId>(k); ++a)
    for (LabelId b = a + 1; b < static_cast<LabelId>(k); ++b)
      if (!seen_pair[pair_slot(a, b)])
        throw GraphError("missing relation for pair (" + labels_[a].name + ", " + labels_[b].name + ")");

  for (std::size_t i = 0; i < desired_.size(); ++i)
    for (std::size_t j = i + 1; j < desired_.size(); ++j)
      if (relation(desired_[i], desired_[j]) != Relation::exclusive)
        throw GraphError("desired labels '" + labels_[desired_[i]].name + "' and '" +
                         labels_[desired_[j]].name + "' must be exclusive");
}

std::size_t LabelGraph::pair_slot(LabelId a, LabelId b) const noexcept {
  // a < b; rows of the strict upper triangle laid out back to back.
  const std::size_t k = labels_.size();
  const auto ua = static_cast<std::size_t>(a);
  return ua * (2 * k - ua - 1) / 2 + static_cast<std::size_t>(b - a - 1);
}

const Label& LabelGraph::label(LabelId id) const {
  if (!contains(id)) throw GraphError("unknown label id " + std::to_string(id));
  return labels_[id];
}

std::optional<LabelId> LabelGraph::find(const std::string& name) const {
  for (const Label& l : labels_)
    if (l.name == name) return l.id;
  return std::nullopt;
}

LabelId LabelGraph::id_of(const std::string& name) const {
  if (auto id = find(name)) return *id;
  throw GraphError("unknown label '" + name + "'");
}

int LabelGraph::desired_index(LabelId id) const {
  return contains(id) && labels_[id].role == Role::desired ? role_index_[id] : -1;
}

int LabelGraph::seen_index(LabelId id) const {
  return contains(id) && labels_[id].role == Role::seen ? role_index_[id] : -1;
}

Relation LabelGraph::relation(LabelId a, LabelId b) const {
  if (!contains(a) || !contains(b))
    throw GraphError("unknown label id " + std::to_string(contains(a) ? b : a));
  if (a == b) throw GraphError("relation of a label to itself is undefined");
  return a < b ? upper_[pair_slot(a, b)] : inverse(upper_[pair_slot(b, a)]);
}

std::vector<RelationEdge> LabelGraph::edges() const {
  std::vector<RelationEdge> out;
  out.reserve(upper_.size());
  for (LabelId a = 0; a < static_cast<LabelId>(size()); ++a)
    for (LabelId b = a + 1; b < static_cast<LabelId>(size()); ++b)
      out.push_back({a, b, upper_[pair_slot(a, b)]});
  return out;
}

std::vector<LabelId> non_exclusive_neighbors(const LabelGraph& g, LabelId y,
                                             std::span<const LabelId> candidates) {
  if (!g.contains(y)) throw GraphError("unknown label id " + std::to_string(y));
  std::vector<LabelId> out;
  for (LabelId s : candidates) {
    if (!g.contains(s)) throw GraphError("unknown label id " + std::to_string(s));
    if (s != y && g.relation(y, s) != Relation::exclusive) out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------

const std::vector<RelationTriplet>& forbidden_triplets() {
  using enum Relation;
  static const std::vector<RelationTriplet> table = {
      {overlapping, subsumed, subsuming},
      {overlapping, subsumed, exclusive},
      {overlapping, subsuming, subsumed},
      {overlapping, exclusive, subsumed},

      {exclusive, subsumed, subsuming},
      {exclusive, overlapping, subsuming},
      {exclusive, subsuming, subsuming},
      {exclusive, subsuming, subsumed},
      {exclusive, subsuming, overlapping},

      {subsuming, exclusive, subsumed},
      {subsuming, subsumed, exclusive},
      {subsuming, overlapping, subsumed},
      {subsuming, overlapping, exclusive},
      {subsuming, subsuming, exclusive},
      {subsuming, subsuming, subsumed},
      {subsuming, subsuming, overlapping},

      {subsumed, overlapping, subsuming},
      {subsumed, subsumed, exclusive},
      {subsumed, subsumed, subsuming},
      {subsumed, subsumed, overlapping},
      {subsumed, exclusive, subsuming},
      {subsumed, exclusive, subsumed},
      {subsumed, exclusive, overlapping},
  };
  return table;
}

int forbidden_pattern_index(const RelationTriplet& t) {
  const auto& table = forbidden_triplets();
  const auto it = std::find(table.begin(), table.end(), t);
  return it == table.end() ? -1 : static_cast<int>(it - table.begin());
}

ConsistencyReport check_consistency(const LabelGraph& g) {
  ConsistencyReport report;
  const auto k = static_cast<LabelId>(g.size());
  for (LabelId a = 0; a < k; ++a)
    for (LabelId b = a + 1; b < k; ++b) {
      const Relation ab = g.relation(a, b);
      for (LabelId c = b + 1; c < k; ++c) {
        const RelationTriplet t{ab, g.relation(b, c), g.relation(a, c)};
        if (int row = forbidden_pattern_index(t); row >= 0)
          report.violations.push_back({{a, b, c}, t, row});
      }
    }
  report.consistent = report.violations.empty();
  return report;
}

DistinguishabilityReport check_distinguishability(const LabelGraph& g) {
  DistinguishabilityReport report;
  const auto& desired = g.desired();
  for (std::size_t i = 0; i < desired.size(); ++i)
    for (std::size_t j = i + 1; j < desired.size(); ++j) {
      const bool same = std::all_of(g.seen().begin(), g.seen().end(), [&](LabelId s) {
        return g.relation(desired[i], s) == g.relation(desired[j], s);
      });
      if (same) report.indistinct_pairs.push_back({desired[i], desired[j], {}});
    }
  report.distinguishable = report.indistinct_pairs.empty();
  return report;
}

// ---------------------------------------------------------------------------

LabelGraph from_dag(std::span<const DagEdge> edges,
                    std::span<const std::pair<std::string, Role>> roles) {
  std::vector<std::string> names;
  std::unordered_map<std::string, int> index;
  auto intern = [&](const std::string& n) {
    auto [it, inserted] = index.emplace(n, static_cast<int>(names.size()));
    if (inserted) names.push_back(n);
    return it->second;
  };
  std::vector<std::pair<int, int>> arcs;
  for (const DagEdge& e : edges) {
    const int p = intern(e.parent);
    const int c = intern(e.child);
    if (p == c) throw GraphError("cycle: '" + e.parent + "' is its own child");
    arcs.emplace_back(p, c);
  }
  std::map<std::string, Role> role_of;
  for (const auto& [name, role] : roles) {
    intern(name);
    role_of[name] = role;
  }
  const std::size_t k = names.size();

  std::vector<std::vector<int>> children(k);
  std::vector<int> indegree(k, 0);
  for (auto [p, c] : arcs) {
    children[p].push_back(c);
    ++indegree[c];
  }
  // Kahn's algorithm; leftover nodes sit on a cycle.
  std::vector<int> order;
  std::vector<int> frontier;
  for (std::size_t v = 0; v < k; ++v)
    if (indegree[v] == 0) frontier.push_back(static_cast<int>(v));
  while (!frontier.empty()) {
    const int v = frontier.back();
    frontier.pop_back();
    order.push_back(v);
    for (int c : children[v])
      if (--indegree[c] == 0) frontier.push_back(c);
  }
  if (order.size() != k) {
    for (std::size_t v = 0; v < k; ++v)
      if (indegree[v] > 0) throw GraphError("cycle detected through label '" + names[v] + "'");
  }

  // desc[v][u]: u is v or a descendant of v.
  std::vector<std::vector<bool>> desc(k, std::vector<bool>(k, false));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int v = *it;
    desc[v][v] = true;
    for (int c : children[v])
      for (std::size_t u = 0; u < k; ++u)
        if (desc[c][u]) desc[v][u] = true;
  }

  std::vector<Label> labels;
  for (std::size_t v = 0; v < k; ++v) {
    auto r = role_of.find(names[v]);
    if (r == role_of.end()) throw GraphError("no role given for label '" + names[v] + "'");
    labels.push_back({static_cast<LabelId>(v), names[v], r->second});
  }
  std::vector<RelationEdge> rels;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      Relation t = Relation::exclusive;
      if (desc[a][b]) {
        t = Relation::subsuming;
      } else if (desc[b][a]) {
        t = Relation::subsumed;
      } else {
        for (std::size_t u = 0; u < k; ++u)
          if (desc[a][u] && desc[b][u]) {
            t = Relation::overlapping;
            break;
          }
      }
      rels.push_back({static_cast<LabelId>(a), static_cast<LabelId>(b), t});
    }
  return LabelGraph(std::move(labels), rels);
}

// ---------------------------------------------------------------------------

bool IlfSpec::emits(LabelId l) const noexcept {
  return std::find(output_space.begin(), output_space.end(), l) != output_space.end();
}

void validate_ilfs(const LabelGraph& g, std::span<const IlfSpec> ilfs) {
  for (const IlfSpec& f : ilfs) {
    const std::string who = "ILF " + std::to_string(f.ilf_id);
    if (f.output_space.empty()) throw GraphError(who + " has an empty output space");
    std::vector<LabelId> sorted = f.output_space;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw GraphError(who + " lists a label twice");
    for (LabelId l : f.output_space) {
      if (!g.contains(l)) throw GraphError(who + " references unknown label id " + std::to_string(l));
      if (g.label(l).role != Role::seen)
        throw GraphError(who + " outputs desired label '" + g.label(l).name + "'");
    }
  }
}

void IlfOutputMatrix::push_row(std::span<const LabelId> r) {
  if (rows_ == 0 && cols_ == 0) cols_ = r.size();
  if (r.size() != cols_) throw std::invalid_argument("row width does not match matrix");
  data_.insert(data_.end(), r.begin(), r.end());
  ++rows_;
}

void validate_outputs(std::span<const IlfSpec> ilfs, const IlfOutputMatrix& outputs) {
  if (outputs.rows() > 0 && outputs.cols() != ilfs.size())
    throw std::invalid_argument("output matrix has " + std::to_string(outputs.cols()) +
                                " columns but " + std::to_string(ilfs.size()) + " ILFs are declared");
  for (std::size_t i = 0; i < outputs.rows(); ++i)
    for (std::size_t j = 0; j < outputs.cols(); ++j) {
      const LabelId v = outputs.at(i, j);
      if (v == kAbstain) {
        if (!ilfs[j].can_abstain)
          throw std::invalid_argument("ILF " + std::to_string(ilfs[j].ilf_id) +
                                      " abstains at row " + std::to_string(i) + " but cannot abstain");
      } else if (!ilfs[j].emits(v)) {
        throw std::invalid_argument("label " + std::to_string(v) + " at row " + std::to_string(i) +
                                    " is outside the output space of ILF " +
                                    std::to_string(ilfs[j].ilf_id));
      }
    }
}

std::vector<InformativenessReport> check_informativeness(const LabelGraph& g,
                                                         std::span<const IlfSpec> ilfs,
                                                         const IlfOutputMatrix* outputs) {
  if (outputs) validate_outputs(ilfs, *outputs);
  std::vector<InformativenessReport> reports;
  for (std::size_t j = 0; j < ilfs.size(); ++j) {
    const IlfSpec& f = ilfs[j];
    InformativenessReport r;
    r.ilf_id = f.ilf_id;
    for (LabelId y : g.desired()) {
      const bool has_exclusive = std::any_of(f.output_space.begin(), f.output_space.end(),
                                             [&](LabelId s) { return g.relation(y, s) == Relation::exclusive; });
      if (!has_exclusive) r.structurally_uninformative_for.push_back(y);
    }
    r.structural = r.structurally_uninformative_for.empty();
    if (outputs) {
      for (LabelId y : g.desired()) {
        bool escapes = false;
        for (std::size_t i = 0; i < outputs->rows() && !escapes; ++i) {
          const LabelId v = outputs->at(i, j);
          escapes = v == kAbstain || g.relation(y, v) == Relation::exclusive;
        }
        if (!escapes) r.empirically_uninformative_for.push_back(y);
      }
      r.empirical = r.empirically_uninformative_for.empty();
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace wisynth
