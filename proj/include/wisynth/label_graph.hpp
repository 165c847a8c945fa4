#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wisynth {

using LabelId = int;

enum class Role : std::uint8_t { desired, seen };

// Set semantics: relation(a, b) == subsuming means A strictly contains B.
enum class Relation : std::uint8_t { exclusive, overlapping, subsuming, subsumed };

inline constexpr std::array<Relation, 4> kAllRelations = {
    Relation::exclusive, Relation::overlapping, Relation::subsuming, Relation::subsumed};

constexpr Relation inverse(Relation r) noexcept {
  switch (r) {
    case Relation::subsuming: return Relation::subsumed;
    case Relation::subsumed: return Relation::subsuming;
    default: return r;
  }
}

const char* to_string(Relation r) noexcept;
const char* to_string(Role r) noexcept;
Relation relation_from_string(const std::string& s);
Role role_from_string(const std::string& s);

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Label {
  LabelId id = 0;
  std::string name;
  Role role = Role::seen;
};

struct RelationEdge {
  LabelId a = 0;
  LabelId b = 0;
  Relation type = Relation::exclusive;
};

/// Typed relation graph over desired (unseen) and seen labels.
///
/// Every pair of distinct labels carries exactly one relation. Pairs are
/// stored once, oriented lower id first; querying the other orientation
/// returns the inverse. Desired labels must be pairwise exclusive
/// (multi-class target task). Immutable after construction.
class LabelGraph {
 public:
  LabelGraph() = default;

  /// Throws GraphError if ids are not 0..K-1 in order, a pair is missing or
  /// contradicted, a self-relation is given, or two desired labels are not
  /// exclusive.
  LabelGraph(std::vector<Label> labels, std::span<const RelationEdge> relations);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<Label>& labels() const noexcept { return labels_; }
  const Label& label(LabelId id) const;
  std::optional<LabelId> find(const std::string& name) const;
  LabelId id_of(const std::string& name) const;
  bool contains(LabelId id) const noexcept { return id >= 0 && static_cast<std::size_t>(id) < labels_.size(); }

  /// Desired labels in ascending id order.
  const std::vector<LabelId>& desired() const noexcept { return desired_; }
  /// Seen labels in ascending id order; position in this vector is the seen index.
  const std::vector<LabelId>& seen() const noexcept { return seen_; }
  /// Position of a desired/seen label in desired()/seen(), or -1.
  int desired_index(LabelId id) const;
  int seen_index(LabelId id) const;

  Relation relation(LabelId a, LabelId b) const;

  /// All pairs a < b with their stored relation.
  std::vector<RelationEdge> edges() const;

 private:
  std::size_t pair_slot(LabelId a, LabelId b) const noexcept;

  std::vector<Label> labels_;
  std::vector<Relation> upper_;  // row-major strict upper triangle
  std::vector<LabelId> desired_;
  std::vector<LabelId> seen_;
  std::vector<int> role_index_;
};

/// {s in candidates | relation(y, s) != exclusive}, excluding y itself.
std::vector<LabelId> non_exclusive_neighbors(const LabelGraph& g, LabelId y,
                                             std::span<const LabelId> candidates);

// ---------------------------------------------------------------------------
// Consistency

using RelationTriplet = std::array<Relation, 3>;

/// Oriented (t_ab, t_bc, t_ac) triplets that no family of sets can realize.
const std::vector<RelationTriplet>& forbidden_triplets();

/// Index into forbidden_triplets(), or -1 when the triplet is realizable.
int forbidden_pattern_index(const RelationTriplet& t);

struct TripleViolation {
  std::array<LabelId, 3> labels{};  // a < b < c
  RelationTriplet relations{};      // (t_ab, t_bc, t_ac)
  int pattern = -1;                 // row of forbidden_triplets()
};

struct ConsistencyReport {
  bool consistent = true;
  std::vector<TripleViolation> violations;
};

ConsistencyReport check_consistency(const LabelGraph& g);

// ---------------------------------------------------------------------------
// Distinguishability

struct IndistinctPair {
  LabelId first = 0;
  LabelId second = 0;
  // Seen labels that would break the symmetry; left for the user to fill.
  std::vector<std::string> suggested_fixes;
};

struct DistinguishabilityReport {
  bool distinguishable = true;
  std::vector<IndistinctPair> indistinct_pairs;
};

/// Flags every desired pair whose relation vectors toward all seen labels match.
DistinguishabilityReport check_distinguishability(const LabelGraph& g);

// ---------------------------------------------------------------------------
// DAG import

struct DagEdge {
  std::string parent;
  std::string child;
};

/// Converts a label hierarchy into its unique label graph. Label ids follow
/// first appearance in `edges`, then remaining `roles` entries in the given
/// order. Each label is read as the set of its descendants (itself included).
/// Throws GraphError on cycles or labels without a role.
LabelGraph from_dag(std::span<const DagEdge> edges,
                    std::span<const std::pair<std::string, Role>> roles);

}  // namespace wisynth
