#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wisynth/ilf.hpp"
#include "wisynth/label_graph.hpp"

namespace wisynth {

enum class Family : std::uint8_t { pseudo_accuracy, accuracy, seen_seen, desired_seen };
enum class ModelKind : std::uint8_t { plrm, wslg };

const char* to_string(Family f) noexcept;
const char* to_string(ModelKind k) noexcept;
Family family_from_string(const std::string& s);
ModelKind model_kind_from_string(const std::string& s);

/// One factor of the log-linear model. Indices are positions: `desired` into
/// graph.desired(), `seen`/`seen2` into graph.seen(), `ilf` into the ILF list.
/// `label` caches the seen label id compared against an ILF vote.
struct Dependency {
  Family family = Family::pseudo_accuracy;
  int desired = -1;
  int seen = -1;
  int seen2 = -1;
  int ilf = -1;
  LabelId label = kAbstain;
  Relation relation = Relation::exclusive;

  bool operator==(const Dependency&) const = default;
};

/// Full configuration (Y, Ybar, votes). `y` is a desired index, or the
/// desired count for the unknown class.
struct Assignment {
  int y = 0;
  std::vector<std::uint8_t> y_bar;
  std::vector<LabelId> lambda;

  bool operator==(const Assignment&) const = default;
};

struct BuildOptions {
  bool include_unknown = true;
  // Ablation switch for the first PLRM family; ignored by WS-LG.
  bool pseudo_accuracy = true;
  double theta_init = 0.1;
};

class FactorModel {
 public:
  FactorModel(ModelKind kind, std::shared_ptr<const LabelGraph> graph, std::vector<IlfSpec> ilfs,
              std::vector<Dependency> deps, bool include_unknown, double theta_init);

  ModelKind kind() const noexcept { return kind_; }
  const LabelGraph& graph() const noexcept { return *graph_; }
  const std::shared_ptr<const LabelGraph>& graph_ptr() const noexcept { return graph_; }
  const std::vector<IlfSpec>& ilfs() const noexcept { return ilfs_; }
  const std::vector<Dependency>& dependencies() const noexcept { return deps_; }
  std::size_t size() const noexcept { return deps_.size(); }

  const std::vector<double>& theta() const noexcept { return theta_; }
  void set_theta(std::vector<double> theta);
  std::vector<double>& mutable_theta() noexcept { return theta_; }

  bool include_unknown() const noexcept { return include_unknown_; }
  int desired_count() const noexcept { return static_cast<int>(graph_->desired().size()); }
  /// Size of Y's domain: desired labels plus the optional unknown class.
  int y_cardinality() const noexcept { return desired_count() + (include_unknown_ ? 1 : 0); }
  int unknown_index() const noexcept { return include_unknown_ ? desired_count() : -1; }
  /// Number of latent seen-label bits; zero for WS-LG.
  int latent_count() const noexcept { return latent_count_; }
  std::size_t ilf_count() const noexcept { return ilfs_.size(); }

  /// Values ILF j can take: its output space, then kAbstain when allowed.
  const std::vector<LabelId>& ilf_domain(std::size_t j) const { return domains_[j]; }

  // Dependencies touching each variable; drive single-site conditionals.
  const std::vector<int>& deps_on_y() const noexcept { return on_y_; }
  const std::vector<int>& deps_on_latent(std::size_t i) const { return on_latent_[i]; }
  const std::vector<int>& deps_on_ilf(std::size_t j) const { return on_ilf_[j]; }

  /// Throws std::invalid_argument when `a` does not fit this model.
  void validate(const Assignment& a) const;

  /// Number of dependencies in each family, in Family order.
  std::array<std::size_t, 4> family_counts() const;

 private:
  ModelKind kind_;
  std::shared_ptr<const LabelGraph> graph_;
  std::vector<IlfSpec> ilfs_;
  std::vector<Dependency> deps_;
  std::vector<double> theta_;
  bool include_unknown_;
  int latent_count_;
  std::vector<std::vector<LabelId>> domains_;
  std::vector<int> on_y_;
  std::vector<std::vector<int>> on_latent_;
  std::vector<std::vector<int>> on_ilf_;
};

/// Builds the PLRM. Dependencies are ordered by family, then desired index,
/// then seen index, then ILF index:
///   1. pseudo-accuracy (y, s, j) for s in N(y, outputs of j)
///   2. accuracy (s, j) for s in outputs of j
///   3. one relation factor per seen pair i < j
///   4. one relation factor per (desired y, seen s)
/// Throws GraphError on an inconsistent graph or invalid ILFs.
FactorModel build_plrm(const LabelGraph& graph, std::vector<IlfSpec> ilfs, const BuildOptions& opts = {});

/// Baseline with pseudo-accuracy factors only and no latent seen bits.
FactorModel build_wslg(const LabelGraph& graph, std::vector<IlfSpec> ilfs, const BuildOptions& opts = {});

/// Relation factor on two memberships: exclusive -[l & r], overlapping +[l & r],
/// subsuming -[!l & r], subsumed -[l & !r].
constexpr int relation_factor(Relation t, bool left, bool right) noexcept {
  switch (t) {
    case Relation::exclusive: return -static_cast<int>(left && right);
    case Relation::overlapping: return static_cast<int>(left && right);
    case Relation::subsuming: return -static_cast<int>(!left && right);
    case Relation::subsumed: return -static_cast<int>(left && !right);
  }
  return 0;
}

/// Value in {-1, 0, 1}. Abstentions never activate a factor.
int factor_value(const Dependency& dep, const Assignment& a) noexcept;

std::vector<int> feature_vector(const FactorModel& model, const Assignment& a);

/// theta . Phi(a)
double log_unnormalized(const FactorModel& model, const Assignment& a);
double log_unnormalized(const FactorModel& model, std::span<const double> theta, const Assignment& a);

/// Theta with the blocks of desired labels `a` and `b` exchanged: desired-seen
/// weights (a, s) <-> (b, s) and pseudo-accuracy weights (a, s, j) <-> (b, s, j)
/// wherever both partners exist. Everything else is copied.
std::vector<double> swapped_theta(const FactorModel& model, LabelId a, LabelId b);

}  // namespace wisynth
